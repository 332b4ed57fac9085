"""Profile one filter run of the default scenario.

    python scripts/profile_run.py --pd 0.6 --top 25
"""
import argparse
import cProfile
import pstats

from mmpmbm.simulator import default_scenario, run_seed, run_single


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pd", type=float, default=0.95)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--top", type=int, default=20)
    args = p.parse_args()
    cfg = default_scenario()
    seed = run_seed(cfg.rng_seed, args.run)
    run_single(cfg, args.pd, args.sigma, seed)  # warm the compiled kernels
    prof = cProfile.Profile()
    res = prof.runcall(run_single, cfg, args.pd, args.sigma, seed)
    print(f"run {args.run}: {res.elapsed:.2f} s, mean OSPA {res.ospa.mean():.2f}, error {res.error}")
    pstats.Stats(prof).sort_stats("cumulative").print_stats(args.top)


if __name__ == "__main__":
    main()
