"""Mean OSPA against measurement noise at p_D 0.60 and 0.95.

    python scripts/run_noise_sweep.py --runs 100 --out results/noise_sweep
"""
import argparse
import sys

from mmpmbm.cli import run_cli


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="results/noise_sweep")
    args = p.parse_args()
    argv = ["--mode", "sweep-noise", "--runs", str(args.runs), "--seed", str(args.seed), "--out", args.out, "-v"]
    if args.config:
        argv += ["--config", args.config]
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
