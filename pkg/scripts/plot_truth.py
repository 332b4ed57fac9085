"""Draw simulated ground-truth trajectories and one scan of measurements as SVG.

    python scripts/plot_truth.py --seed 0 --out truth.svg
"""
import argparse
from xml.sax.saxutils import escape

import numpy as np

from mmpmbm.plotting import PALETTE
from mmpmbm.simulator import generate_measurements, generate_truth, default_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pd", type=float, default=0.95)
    p.add_argument("--step", type=int, default=20, help="scan to overlay")
    p.add_argument("--out", default="truth.svg")
    args = p.parse_args()

    cfg = default_scenario()
    truth = generate_truth(cfg, args.seed)
    (x0, x1), (y0, y1) = cfg.region
    size, pad = 600, 40
    sx = lambda x: pad + (x - x0) / (x1 - x0) * size
    sy = lambda y: pad + size - (y - y0) / (y1 - y0) * size

    tracks = {}
    for ids, states in zip(truth.ids, truth.states):
        for tid, x in zip(ids, states):
            tracks.setdefault(int(tid), []).append((x[0], x[2]))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * pad}" height="{size + 2 * pad}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="white" stroke="black"/>']
    for tid, pts in sorted(tracks.items()):
        color = PALETTE[tid % len(PALETTE)]
        line = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<circle cx="{sx(pts[0][0]):.1f}" cy="{sy(pts[0][1]):.1f}" r="4" fill="{color}"/>')
        out.append(f'<text x="{sx(pts[0][0]) + 6:.1f}" y="{sy(pts[0][1]) - 6:.1f}">{escape(f"target {tid + 1}")}</text>')
    Z = generate_measurements(truth.states[args.step - 1], cfg.meas, args.pd, np.random.default_rng(args.seed))
    for z in Z:
        out.append(f'<circle cx="{sx(z[0]):.1f}" cy="{sy(z[1]):.1f}" r="2" fill="#555"/>')
    out.append(f'<text x="{pad}" y="{pad - 12}">truth, seed {args.seed}; grey: scan k={args.step}</text>')
    out.append("</svg>")
    with open(args.out, "w") as fh:
        fh.write("\n".join(out) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
