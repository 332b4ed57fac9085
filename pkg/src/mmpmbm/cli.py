"""Command-line entry point: ``mmpmbm --config FILE --mode sweep-pd --runs 100``.

Outputs go to ``--out`` (default from the config):

* ``trace.csv``: one row per cell, run and step with columns
  ``run, step, ospa, card_est, card_true, pd, sigma_eps, seed``
* ``table.csv``: mean OSPA per cell in the sweep's table layout
* ``summary.json``: aggregates, per-run failures and timing
* ``ospa.svg``, ``cardinality.svg``: per-step means against time

Exit status is 0 on success (even if some runs failed; they are listed in
``summary.json``), 2 on configuration errors and 1 on other failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import MODES, RunConfig, bundled_config_path, load_config, with_overrides
from .errors import ConfigurationError
from .plotting import line_chart
from .simulator import CampaignResult, run_monte_carlo, sweep_cells

log = logging.getLogger("mmpmbm")

TRACE_COLUMNS = ("run", "step", "ospa", "card_est", "card_true", "pd", "sigma_eps", "seed")


def _num(v: float, digits: int = 6) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.{digits}f}"


def trace_csv(campaign: CampaignResult) -> str:
    order = {cell: i for i, cell in enumerate(campaign.cells)}
    rows = sorted(campaign.results, key=lambda r: (order[(r.p_detect, r.sigma_eps)], r.run))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rows:
        for k in range(len(r.ospa)):
            w.writerow([r.run, k + 1, _num(r.ospa[k]), int(r.card_est[k]), int(r.card_true[k]),
                        f"{r.p_detect:.2f}", _num(r.sigma_eps, 2), r.seed])
    return buf.getvalue()


def table_rows(campaign: CampaignResult, mode: str) -> tuple[list, list]:
    """Header and rows of the aggregate mean-OSPA table.

    ``sweep-pd`` has one column per detection probability; ``sweep-noise``
    one column per noise level and one row per detection probability.
    """
    name = campaign.filter_name.upper()
    sums = {(s.p_detect, s.sigma_eps): s for s in campaign.summaries()}
    if mode == "sweep-noise":
        sigmas = sorted({s for _, s in campaign.cells})
        pds = sorted({p for p, _ in campaign.cells})
        header = ["filter", "p_D"] + [f"{s:g}" for s in sigmas]
        rows = [[name, f"{pd:.2f}"] + [_num(sums[(pd, s)].mean_ospa, 2) for s in sigmas] for pd in pds]
        return header, rows
    header = ["filter", "sigma_eps"] + [f"{pd:.2f}" for pd, _ in campaign.cells]
    sigma = campaign.cells[0][1]
    if len({s for _, s in campaign.cells}) > 1:
        header = ["filter"] + [f"pd={pd:.2f},sigma={s:g}" for pd, s in campaign.cells]
        return header, [[name] + [_num(sums[c].mean_ospa, 2) for c in campaign.cells]]
    return header, [[name, f"{sigma:g}"] + [_num(sums[c].mean_ospa, 2) for c in campaign.cells]]


def format_table(header, rows) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows])


def summary_json(cfg: RunConfig, campaign: CampaignResult) -> dict:
    return {
        "config": cfg.source,
        "mode": cfg.mode,
        "filter": campaign.filter_name,
        "seed": cfg.scenario.rng_seed,
        "runs": cfg.scenario.num_runs,
        "ospa": {"cutoff": cfg.ospa.cutoff, "order": cfg.ospa.order},
        "cells": [
            {
                "p_detect": s.p_detect,
                "sigma_eps": s.sigma_eps,
                "mean_ospa": None if not np.isfinite(s.mean_ospa) else s.mean_ospa,
                "runs_ok": s.runs_ok,
                "runs_failed": s.runs_failed,
                "ospa_per_step": [float(v) for v in s.ospa_per_step],
                "card_est_per_step": [float(v) for v in s.card_est_per_step],
                "card_true_per_step": [float(v) for v in s.card_true_per_step],
            }
            for s in campaign.summaries()
        ],
        "failures": campaign.failures(),
        "timing": campaign.timing(),
    }


def _label(s) -> str:
    return f"pD={s.p_detect:.2f}, s={s.sigma_eps:g}"


def plots(campaign: CampaignResult) -> dict[str, str]:
    sums = [s for s in campaign.summaries() if s.runs_ok]
    if not sums:
        return {}
    steps = np.arange(1, len(sums[0].ospa_per_step) + 1)
    ospa_svg = line_chart(
        [(_label(s), steps, s.ospa_per_step) for s in sums],
        "Mean OSPA", "time step", "OSPA (m)",
    )
    card = [("truth", steps, sums[0].card_true_per_step)] + [(_label(s), steps, s.card_est_per_step) for s in sums]
    card_svg = line_chart(card, "Mean cardinality", "time step", "number of targets")
    return {"ospa.svg": ospa_svg, "cardinality.svg": card_svg}


def write_outputs(cfg: RunConfig, campaign: CampaignResult, out: Path) -> list[Path]:
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    header, rows = table_rows(campaign, cfg.mode)
    if "csv" in cfg.output.formats:
        put("trace.csv", trace_csv(campaign))
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows([header] + rows)
        put("table.csv", buf.getvalue())
    if "json" in cfg.output.formats:
        put("summary.json", json.dumps(summary_json(cfg, campaign), indent=1) + "\n")
    if "svg" in cfg.output.formats:
        for name, svg in plots(campaign).items():
            put(name, svg)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmpmbm", description="Run MM-PMBM tracking experiments.")
    p.add_argument("--config", type=Path, default=None,
                   help=f"YAML run configuration (default: bundled {bundled_config_path().name})")
    p.add_argument("--mode", choices=MODES, default=None, help="override run.mode")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--runs", type=int, default=None, help="override run.runs")
    p.add_argument("--out", default=None, help="override output.directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = with_overrides(load_config(args.config), mode=args.mode, seed=args.seed,
                             runs=args.runs, out=args.out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.mode == "validate-config":
        print(f"config OK: {cfg.source} ({len(cfg.scenario.targets)} targets, "
              f"{cfg.scenario.jms.num_models} models, {cfg.scenario.num_runs} runs)")
        return 0

    out = Path(cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"config error: output.directory: {out} is not writable ({exc.strerror})", file=sys.stderr)
        return 2

    def progress(done, total):
        log.info("run %d/%d done", done, total)

    try:
        campaign = run_monte_carlo(
            cfg.scenario, sweep_cells(cfg.scenario, cfg.mode), cfg.filter, cfg.ospa,
            filter_name=cfg.filter_name, workers=cfg.workers, progress=progress,
        )
        write_outputs(cfg, campaign, out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    header, rows = table_rows(campaign, cfg.mode)
    print(f"Mean OSPA (c={cfg.ospa.cutoff:g}, p={cfg.ospa.order:g}) over {cfg.scenario.num_runs} runs")
    print(format_table(header, rows))
    failures = campaign.failures()
    if failures:
        print(f"{len(failures)} run(s) failed; see {out / 'summary.json'}")
    print(f"outputs written to {out}")
    return 0


def main() -> None:
    sys.exit(run_cli())
