#!/usr/bin/env python3
"""Run the full battery of studies and write one CSV per study.

This is the scripted equivalent of a handful of `bmofem run` invocations;
edit the CONFIGS list to explore other fixtures or exponents.
"""

import argparse
import pathlib
import time

from bmofem.harness import config_from_dict, run_study

CONFIGS = [
    # a priori stability of the gradient norm for the unbounded fixture
    {"kind": "stability", "coeff": "log", "beta": 0.5, "rhs": "sin-cos",
     "p": 2.1, "levels": "2..6", "out": "stability_log_p2.1.csv"},
    # how fast the stability ratio degrades as |p - 2| grows
    {"kind": "stability", "coeff": "log", "beta": 1.0, "rhs": "sin-cos",
     "p": 3.0, "levels": "2..5", "out": "stability_log_p3.csv"},
    # strong convergence against a fine discrete reference
    {"kind": "convergence", "coeff": "checkerboard", "kappa": 100.0,
     "rhs": "sin-cos", "p": 2.0, "p_hat": 2.0, "levels": "2..5,7",
     "out": "convergence_checkerboard.csv"},
    {"kind": "convergence", "coeff": "log", "beta": 0.5, "rhs": "sin-cos",
     "p": 2.1, "p_hat": 2.0, "levels": "2..5,7", "out": "convergence_log.csv"},
    # piecewise constant approximation of the coefficient itself
    {"kind": "coeff-decay", "coeff": "smooth", "p": 2.0, "levels": "1..6",
     "out": "decay_smooth.csv"},
    {"kind": "coeff-decay", "coeff": "log", "beta": 0.5, "p": 2.0,
     "levels": "1..6", "out": "decay_log.csv"},
    # split quality for random piecewise constant fields
    {"kind": "hodge-suite", "p": 2.0, "levels": "1..4", "seed": 7,
     "out": "hodge_suite.csv"},
    {"kind": "hodge-suite", "p": 3.0, "levels": "1..4", "seed": 7,
     "out": "hodge_suite_p3.csv"},
    # oscillation diagnostics for the classical unbounded example
    {"kind": "bmo-diagnostics", "coeff": "log", "beta": 0.5, "levels": "2..4",
     "out": "bmo_log.csv"},
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="results", help="directory for the CSVs")
    args = parser.parse_args()
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    for data in CONFIGS:
        data = dict(data)
        data["out"] = str(outdir / data["out"])
        cfg = config_from_dict(data)
        start = time.perf_counter()
        report = run_study(cfg)
        elapsed = time.perf_counter() - start
        summary = ""
        if cfg.kind == "stability":
            summary = f"ratio spread {report.metadata['stability_ratio_max_over_min']:.4f}"
        elif cfg.kind == "convergence":
            orders = [r.order for r in report.rows if r.order is not None]
            summary = "orders " + ", ".join(f"{o:.3f}" for o in orders)
        elif cfg.kind == "coeff-decay":
            summary = "errors " + ", ".join(f"{r.coeff_err_l2:.3e}" for r in report.rows)
        elif cfg.kind == "hodge-suite":
            summary = "worst split ratio " + ", ".join(
                f"{r.stability_ratio:.3f}" for r in report.rows
            )
        elif cfg.kind == "bmo-diagnostics":
            summary = f"seminorm estimate {report.metadata['seminorm_by_depth'][-1]:.5f}"
        print(f"{data['out']}: {summary}  [{elapsed:.1f}s]")


if __name__ == "__main__":
    main()
