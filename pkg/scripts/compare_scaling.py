"""Run the lattice and iid scaling studies side by side and print the fits.

Usage: python3 scripts/compare_scaling.py [--jobs N] [--out DIR]
Artifacts (results.csv, report.json, scaling.svg) land under --out per family.
"""

import argparse
import os

from hyperwass.cli import run_experiment
from hyperwass.config import load_config

CONFIGS = ("lattice_r04.ini", "binomial_iid.ini")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="out")
    args = ap.parse_args()

    here = os.path.dirname(os.path.abspath(__file__))
    for name in CONFIGS:
        cfg = load_config(os.path.join(here, "configs", name))
        cfg.directory = os.path.join(args.out, os.path.splitext(name)[0])
        report = run_experiment(cfg, jobs=args.jobs)
        for run in report["runs"]:
            slope = run["slope"]
            logfit = run["log_correction"]
            print(f"{run['family']:>17} p={run['p']:g}: "
                  f"slope {slope['slope']:.3f} "
                  f"ci95 [{slope['ci_low']:.3f}, {slope['ci_high']:.3f}] "
                  f"preferred model {logfit['preferred']}")
        print(f"{'':>17}  artifacts in {cfg.directory}")


if __name__ == "__main__":
    main()
