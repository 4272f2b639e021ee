"""Shrunk end-to-end run of the two-mode drift experiment.

Builds a small configuration in memory, runs every strategy through the
library runner, and prints the drift table that lands in
drift_summary.csv.  The full-size version of this is `pglab toy`.
"""

import argparse

from pglab.config import build_config
from pglab.experiments import run_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="toy_demo_out", help="output directory")
    ap.add_argument("--samples", type=int, default=256)
    args = ap.parse_args()

    cfg = build_config({
        "dimension": "16",
        "steps": "8",
        "rule": "euler",
        "strategies": "none cfg:scale=3 apg:scale=3",
        "sample_count": str(args.samples),
        "seed": "11",
    }, {"output_dir": args.out})

    report = run_toy(cfg)

    print(f"{args.samples} trajectories per strategy, dimension 16, 8 steps")
    print()
    width = max(len(o.label) for o in report.outcomes)
    print(f"{'strategy':<{width}}  mean dist  in sigma  3-sigma frac  radius")
    for outcome in report.outcomes:
        s = outcome.summary
        radius = "" if outcome.calibrated_radius is None \
            else f"{outcome.calibrated_radius:8.3f}"
        print(f"{outcome.label:<{width}}  {s.mean_distance:9.4f}  {s.mean_distance_in_sigma:8.3f}"
              f"  {s.within_three_sigma_fraction:12.3f}  {radius}")
    print()
    if report.failed_total:
        print(f"warning: {report.failed_total} of {report.sample_total} "
              "trajectories failed")
    print(f"artifacts in {report.output_dir}/ "
          f"(manifest: {report.manifest_path.name})")


if __name__ == "__main__":
    main()
