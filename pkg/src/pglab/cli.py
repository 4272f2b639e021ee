"""Command-line entry point.

Subcommands: ``toy`` (two-mode drift experiment), ``sweep``
(hyperparameter grid), ``metrics`` (color statistics over an image
directory), ``selftest`` (fast invariant suite).  Exit codes are
machine-parsable: 0 success, 1 validation error, 2 runtime failure.
The PG_LAB_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import build_config, load_config_file
from .errors import ContractError, DegenerateBandwidthError, SamplingError
from .experiments import _write_csv, run_sweep, run_toy
from .metrics import batch_color_report, kde, load_image, rgb_to_hsv
from .svgplot import Series, line_plot

log = logging.getLogger("pglab")

_KDE_POOL_CAP = 65536


def _configure_logging():
    name = os.environ.get("PG_LAB_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


class _Parser(argparse.ArgumentParser):
    # bad usage is a validation error: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_run_flags(parser):
    parser.add_argument("--config", default=None, metavar="PATH",
                        help="key = value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker threads (default: available parallelism)")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pglab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    toy = sub.add_parser("toy", help="run the two-mode drift experiment")
    _add_run_flags(toy)
    toy.set_defaults(func=cmd_toy)

    sweep = sub.add_parser("sweep", help="grid strategies over hyperparameters")
    _add_run_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    met = sub.add_parser("metrics", help="color statistics for an image directory")
    met.add_argument("directory", help="directory of images")
    met.add_argument("--glob", default="*.png", help="filename pattern (default *.png)")
    met.add_argument("--out", default=".", metavar="DIR", help="output directory")
    met.add_argument("--jobs", type=int, default=None,
                     help="worker threads for image loading")
    met.add_argument("--kde", action="store_true",
                     help="also write per-channel density curves as SVG")
    met.set_defaults(func=cmd_metrics)

    self_p = sub.add_parser("selftest", help="run the invariant suite")
    self_p.set_defaults(func=cmd_selftest)
    return parser


def _resolve_config(args):
    raw = load_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "output_dir": args.out}
    return build_config(raw, overrides)


def _report_outcomes(report):
    for outcome in report.outcomes:
        if outcome.summary is None:
            print(f"{outcome.label}: every trajectory failed")
            continue
        line = (
            f"{outcome.label}: mean nearest-mode distance "
            f"{outcome.summary.mean_distance:.6g} over {outcome.summary.count} samples"
        )
        if outcome.failed_count:
            line += f" ({outcome.failed_count} failed)"
        print(line)
    print(f"manifest: {report.manifest_path}")
    if report.failure_fraction > 0.01:
        print(
            f"error: {report.failed_total} of {report.sample_total} "
            "trajectories failed (above the 1% budget)",
            file=sys.stderr,
        )
        return 2
    return 0


def cmd_toy(args) -> int:
    report = run_toy(_resolve_config(args), jobs=args.jobs)
    return _report_outcomes(report)


def cmd_sweep(args) -> int:
    report = run_sweep(_resolve_config(args), jobs=args.jobs)
    return _report_outcomes(report)


def _load_images(paths, jobs=None):
    """Decode images concurrently; unreadable ones are skipped and counted."""
    if jobs is None:
        jobs = min(os.cpu_count() or 1, 8)
    jobs = max(1, int(jobs))

    def try_load(path):
        try:
            return load_image(path)
        except ContractError as exc:
            log.warning("skipping %s: %s", path, exc)
            return None

    if jobs == 1 or len(paths) == 1:
        loaded = [try_load(p) for p in paths]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            loaded = list(pool.map(try_load, paths))
    images = [img for img in loaded if img is not None]
    labels = [str(p) for p, img in zip(paths, loaded) if img is not None]
    return images, labels, len(paths) - len(images)


def _pooled_channels(images):
    """Pooled per-channel pixel values, strided down to a workable count."""
    channels = {
        "red": [], "green": [], "blue": [], "saturation": [],
    }
    for img in images:
        channels["red"].append(img.pixels[..., 0].ravel())
        channels["green"].append(img.pixels[..., 1].ravel())
        channels["blue"].append(img.pixels[..., 2].ravel())
        channels["saturation"].append(rgb_to_hsv(img.pixels)[..., 1].ravel())
    out = {}
    for name, parts in channels.items():
        values = np.concatenate(parts)
        if len(values) > _KDE_POOL_CAP:
            keep = np.linspace(0, len(values) - 1, _KDE_POOL_CAP).astype(np.int64)
            values = values[keep]
        out[name] = values
    return out


def cmd_metrics(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise ContractError(f"metrics: no such directory: {directory}")
    paths = sorted(directory.glob(args.glob))
    if not paths:
        raise ContractError(
            f"metrics: no files match {args.glob!r} under {directory}"
        )
    images, labels, skipped = _load_images(paths, jobs=args.jobs)
    if not images:
        raise ContractError(f"metrics: no readable images under {directory}")
    report = batch_color_report(images, labels)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "color_report.csv"
    rows = list(report.rows) + [
        ("aggregate", report.mean_saturation, report.mean_contrast)
    ]
    _write_csv(table, ["image", "mean_saturation", "rms_contrast"], rows)
    print(
        f"{len(report.rows)} images: mean saturation "
        f"{report.mean_saturation:.6g}, mean RMS contrast {report.mean_contrast:.6g}"
        + (f" ({skipped} skipped)" if skipped else "")
    )
    print(f"report: {table}")

    if args.kde:
        series = []
        for name, values in _pooled_channels(images).items():
            try:
                estimate = kde(values)
            except (ContractError, DegenerateBandwidthError) as exc:
                log.warning("kde: skipping %s channel: %s", name, exc)
                continue
            series.append(Series(label=name, x=estimate.grid, y=estimate.density))
        if series:
            curve_path = out / "color_kde.svg"
            line_plot(
                series, curve_path,
                title="pooled pixel-value densities",
                xlabel="value", ylabel="density",
            )
            print(f"kde curves: {curve_path}")
        else:
            log.warning("kde: no channel produced a usable curve; SVG skipped")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest()
    return 0 if failures == 0 else 2


def entry(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SamplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(entry())
