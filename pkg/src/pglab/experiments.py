"""Batch experiment runners and their on-disk artifacts.

``run_toy`` samples every configured strategy against the two-mode
mixture and writes terminal samples, drift summaries, scatter plots, and
a manifest.  ``run_sweep`` grids strategies over hyperparameter lists
and plots mean mode distance against the guidance scale.  All numeric
output uses shortest round-trip decimals so that byte-identical files
certify identical numbers.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import AUTO_RADIUS, ExperimentConfig, StrategySpec, parse_config_text
from .errors import ContractError
from .mixture import GaussianMixture, denoiser_cond, denoiser_uncond
from .sampler import (
    BatchResult,
    ModeDriftSummary,
    SigmaSchedule,
    mode_drift,
    nearest_mode,
    run_batch,
)
from .svgplot import Series, line_plot, scatter_plot

CALIBRATION_ROWS = 128

HASH_ALGORITHM = "sha256"


def mixture_from_config(cfg: ExperimentConfig) -> GaussianMixture:
    return GaussianMixture.symmetric_pair(
        cfg.dimension, cfg.mode_magnitude, cfg.component_sigma, cfg.weights
    )


def schedule_from_config(cfg: ExperimentConfig) -> SigmaSchedule:
    return SigmaSchedule(
        sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max, steps=cfg.steps, rho=cfg.rho
    )


def class_assignment(weights, count: int) -> np.ndarray:
    """Deterministic class labels in weight proportion.

    Trajectory i lands in the component whose cumulative-weight bin
    contains (i + 0.5) / count, so a balanced pair gets an exact
    half/half split whenever count is even.
    """
    edges = np.cumsum(np.asarray(weights, dtype=np.float64))
    marks = (np.arange(count) + 0.5) / count
    idx = np.searchsorted(edges, marks)
    return np.minimum(idx, len(edges) - 1).astype(np.int64)


def make_denoisers(mix: GaussianMixture, classes: np.ndarray):
    """Uncond denoiser plus a row-range slicer for per-trajectory classes."""

    def uncond(z, sigma):
        return denoiser_uncond(mix, z, sigma)

    def slicer(lo, hi):
        rows = classes[lo:hi]

        def cond(z, sigma, rows=rows):
            return denoiser_cond(mix, rows, z, sigma)

        return cond

    return uncond, slicer


def calibrate_radius(spec: StrategySpec, cfg: ExperimentConfig,
                     uncond, slicer, jobs=None) -> float:
    """Clamp radius from a short pass: median of the positive update norms.

    Runs the strategy with the clamp disabled over the first
    min(128, sample_count) trajectories (the exact keys the main run
    will use) and collects every raw conditional/unconditional
    difference norm.  Zero norms carry no scale information, the clamp
    never touches them, so the median is taken over the positive ones;
    if every norm is zero the radius stays 0 and the clamp stays off.
    """
    rows = min(CALIBRATION_ROWS, cfg.sample_count)
    probe = replace(spec, radius=0.0).to_strategy()
    result = run_batch(
        None, uncond, probe, schedule_from_config(cfg),
        seed=cfg.seed, count=rows, dimension=cfg.dimension,
        rule=cfg.rule, jobs=jobs,
        momentum_per_evaluation=cfg.momentum_per_evaluation,
        collect_delta_norms=True, class_slicer=slicer,
    )
    norms = result.delta_norms
    positive = norms[norms > 0]
    if positive.size == 0:
        return 0.0
    return float(np.median(positive))


@dataclass
class StrategyOutcome:
    """One strategy's run: resolved parameters, samples, and drift stats."""

    spec: StrategySpec
    label: str
    calibrated_radius: float | None
    result: BatchResult
    summary: ModeDriftSummary | None

    @property
    def failed_count(self) -> int:
        return self.result.failure_count


def run_strategy(spec: StrategySpec, cfg: ExperimentConfig, mix: GaussianMixture,
                 classes: np.ndarray, uncond, slicer, jobs=None) -> StrategyOutcome:
    calibrated = None
    if spec.needs_calibration():
        calibrated = calibrate_radius(spec, cfg, uncond, slicer, jobs=jobs)
    strategy = spec.to_strategy(calibrated)
    result = run_batch(
        None, uncond, strategy, schedule_from_config(cfg),
        seed=cfg.seed, count=cfg.sample_count, dimension=cfg.dimension,
        rule=cfg.rule, jobs=jobs,
        momentum_per_evaluation=cfg.momentum_per_evaluation,
        class_slicer=slicer,
    )
    good = result.terminal[~result.failed]
    summary = mode_drift(good, mix) if good.shape[0] else None
    return StrategyOutcome(
        spec=spec, label=strategy.label(), calibrated_radius=calibrated,
        result=result, summary=summary,
    )


# ---------------------------------------------------------------- output


def _cell(value) -> str:
    """Shortest round-trip text for one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_csv(path: Path, header, rows):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    os.replace(tmp, path)


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_samples_csv(path: Path, outcome: StrategyOutcome, classes: np.ndarray):
    terminal = outcome.result.terminal
    dim = terminal.shape[1]
    header = ["trajectory_index", "class_index", "failed"] + [
        f"coord_{j}" for j in range(dim)
    ]
    rows = (
        [i, int(classes[i]), bool(outcome.result.failed[i])] + list(terminal[i])
        for i in range(terminal.shape[0])
    )
    _write_csv(path, header, rows)


def _strategy_columns(outcome: StrategyOutcome):
    spec = outcome.spec
    if spec.kind == "none":
        return [outcome.label, spec.kind, None, None, None, None, None]
    if spec.kind == "cfg":
        return [outcome.label, spec.kind, spec.scale, None, None, None, None]
    return [
        outcome.label, spec.kind, spec.scale, spec.parallel,
        spec.radius if spec.radius != AUTO_RADIUS else AUTO_RADIUS,
        spec.momentum, outcome.calibrated_radius,
    ]


def drift_header(component_count: int):
    return (
        ["strategy", "kind", "scale", "parallel", "radius", "momentum",
         "calibrated_radius", "count", "failed", "mean_distance",
         "median_distance", "max_distance", "mean_distance_in_sigma",
         "within_three_sigma_fraction"]
        + [f"mode_{i}_fraction" for i in range(component_count)]
    )


def drift_row(outcome: StrategyOutcome, component_count: int):
    row = _strategy_columns(outcome)
    summary = outcome.summary
    if summary is None:
        stats = [0, outcome.failed_count] + [float("nan")] * (5 + component_count)
    else:
        stats = [
            summary.count, outcome.failed_count, summary.mean_distance,
            summary.median_distance, summary.max_distance,
            summary.mean_distance_in_sigma, summary.within_three_sigma_fraction,
        ] + list(summary.mode_fractions)
    return row + stats


def write_scatter_svg(path: Path, outcome: StrategyOutcome, mix: GaussianMixture):
    good = outcome.result.terminal[~outcome.result.failed]
    if good.shape[0] == 0:
        good = np.zeros((0, 2))
    x = good[:, 0] if good.shape[1] >= 1 else np.zeros(good.shape[0])
    y = good[:, 1] if good.shape[1] >= 2 else np.zeros(good.shape[0])
    mx = mix.means[:, 0]
    my = mix.means[:, 1] if mix.dimension >= 2 else np.zeros(mix.component_count)
    scatter_plot(
        [Series(label=outcome.label, x=x, y=y)], path,
        title=f"terminal samples, first two coordinates ({outcome.label})",
        xlabel="coordinate 0", ylabel="coordinate 1",
        markers=list(zip(mx, my)),
    )


def write_trajectory_csv(trajectory, path: Path, coordinates: int = 2):
    """One diagnostic row per integration step."""
    k = min(coordinates, trajectory.path.shape[1])
    header = ["step", "sigma"] + [f"coord_{j}" for j in range(k)] + [
        "delta_norm", "gain_factor"
    ]
    rows = (
        [i, float(trajectory.sigmas[i])] + list(trajectory.path[i, :k])
        + [trajectory.delta_norms[i], trajectory.gain_factors[i]]
        for i in range(len(trajectory.delta_norms))
    )
    _write_csv(path, header, rows)


def format_manifest(command: str, cfg: ExperimentConfig, duration: float,
                    outputs: dict) -> str:
    lines = [
        "pglab manifest",
        f"version = {__version__}",
        f"hash_algorithm = {HASH_ALGORITHM}",
        f"command = {command}",
        f"duration_seconds = {duration:.3f}",
        "",
        "[config]",
    ]
    lines.extend(cfg.resolved_lines())
    lines.append("")
    lines.append("[outputs]")
    for name in sorted(outputs):
        lines.append(f"{outputs[name]}  {name}")
    lines.append("")
    return "\n".join(lines)


def parse_manifest(text: str) -> dict:
    """Split a manifest back into header fields, raw config, and hashes."""
    head, config_lines, output_lines = {}, [], []
    section = "head"
    lines = text.splitlines()
    if not lines or lines[0].strip() != "pglab manifest":
        raise ContractError("manifest: missing 'pglab manifest' header line")
    for line in lines[1:]:
        stripped = line.strip()
        if stripped == "[config]":
            section = "config"
            continue
        if stripped == "[outputs]":
            section = "outputs"
            continue
        if not stripped:
            continue
        if section == "head":
            key, eq, value = stripped.partition("=")
            if eq:
                head[key.strip()] = value.strip()
        elif section == "config":
            config_lines.append(stripped)
        else:
            output_lines.append(stripped)
    outputs = {}
    for entry in output_lines:
        digest, _, name = entry.partition("  ")
        if not name:
            raise ContractError(f"manifest: malformed output line {entry!r}")
        outputs[name] = digest
    return {
        "head": head,
        "config": parse_config_text("\n".join(config_lines)),
        "outputs": outputs,
    }


def _prepare_output_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    # surface an unwritable directory before any compute happens
    probe.write_bytes(b"")
    probe.unlink()
    return out


def _unique_labels(labels):
    seen, result = {}, []
    for label in labels:
        n = seen.get(label, 0) + 1
        seen[label] = n
        result.append(label if n == 1 else f"{label}_{n}")
    return result


@dataclass
class RunReport:
    """What a toy or sweep run produced, for the command layer."""

    output_dir: Path
    manifest_path: Path
    outcomes: list
    sample_total: int
    failed_total: int
    duration_seconds: float

    @property
    def failure_fraction(self) -> float:
        if self.sample_total == 0:
            return 0.0
        return self.failed_total / self.sample_total


def run_toy(cfg: ExperimentConfig, jobs=None) -> RunReport:
    """Run every configured strategy and write the full artifact set."""
    start = time.monotonic()
    out = _prepare_output_dir(cfg)
    mix = mixture_from_config(cfg)
    classes = class_assignment(cfg.weights, cfg.sample_count)
    uncond, slicer = make_denoisers(mix, classes)

    outcomes = [
        run_strategy(spec, cfg, mix, classes, uncond, slicer, jobs=jobs)
        for spec in cfg.strategies
    ]
    for outcome, label in zip(outcomes, _unique_labels(o.label for o in outcomes)):
        outcome.label = label

    outputs = {}
    for outcome in outcomes:
        samples = out / f"samples_{outcome.label}.csv"
        write_samples_csv(samples, outcome, classes)
        scatter = out / f"scatter_{outcome.label}.svg"
        write_scatter_svg(scatter, outcome, mix)
        outputs[samples.name] = file_digest(samples)
        outputs[scatter.name] = file_digest(scatter)

    drift = out / "drift_summary.csv"
    _write_csv(
        drift,
        drift_header(mix.component_count),
        (drift_row(o, mix.component_count) for o in outcomes),
    )
    outputs[drift.name] = file_digest(drift)

    duration = time.monotonic() - start
    manifest = out / "manifest.txt"
    _atomic_write_text(manifest, format_manifest("toy", cfg, duration, outputs))

    total = cfg.sample_count * len(outcomes)
    failed = sum(o.failed_count for o in outcomes)
    return RunReport(
        output_dir=out, manifest_path=manifest, outcomes=outcomes,
        sample_total=total, failed_total=failed, duration_seconds=duration,
    )


def sweep_cells(cfg: ExperimentConfig):
    """CFG cells over the scale list, APG cells over the full grid."""
    cells = [StrategySpec(kind="cfg", scale=s) for s in cfg.sweep_scales]
    for scale, parallel, radius, momentum in itertools.product(
        cfg.sweep_scales, cfg.sweep_parallel, cfg.sweep_radius, cfg.sweep_momentum
    ):
        cells.append(StrategySpec(
            kind="apg", scale=scale, parallel=parallel,
            radius=radius, momentum=momentum,
        ))
    if len(cells) > cfg.sweep_cap:
        raise ContractError(
            f"sweep_cap: grid has {len(cells)} cells, cap is {cfg.sweep_cap}; "
            "shrink the lists or raise sweep_cap"
        )
    return cells


def _series_key(spec: StrategySpec):
    if spec.kind != "apg":
        return (spec.kind,)
    radius = spec.radius if spec.radius == AUTO_RADIUS else f"{spec.radius:g}"
    return ("apg", f"{spec.parallel:g}", radius, f"{spec.momentum:g}")


def _series_label(key) -> str:
    if key[0] != "apg":
        return key[0]
    return f"apg p={key[1]} r={key[2]} m={key[3]}"


def run_sweep(cfg: ExperimentConfig, jobs=None) -> RunReport:
    """Grid the strategies, summarize drift per cell, plot distance vs scale."""
    start = time.monotonic()
    cells = sweep_cells(cfg)
    out = _prepare_output_dir(cfg)
    mix = mixture_from_config(cfg)
    classes = class_assignment(cfg.weights, cfg.sample_count)
    uncond, slicer = make_denoisers(mix, classes)

    outcomes = [
        run_strategy(spec, cfg, mix, classes, uncond, slicer, jobs=jobs)
        for spec in cells
    ]
    for outcome, label in zip(outcomes, _unique_labels(o.label for o in outcomes)):
        outcome.label = label

    outputs = {}
    table = out / "sweep_summary.csv"
    _write_csv(
        table,
        drift_header(mix.component_count),
        (drift_row(o, mix.component_count) for o in outcomes),
    )
    outputs[table.name] = file_digest(table)

    grouped: dict = {}
    for outcome in outcomes:
        if outcome.summary is None:
            continue
        grouped.setdefault(_series_key(outcome.spec), []).append(
            (outcome.spec.scale, outcome.summary.mean_distance)
        )
    series = []
    for key in sorted(grouped):
        points = sorted(grouped[key])
        series.append(Series(
            label=_series_label(key),
            x=np.array([p[0] for p in points]),
            y=np.array([p[1] for p in points]),
        ))
    plot = out / "sweep_mean_distance.svg"
    line_plot(
        series, plot,
        title="mean nearest-mode distance vs guidance scale",
        xlabel="guidance scale", ylabel="mean distance",
    )
    outputs[plot.name] = file_digest(plot)

    duration = time.monotonic() - start
    manifest = out / "manifest.txt"
    _atomic_write_text(manifest, format_manifest("sweep", cfg, duration, outputs))

    total = cfg.sample_count * len(outcomes)
    failed = sum(o.failed_count for o in outcomes)
    return RunReport(
        output_dir=out, manifest_path=manifest, outcomes=outcomes,
        sample_total=total, failed_total=failed, duration_seconds=duration,
    )
