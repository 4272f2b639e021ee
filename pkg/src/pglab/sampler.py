"""Deterministic probability-flow sampling over a decreasing noise schedule.

The sampler integrates dz/dsigma = (z - D(z, sigma)) / sigma from
sigma_max down to 0, where D is the (possibly guided) clean-data estimate.
Euler and Heun (trapezoidal corrector) step rules are provided; the final
step to sigma = 0 always reduces to the plain Euler form, which returns
the denoised prediction exactly.

Initial noise contract: trajectory ``i`` of a run seeded with ``seed``
starts at sigma_max * eps where eps is drawn by numpy's Philox4x32
counter-based bit generator keyed [seed, i], through
Generator.standard_normal.  Counter-based keying makes every trajectory
reproducible in isolation, on any platform, under any batch split.

Denoiser callbacks take a batch (rows, dimension) and a scalar sigma and
return an array of the same shape.  All per-row state (momentum buffers,
failure flags) is independent across rows, so batches may be split into
chunks and run concurrently without changing any result.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SamplingError
from .guidance import GuidanceParams, MomentumState, apg_update, cfg_combine

STRATEGY_KINDS = ("none", "cfg", "apg")

# Rows per work unit when a batch fans out to threads.  Any value gives
# identical results (rows are independent); this bounds per-chunk memory.
_CHUNK_ROWS = 128


@dataclass(frozen=True)
class SigmaSchedule:
    """Noise-level grid: endpoints, step count, and spacing exponent."""

    sigma_min: float
    sigma_max: float
    steps: int
    rho: float = 7.0

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ContractError(
                f"schedule: need 0 < sigma_min < sigma_max, got "
                f"{self.sigma_min!r}, {self.sigma_max!r}"
            )
        if self.steps < 1:
            raise ContractError(f"steps: must be >= 1, got {self.steps!r}")
        if not self.rho > 0:
            raise ContractError(f"rho: must be > 0, got {self.rho!r}")


def karras_sigmas(schedule: SigmaSchedule) -> np.ndarray:
    """Power-spaced noise levels from sigma_max to sigma_min, then 0.

    sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho
    for i = 0..n-1, with a terminal 0 appended.  A single step yields
    [sigma_max, 0].
    """
    if schedule.steps == 1:
        return np.array([schedule.sigma_max, 0.0])
    inv = 1.0 / schedule.rho
    lo = schedule.sigma_min**inv
    hi = schedule.sigma_max**inv
    ramp = np.arange(schedule.steps, dtype=np.float64) / (schedule.steps - 1)
    sigmas = (hi + ramp * (lo - hi)) ** schedule.rho
    return np.append(sigmas, 0.0)


@dataclass(frozen=True)
class GuidanceStrategy:
    """How the two denoiser outputs combine into one prediction."""

    kind: str
    params: GuidanceParams | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ContractError(
                f"strategy kind: unknown {self.kind!r}, expected one of "
                f"{', '.join(STRATEGY_KINDS)}"
            )
        if self.kind != "none" and self.params is None:
            raise ContractError(f"strategy {self.kind!r}: params required")

    def label(self) -> str:
        """Stable, filename-safe identifier for outputs."""
        if self.kind == "none":
            return "none"
        p = self.params
        bits = [self.kind, f"scale{p.guidance_scale:g}"]
        if self.kind == "apg":
            bits.append(f"par{p.parallel_weight:g}")
            bits.append(f"rad{p.clamp_radius:g}")
            bits.append(f"mom{p.momentum:g}")
        return "_".join(bits).replace("-", "m").replace(".", "p")


def no_guidance() -> GuidanceStrategy:
    return GuidanceStrategy(kind="none")


def cfg_strategy(guidance_scale: float) -> GuidanceStrategy:
    return GuidanceStrategy(kind="cfg", params=GuidanceParams(guidance_scale=guidance_scale))


def apg_strategy(
    guidance_scale: float,
    parallel_weight: float = 0.0,
    clamp_radius: float = 0.0,
    momentum: float = -0.5,
) -> GuidanceStrategy:
    return GuidanceStrategy(
        kind="apg",
        params=GuidanceParams(
            guidance_scale=guidance_scale,
            parallel_weight=parallel_weight,
            clamp_radius=clamp_radius,
            momentum=momentum,
        ),
    )


def euler_step(z, sigma_cur: float, sigma_next: float, denoised):
    """One explicit step of the flow: z + (next - cur) * (z - D) / cur.

    At sigma_next = 0 this lands exactly on the denoised prediction.
    """
    if not sigma_cur > 0:
        raise ContractError(f"sigma_cur: must be > 0, got {sigma_cur!r}")
    z = np.asarray(z, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    slope = (z - denoised) / sigma_cur
    return z + (sigma_next - sigma_cur) * slope


def heun_step(z, sigma_cur: float, sigma_next: float, evaluate):
    """Second-order step: Euler predictor plus trapezoidal slope average.

    ``evaluate(z, sigma)`` must return the guided denoised prediction.
    When sigma_next = 0 the correction is skipped (plain Euler step).
    """
    if not sigma_cur > 0:
        raise ContractError(f"sigma_cur: must be > 0, got {sigma_cur!r}")
    z = np.asarray(z, dtype=np.float64)
    denoised = np.asarray(evaluate(z, sigma_cur), dtype=np.float64)
    slope = (z - denoised) / sigma_cur
    probe = z + (sigma_next - sigma_cur) * slope
    if sigma_next == 0:
        return probe
    denoised_next = np.asarray(evaluate(probe, sigma_next), dtype=np.float64)
    slope_next = (probe - denoised_next) / sigma_next
    return z + (sigma_next - sigma_cur) * 0.5 * (slope + slope_next)


class _GuidedEvaluator:
    """Applies a strategy to denoiser pairs for one batch of rows.

    Owns the per-row momentum buffer, sanitizes non-finite predictions
    (flagging the offending rows instead of poisoning the batch), and
    optionally records raw difference norms for calibration/diagnostics.
    """

    def __init__(self, cond_denoiser, uncond_denoiser, strategy, rows,
                 collect_norms=False, record_gain=False):
        self.cond = cond_denoiser
        self.uncond = uncond_denoiser
        self.strategy = strategy
        self.failed = np.zeros(rows, dtype=bool)
        self.delta_norms = [] if collect_norms else None
        self.gains = [] if record_gain else None
        params = strategy.params
        self._state = None
        if strategy.kind == "apg" and params.momentum != 0.0:
            self._state = MomentumState(momentum=params.momentum)

    def _sanitize(self, arr):
        bad = ~np.isfinite(arr).all(axis=-1)
        if bad.any():
            self.failed |= bad
            arr = np.where(bad[:, None], 0.0, arr)
        return arr

    def __call__(self, z, sigma, commit=True):
        cond = self._sanitize(np.asarray(self.cond(z, sigma), dtype=np.float64))
        needs_uncond = self.strategy.kind != "none" or self.delta_norms is not None \
            or self.gains is not None
        if not needs_uncond:
            return cond
        uncond = self._sanitize(np.asarray(self.uncond(z, sigma), dtype=np.float64))
        if self.delta_norms is not None:
            diff = cond - uncond
            self.delta_norms.append(np.sqrt((diff * diff).sum(axis=-1)))
        if self.gains is not None:
            diff = cond - uncond
            ref_sq = (cond * cond).sum(axis=-1)
            safe = np.maximum(ref_sq, np.finfo(np.float64).tiny)
            par_norm = np.abs((diff * cond).sum(axis=-1)) / np.sqrt(safe)
            scale = 1.0 if self.strategy.kind == "none" else self.strategy.params.guidance_scale
            gain = 1.0 + (scale - 1.0) * par_norm / np.sqrt(safe)
            self.gains.append(np.where(ref_sq > 0, gain, np.nan))
        if self.strategy.kind == "none":
            return cond
        if self.strategy.kind == "cfg":
            return cfg_combine(cond, uncond, self.strategy.params.guidance_scale)
        if self._state is not None and not commit:
            # frozen-buffer mode: evaluate with the current average but do
            # not let this evaluation advance it
            backup = None if self._state.running_average is None \
                else self._state.running_average.copy()
            out = apg_update(cond, uncond, self.strategy.params, self._state)
            self._state.running_average = backup
            return out
        return apg_update(cond, uncond, self.strategy.params, self._state)


def initial_state(schedule: SigmaSchedule, seed: int, trajectory_index: int,
                  dimension: int) -> np.ndarray:
    """Starting point of one trajectory: sigma_max times unit white noise."""
    bits = np.random.Philox(key=[int(seed), int(trajectory_index)])
    gen = np.random.Generator(bits)
    return schedule.sigma_max * gen.standard_normal(dimension)


@dataclass
class BatchResult:
    """Terminal states of a batch run plus per-row failure flags."""

    terminal: np.ndarray
    failed: np.ndarray
    delta_norms: np.ndarray | None = None

    @property
    def failure_count(self) -> int:
        return int(self.failed.sum())


def _advance_batch(z, sigmas, evaluator, rule, momentum_per_evaluation):
    """Run all steps for one batch in place; returns the terminal states."""
    for i in range(len(sigmas) - 1):
        cur, nxt = sigmas[i], sigmas[i + 1]
        denoised = evaluator(z, cur, commit=True)
        slope = (z - denoised) / cur
        if nxt == 0 or rule == "euler":
            z = z + (nxt - cur) * slope
        else:
            probe = z + (nxt - cur) * slope
            corr = evaluator(probe, nxt, commit=momentum_per_evaluation)
            z = z + (nxt - cur) * 0.5 * (slope + (probe - corr) / nxt)
        bad = ~np.isfinite(z).all(axis=-1)
        if bad.any():
            evaluator.failed |= bad
            z = np.where(bad[:, None], 0.0, z)
    return z


def _run_rows(cond_denoiser, uncond_denoiser, strategy, schedule, sigmas, seed,
              indices, dimension, rule, momentum_per_evaluation, collect_norms):
    z = np.stack([
        initial_state(schedule, seed, i, dimension) for i in indices
    ])
    evaluator = _GuidedEvaluator(
        cond_denoiser, uncond_denoiser, strategy, rows=len(indices),
        collect_norms=collect_norms,
    )
    terminal = _advance_batch(z, sigmas, evaluator, rule, momentum_per_evaluation)
    terminal = np.where(evaluator.failed[:, None], np.nan, terminal)
    norms = None
    if collect_norms:
        norms = np.concatenate(evaluator.delta_norms) if evaluator.delta_norms else np.empty(0)
    return terminal, evaluator.failed, norms


def run_batch(cond_denoiser, uncond_denoiser, strategy: GuidanceStrategy,
              schedule: SigmaSchedule, seed: int, count: int, dimension: int,
              *, rule: str = "heun", start_index: int = 0, jobs: int | None = None,
              momentum_per_evaluation: bool = True,
              collect_delta_norms: bool = False,
              class_slicer=None) -> BatchResult:
    """Sample ``count`` trajectories, fanning chunks out to a thread pool.

    Trajectory ``k`` uses generator key [seed, start_index + k].  When
    ``class_slicer`` is given it is called with (lo, hi) row bounds and
    must return the conditional denoiser for those rows; this lets a batch
    carry per-trajectory conditioning while the chunk layout stays fixed.
    Rows that turn non-finite are reported in ``failed`` and their
    terminal values set to NaN; the rest of the batch continues.
    """
    if rule not in ("euler", "heun"):
        raise ContractError(f"rule: expected euler or heun, got {rule!r}")
    if count < 1:
        raise ContractError(f"count: must be >= 1, got {count!r}")
    sigmas = karras_sigmas(schedule)
    if jobs is None:
        jobs = min(os.cpu_count() or 1, 8)
    jobs = max(1, int(jobs))

    bounds = [(lo, min(lo + _CHUNK_ROWS, count)) for lo in range(0, count, _CHUNK_ROWS)]
    terminal = np.empty((count, dimension))
    failed = np.zeros(count, dtype=bool)
    norm_parts: list[np.ndarray | None] = [None] * len(bounds)

    def work(slot, lo, hi):
        cond = cond_denoiser if class_slicer is None else class_slicer(lo, hi)
        t, f, n = _run_rows(
            cond, uncond_denoiser, strategy, schedule, sigmas, seed,
            range(start_index + lo, start_index + hi), dimension, rule,
            momentum_per_evaluation, collect_delta_norms,
        )
        terminal[lo:hi] = t
        failed[lo:hi] = f
        norm_parts[slot] = n

    if jobs == 1 or len(bounds) == 1:
        for slot, (lo, hi) in enumerate(bounds):
            work(slot, lo, hi)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(work, slot, lo, hi)
                for slot, (lo, hi) in enumerate(bounds)
            ]
            for fut in futures:
                fut.result()

    norms = None
    if collect_delta_norms:
        norms = np.concatenate([p for p in norm_parts if p is not None])
    return BatchResult(terminal=terminal, failed=failed, delta_norms=norms)


@dataclass
class Trajectory:
    """Full record of one sampled path."""

    seed: int
    trajectory_index: int
    sigmas: np.ndarray
    path: np.ndarray
    delta_norms: np.ndarray
    gain_factors: np.ndarray

    @property
    def states(self):
        """Ordered (sigma, state) pairs, initial state included."""
        return [(float(s), self.path[i]) for i, s in enumerate(self.sigmas)]

    @property
    def terminal(self) -> np.ndarray:
        return self.path[-1]


def sample(cond_denoiser, uncond_denoiser, strategy: GuidanceStrategy,
           schedule: SigmaSchedule, seed: int, dimension: int,
           *, rule: str = "heun", trajectory_index: int = 0,
           momentum_per_evaluation: bool = True) -> Trajectory:
    """Sample one trajectory, recording every intermediate state.

    Deterministic given (seed, trajectory_index, strategy, schedule, rule).
    Raises SamplingError naming the step and noise level if the state
    turns non-finite.
    """
    if rule not in ("euler", "heun"):
        raise ContractError(f"rule: expected euler or heun, got {rule!r}")
    sigmas = karras_sigmas(schedule)
    z = initial_state(schedule, seed, trajectory_index, dimension)[None, :]
    evaluator = _GuidedEvaluator(
        cond_denoiser, uncond_denoiser, strategy, rows=1,
        collect_norms=True, record_gain=True,
    )
    path = np.empty((len(sigmas), dimension))
    path[0] = z[0]
    norms = np.empty(len(sigmas) - 1)
    gains = np.empty(len(sigmas) - 1)
    for i in range(len(sigmas) - 1):
        cur, nxt = sigmas[i], sigmas[i + 1]
        mark = len(evaluator.delta_norms)
        denoised = evaluator(z, cur, commit=True)
        slope = (z - denoised) / cur
        if nxt == 0 or rule == "euler":
            z = z + (nxt - cur) * slope
        else:
            probe = z + (nxt - cur) * slope
            corr = evaluator(probe, nxt, commit=momentum_per_evaluation)
            z = z + (nxt - cur) * 0.5 * (slope + (probe - corr) / nxt)
        norms[i] = evaluator.delta_norms[mark][0]
        gains[i] = evaluator.gains[mark][0]
        if evaluator.failed[0] or not np.isfinite(z).all():
            raise SamplingError(step_index=i, sigma=float(cur))
        path[i + 1] = z[0]
    return Trajectory(
        seed=seed, trajectory_index=trajectory_index, sigmas=sigmas,
        path=path, delta_norms=norms, gain_factors=gains,
    )


def nearest_mode(samples, mix) -> tuple[np.ndarray, np.ndarray]:
    """Distance to, and index of, the closest component mean per sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    sq = ((samples[:, None, :] - mix.means[None, :, :]) ** 2).sum(axis=-1)
    return np.sqrt(sq.min(axis=1)), sq.argmin(axis=1)


@dataclass(frozen=True)
class ModeDriftSummary:
    """Aggregate distances of terminal samples from the data modes."""

    count: int
    mean_distance: float
    median_distance: float
    max_distance: float
    mean_distance_in_sigma: float
    within_three_sigma_fraction: float
    mode_fractions: tuple

    def as_row(self) -> dict:
        return {
            "count": self.count,
            "mean_distance": self.mean_distance,
            "median_distance": self.median_distance,
            "max_distance": self.max_distance,
            "mean_distance_in_sigma": self.mean_distance_in_sigma,
            "within_three_sigma_fraction": self.within_three_sigma_fraction,
            **{
                f"mode_{i}_fraction": f
                for i, f in enumerate(self.mode_fractions)
            },
        }


def mode_drift(samples, mix) -> ModeDriftSummary:
    """Summarize how far terminal samples sit from the nearest mode.

    Distances come in data units and in units of the component sigma; the
    in-range fraction counts samples within 3 * sigma * sqrt(d) of a mode,
    the typical radius of a component at dimension d.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ContractError("mode_drift: empty sample set")
    dist, idx = nearest_mode(samples, mix)
    sigma = mix.component_sigma
    radius = 3.0 * sigma * np.sqrt(mix.dimension)
    counts = np.bincount(idx, minlength=mix.component_count)
    return ModeDriftSummary(
        count=samples.shape[0],
        mean_distance=float(dist.mean()),
        median_distance=float(np.median(dist)),
        max_distance=float(dist.max()),
        mean_distance_in_sigma=float(dist.mean() / sigma),
        within_three_sigma_fraction=float((dist <= radius).mean()),
        mode_fractions=tuple(counts / samples.shape[0]),
    )
