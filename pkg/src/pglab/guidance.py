"""Guided-update rules for denoised predictions.

All operations act on flat numeric vectors, or on batches of vectors stacked
along leading axes (reductions run over the last axis, one result per row).
Internal arithmetic is performed in 64-bit floats regardless of the storage
dtype of the inputs, and results are cast back to the promoted input dtype.

The two update rules:

* ``cfg_combine`` blends the conditional and unconditional predictions,
  pushing the output along their difference, scaled by ``guidance_scale``.
* ``apg_update`` shapes that difference before applying it: an optional
  running-average (negative-coefficient) momentum, an optional norm clamp,
  and a projection that splits the difference against the conditional
  prediction so its parallel part can be down-weighted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateReferenceError

# Below this norm a reference vector cannot define a direction.
DEGENERATE_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class GuidanceParams:
    """Hyperparameters of a guided update.

    guidance_scale: multiplier on the update direction; 1 leaves the
        conditional prediction untouched.
    parallel_weight: weight of the component parallel to the conditional
        prediction; 1 keeps the full update, 0 drops the parallel part.
    clamp_radius: maximum norm of the update direction; non-positive
        disables clamping.
    momentum: coefficient of the running-average recurrence; 0 disables it,
        negative values push away from the previous average.
    """

    guidance_scale: float
    parallel_weight: float = 1.0
    clamp_radius: float = 0.0
    momentum: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.guidance_scale) or self.guidance_scale < 0:
            raise ContractError(
                f"guidance_scale: must be finite and >= 0, got {self.guidance_scale!r}"
            )
        for name in ("parallel_weight", "clamp_radius", "momentum"):
            if not np.isfinite(getattr(self, name)):
                raise ContractError(f"{name}: must be finite")
        if self.parallel_weight > 1:
            warnings.warn(
                "parallel_weight above 1 amplifies the parallel component",
                stacklevel=2,
            )


@dataclass
class MomentumState:
    """Per-trajectory running average of update directions.

    Starts at the zero vector (lazily, on the first update) and must never
    be shared across trajectories.
    """

    momentum: float
    running_average: np.ndarray | None = field(default=None)

    def reset(self):
        self.running_average = None


@dataclass(frozen=True)
class DenoisedPair:
    """Conditional and unconditional denoised predictions of one state."""

    cond: np.ndarray
    uncond: np.ndarray

    def __post_init__(self):
        _pair64(self.cond, self.uncond)
        object.__setattr__(self, "cond", np.asarray(self.cond))
        object.__setattr__(self, "uncond", np.asarray(self.uncond))


def _pair64(cond, uncond):
    """Validate a prediction pair and return 64-bit views."""
    c = np.asarray(cond, dtype=np.float64)
    u = np.asarray(uncond, dtype=np.float64)
    if c.shape != u.shape:
        raise ContractError(
            f"prediction pair: shape mismatch {c.shape} vs {u.shape}"
        )
    if not (np.isfinite(c).all() and np.isfinite(u).all()):
        raise ContractError("prediction pair: non-finite entries")
    return c, u


def _out_dtype(*arrays):
    dt = np.result_type(*arrays)
    return dt if dt.kind == "f" else np.dtype(np.float64)


def cfg_combine(cond, uncond, guidance_scale: float):
    """Classifier-free guidance combination of a prediction pair.

    Returns cond + (guidance_scale - 1) * (cond - uncond), which is the
    same vector as uncond + guidance_scale * (cond - uncond) up to
    floating-point associativity.  guidance_scale = 1 returns the
    conditional prediction unchanged.
    """
    c, u = _pair64(cond, uncond)
    out = c + (float(guidance_scale) - 1.0) * (c - u)
    return out.astype(_out_dtype(np.asarray(cond), np.asarray(uncond)), copy=False)


def split_parallel_orthogonal(delta, reference, norm_floor: float = DEGENERATE_NORM_FLOOR):
    """Split ``delta`` into components parallel and orthogonal to ``reference``.

    parallel = (<delta, ref> / <ref, ref>) * ref and orthogonal is the
    remainder, so the two always sum back to ``delta``.  Inner products and
    the division run in 64-bit floats.  Batches split row by row over the
    last axis.

    Raises DegenerateReferenceError when any reference row has norm below
    ``norm_floor``.
    """
    d = np.asarray(delta, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if d.shape != ref.shape:
        raise ContractError(f"split: shape mismatch {d.shape} vs {ref.shape}")
    ref_sq = (ref * ref).sum(axis=-1, keepdims=True)
    if np.any(ref_sq < float(norm_floor) ** 2):
        raise DegenerateReferenceError(
            f"reference norm below {norm_floor!r}; direction undefined"
        )
    coef = (d * ref).sum(axis=-1, keepdims=True) / ref_sq
    parallel = coef * ref
    orthogonal = d - parallel
    dt = _out_dtype(np.asarray(delta), np.asarray(reference))
    return parallel.astype(dt, copy=False), orthogonal.astype(dt, copy=False)


def clamp_norm(delta, radius: float):
    """Rescale ``delta`` onto the sphere of norm ``radius`` when it is longer.

    Identity when the norm is already within the radius or when
    ``radius <= 0`` (disabled).  The zero vector passes through unchanged.
    Batches clamp row by row.
    """
    d = np.asarray(delta, dtype=np.float64)
    if radius is None or radius <= 0:
        return d.astype(_out_dtype(np.asarray(delta)), copy=False)
    norm = np.sqrt((d * d).sum(axis=-1, keepdims=True))
    factor = np.ones_like(norm)
    np.divide(float(radius), norm, out=factor, where=norm > radius)
    return (d * factor).astype(_out_dtype(np.asarray(delta)), copy=False)


def momentum_update(state: MomentumState, delta):
    """Advance the running average: avg <- delta + momentum * avg.

    Returns the new running average, which becomes the effective update
    direction.  The state starts at the zero vector, so the first call
    returns ``delta`` itself.
    """
    d = np.asarray(delta, dtype=np.float64)
    if state.running_average is None:
        state.running_average = np.zeros_like(d)
    elif state.running_average.shape != d.shape:
        raise ContractError(
            f"momentum state shape {state.running_average.shape} does not match delta {d.shape}"
        )
    state.running_average = d + state.momentum * state.running_average
    return state.running_average


def _project_update(delta64, cond64, parallel_weight: float):
    """Orthogonal/parallel reweighting with degenerate rows kept whole.

    Rows whose conditional prediction has ~zero norm cannot define a
    parallel direction; their delta is treated as fully orthogonal.
    """
    ref_sq = (cond64 * cond64).sum(axis=-1, keepdims=True)
    degenerate = ref_sq < DEGENERATE_NORM_FLOOR**2
    safe = np.where(degenerate, 1.0, ref_sq)
    coef = (delta64 * cond64).sum(axis=-1, keepdims=True) / safe
    coef = np.where(degenerate, 0.0, coef)
    parallel = coef * cond64
    orthogonal = delta64 - parallel
    return orthogonal + float(parallel_weight) * parallel


def apg_update(cond, uncond, params: GuidanceParams, state: MomentumState | None = None):
    """Momentum-smoothed, clamped, projected guided update of a pair.

    Pipeline over delta = cond - uncond: running-average momentum when
    ``params.momentum`` is nonzero (requires ``state``), then the norm clamp
    when ``params.clamp_radius`` is positive, then the parallel/orthogonal
    split against the conditional prediction.  Returns

        cond + (guidance_scale - 1) * (orthogonal + parallel_weight * parallel)

    With parallel_weight = 1 the split is skipped entirely, so together
    with clamp and momentum disabled the arithmetic (and the result, bit
    for bit) matches ``cfg_combine``.
    """
    c, u = _pair64(cond, uncond)
    delta = c - u
    if params.momentum != 0.0:
        if state is None:
            raise ContractError("momentum enabled but no MomentumState supplied")
        delta = momentum_update(state, delta)
    if params.clamp_radius > 0:
        norm = np.sqrt((delta * delta).sum(axis=-1, keepdims=True))
        factor = np.ones_like(norm)
        np.divide(params.clamp_radius, norm, out=factor, where=norm > params.clamp_radius)
        delta = delta * factor
    if params.parallel_weight == 1.0:
        update = delta
    else:
        update = _project_update(delta, c, params.parallel_weight)
    out = c + (params.guidance_scale - 1.0) * update
    return out.astype(_out_dtype(np.asarray(cond), np.asarray(uncond)), copy=False)


def gain_factor(cond, uncond, guidance_scale: float):
    """Amplification applied along the conditional direction.

    Returns 1 + (guidance_scale - 1) * |parallel| / |cond| where parallel
    is the component of cond - uncond along cond.  Magnitude-based: the
    sign of the alignment is reported separately by ``alignment_sign``.
    Batches return one factor per row.
    """
    c, u = _pair64(cond, uncond)
    ref_sq = (c * c).sum(axis=-1)
    if np.any(ref_sq < DEGENERATE_NORM_FLOOR**2):
        raise DegenerateReferenceError("conditional prediction has ~zero norm")
    delta = c - u
    par_norm = np.abs((delta * c).sum(axis=-1)) / np.sqrt(ref_sq)
    out = 1.0 + (float(guidance_scale) - 1.0) * par_norm / np.sqrt(ref_sq)
    return float(out) if out.ndim == 0 else out


def alignment_sign(cond, uncond):
    """Sign of the inner product between cond - uncond and cond.

    +1 when the update direction points with the conditional prediction,
    -1 against it, 0 when exactly orthogonal.
    """
    c, u = _pair64(cond, uncond)
    inner = ((c - u) * c).sum(axis=-1)
    out = np.sign(inner)
    return float(out) if out.ndim == 0 else out


def cfg_objective(cond, uncond):
    """Half squared distance between the two predictions.

    The guided combination equals a gradient-ascent step on this quantity
    with respect to the conditional prediction: its gradient is exactly
    cond - uncond.
    """
    c, u = _pair64(cond, uncond)
    diff = c - u
    out = 0.5 * (diff * diff).sum(axis=-1)
    return float(out) if out.ndim == 0 else out
