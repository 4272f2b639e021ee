"""Conversions between denoiser output parameterizations.

Networks trained for diffusion sampling emit one of several quantities:
the added noise, a velocity blend of data and noise, the clean data
estimate itself, or a preconditioned residual.  Guided updates operate on
the clean-data estimate, so sampling loops convert raw outputs to that
space on the way in and back to the native parameterization on the way
out.  The forward corruption is z = alpha * x + sigma * eps, with the
(alpha, sigma) pair supplied by the caller per noise level.

Supported kinds (stable strings used in configs):

* ``epsilon``   - output is the total added noise; alpha and sigma are a
  unit-energy pair (alpha^2 + sigma^2 = 1).
* ``v_ddpm``    - output is alpha * eps - sigma * x under the same
  unit-energy schedule.
* ``denoised``  - output already is the clean-data estimate.
* ``v_rf``      - output is eps - x on a straight-line corruption with
  alpha = 1 - t and sigma = t.
* ``edm``       - output is the residual of a skip/scale preconditioner;
  the clean estimate is c_skip * z + c_out * raw.  One-way: there is no
  inverse, consumers take the clean estimate directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

KINDS = ("epsilon", "v_ddpm", "denoised", "v_rf", "edm")

_UNIT_ENERGY_TOL = 1e-9


def parse_kind(name: str) -> str:
    if name not in KINDS:
        raise ContractError(
            f"prediction kind: unknown {name!r}, expected one of {', '.join(KINDS)}"
        )
    return name


@dataclass(frozen=True)
class ScheduleParams:
    """Signal/noise coefficients of the forward corruption at one level."""

    alpha: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.sigma)):
            raise ContractError("schedule: coefficients must be finite")
        if self.sigma < 0:
            raise ContractError(f"sigma: must be >= 0, got {self.sigma!r}")

    def validate_for(self, kind: str):
        kind = parse_kind(kind)
        if kind in ("epsilon", "v_ddpm"):
            energy = self.alpha**2 + self.sigma**2
            if abs(energy - 1.0) > _UNIT_ENERGY_TOL:
                raise ContractError(
                    f"schedule for {kind}: alpha^2 + sigma^2 must be 1, got {energy!r}"
                )
        elif kind == "edm":
            if self.alpha != 1.0:
                raise ContractError(f"schedule for edm: alpha must be 1, got {self.alpha!r}")
        elif kind == "v_rf":
            if abs(self.alpha - (1.0 - self.sigma)) > _UNIT_ENERGY_TOL:
                raise ContractError(
                    f"schedule for v_rf: alpha must equal 1 - sigma, got "
                    f"alpha={self.alpha!r} sigma={self.sigma!r}"
                )
        return self


@dataclass(frozen=True)
class EDMCoefficients:
    """Preconditioner constants of the skip/scale formulation at one level."""

    c_skip: float
    c_in: float
    c_out: float
    c_noise: float

    def __post_init__(self):
        if not self.c_in > 0:
            raise ContractError(f"c_in: must be > 0, got {self.c_in!r}")
        if not math.isfinite(self.c_out):
            raise ContractError("c_out: must be finite")


def edm_coefficients(sigma: float, sigma_data: float) -> EDMCoefficients:
    """Standard preconditioner constants for a given noise level.

    c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2),
    c_in = 1/sqrt(s^2+sd^2), c_noise = ln(s)/4.
    """
    if not sigma > 0:
        raise ContractError(f"sigma: must be > 0, got {sigma!r}")
    if not sigma_data > 0:
        raise ContractError(f"sigma_data: must be > 0, got {sigma_data!r}")
    total = sigma**2 + sigma_data**2
    return EDMCoefficients(
        c_skip=sigma_data**2 / total,
        c_in=1.0 / math.sqrt(total),
        c_out=sigma * sigma_data / math.sqrt(total),
        c_noise=0.25 * math.log(sigma),
    )


def _pair(z, raw):
    z = np.asarray(z, dtype=np.float64)
    raw = np.asarray(raw, dtype=np.float64)
    if z.shape != raw.shape:
        raise ContractError(f"conversion: shape mismatch {z.shape} vs {raw.shape}")
    return z, raw


def to_denoised(kind, z, raw, sched: ScheduleParams, edm: EDMCoefficients | None = None):
    """Convert a raw network output to the clean-data estimate.

    ``edm`` must be supplied exactly when kind is "edm"; for that kind
    ``raw`` is the network residual already evaluated on the scaled input.
    """
    kind = parse_kind(kind)
    sched.validate_for(kind)
    z, raw = _pair(z, raw)
    if (edm is not None) != (kind == "edm"):
        raise ContractError(
            "edm coefficients must be passed exactly for the edm kind"
        )
    if kind == "epsilon":
        if sched.alpha == 0:
            raise ContractError("epsilon conversion: alpha = 0 divides by zero")
        return (z - sched.sigma * raw) / sched.alpha
    if kind == "v_ddpm":
        return sched.alpha * z - sched.sigma * raw
    if kind == "v_rf":
        return z - sched.sigma * raw
    if kind == "denoised":
        return raw
    return edm.c_skip * z + edm.c_out * raw


def from_denoised(kind, z, denoised, sched: ScheduleParams):
    """Recover the raw network output from the clean-data estimate.

    Exact algebraic inverse of ``to_denoised`` for every kind except
    "edm", which has no inverse here.
    """
    kind = parse_kind(kind)
    if kind == "edm":
        raise ContractError("edm kind is one-way; no inverse conversion exists")
    sched.validate_for(kind)
    z, denoised = _pair(z, denoised)
    if kind == "denoised":
        return denoised
    if sched.sigma == 0:
        raise ContractError(f"{kind} inverse: sigma = 0 divides by zero")
    if kind == "epsilon":
        return (z - sched.alpha * denoised) / sched.sigma
    if kind == "v_ddpm":
        return (sched.alpha * z - denoised) / sched.sigma
    return (z - denoised) / sched.sigma
