"""Closed-form denoisers for an isotropic Gaussian mixture.

Data model: x is drawn from a mixture of k isotropic Gaussians sharing one
per-coordinate standard deviation.  Corruption adds isotropic noise on top
(z = x + sigma * eps), so every marginal quantity has a closed form: each
component convolves to a wider Gaussian with variance component^2 + sigma^2.
With those in hand the package can exercise full sampling runs against a
ground-truth distribution, no trained network involved.

Shapes: z may be a single vector (d,) or a batch (..., d); outputs follow.
Responsibilities are computed in log space because at high dimension the
component log densities differ by thousands of nats and direct
exponentiation underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture: component means, shared std, weights."""

    means: np.ndarray
    component_sigma: float
    weights: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 2:
            raise ContractError("means: expected a (components, dimension) array")
        if weights.shape != (means.shape[0],):
            raise ContractError(
                f"weights: expected {means.shape[0]} entries, got {weights.shape}"
            )
        if np.any(weights <= 0):
            raise ContractError("weights: all must be > 0")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ContractError(f"weights: must sum to 1, got {weights.sum()!r}")
        if not self.component_sigma > 0:
            raise ContractError(
                f"component_sigma: must be > 0, got {self.component_sigma!r}"
            )
        if not np.isfinite(means).all():
            raise ContractError("means: non-finite entries")
        means.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def component_count(self) -> int:
        return self.means.shape[0]

    @classmethod
    def symmetric_pair(cls, dimension, magnitude, component_sigma, weights=(0.5, 0.5)):
        """Two components at -magnitude and +magnitude on every coordinate."""
        means = np.stack(
            [np.full(dimension, -float(magnitude)), np.full(dimension, float(magnitude))]
        )
        return cls(means=means, component_sigma=component_sigma, weights=np.asarray(weights))


def _check_z(mix: GaussianMixture, z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != mix.dimension:
        raise ContractError(
            f"z: last axis must have length {mix.dimension}, got {z.shape}"
        )
    return z


def _component_log_weights(mix: GaussianMixture, z, sigma):
    """Unnormalized per-component log posterior weights, shape (..., k)."""
    z = _check_z(mix, z)
    total_var = mix.component_sigma**2 + float(sigma) ** 2
    diff = z[..., None, :] - mix.means
    sq = (diff * diff).sum(axis=-1)
    return -0.5 * sq / total_var + np.log(mix.weights), total_var


def marginal_log_density(mix: GaussianMixture, z, sigma):
    """Log density of the corrupted marginal at noise level ``sigma``.

    Each component widens to variance component_sigma^2 + sigma^2; the
    mixture log density is the log-sum-exp over components.
    """
    logw, total_var = _component_log_weights(mix, z, sigma)
    d = mix.dimension
    norm = -0.5 * d * np.log(2.0 * np.pi * total_var)
    out = logsumexp(logw, axis=-1) + norm
    return float(out) if np.ndim(out) == 0 else out


def log_responsibilities(mix: GaussianMixture, z, sigma):
    """Log posterior component probabilities given a corrupted sample."""
    logw, _ = _component_log_weights(mix, z, sigma)
    return logw - logsumexp(logw, axis=-1, keepdims=True)


def responsibilities(mix: GaussianMixture, z, sigma):
    return np.exp(log_responsibilities(mix, z, sigma))


def score(mix: GaussianMixture, z, sigma):
    """Gradient of the corrupted marginal log density at ``z``.

    Responsibility-weighted pull toward each component mean, divided by the
    widened variance.
    """
    z = _check_z(mix, z)
    gamma = responsibilities(mix, z, sigma)
    total_var = mix.component_sigma**2 + float(sigma) ** 2
    pull = mix.means - z[..., None, :]
    return (gamma[..., None] * pull).sum(axis=-2) / total_var


def denoiser_uncond(mix: GaussianMixture, z, sigma):
    """Exact posterior mean of the clean sample given a corrupted one.

    Computed as the responsibility-weighted blend of per-component
    posterior means; equals z + sigma^2 * score up to rounding.
    """
    z = _check_z(mix, z)
    gamma = responsibilities(mix, z, sigma)
    total_var = mix.component_sigma**2 + float(sigma) ** 2
    shrink = mix.component_sigma**2 / total_var
    post = mix.means + shrink * (z[..., None, :] - mix.means)
    return (gamma[..., None] * post).sum(axis=-2)


def denoiser_cond(mix: GaussianMixture, class_index, z, sigma):
    """Posterior mean under a single selected component.

    ``class_index`` may be a scalar or an integer array matching the batch
    shape of ``z`` (one component choice per row).
    """
    z = _check_z(mix, z)
    idx = np.asarray(class_index)
    if idx.dtype.kind not in "iu":
        raise ContractError(f"class_index: expected integers, got dtype {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= mix.component_count):
        raise ContractError(
            f"class_index: out of range [0, {mix.component_count}), got "
            f"[{idx.min()}, {idx.max()}]"
        )
    mu = mix.means[idx]
    total_var = mix.component_sigma**2 + float(sigma) ** 2
    shrink = mix.component_sigma**2 / total_var
    return mu + shrink * (z - mu)
