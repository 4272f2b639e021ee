"""Unit tests for the analytic mixture denoisers."""

import numpy as np
import pytest

from pglab.errors import ContractError
from pglab.mixture import (
    GaussianMixture,
    denoiser_cond,
    denoiser_uncond,
    log_responsibilities,
    marginal_log_density,
    responsibilities,
    score,
)

from _oracles import central_fd_gradient, posterior_mean_quad

PAIR_1D = GaussianMixture(
    means=np.array([[-2.0], [2.0]]), component_sigma=0.25, weights=np.array([0.5, 0.5])
)


def test_construction_validation():
    with pytest.raises(ContractError):
        GaussianMixture(means=np.zeros((2, 3)), component_sigma=0.25,
                        weights=np.array([0.5, 0.4]))
    with pytest.raises(ContractError):
        GaussianMixture(means=np.zeros((2, 3)), component_sigma=0.25,
                        weights=np.array([1.5, -0.5]))
    with pytest.raises(ContractError):
        GaussianMixture(means=np.zeros((2, 3)), component_sigma=0.0,
                        weights=np.array([0.5, 0.5]))
    with pytest.raises(ContractError):
        GaussianMixture(means=np.zeros((2, 3)), component_sigma=0.25,
                        weights=np.array([0.5, 0.25, 0.25]))


def test_symmetric_pair_layout():
    mix = GaussianMixture.symmetric_pair(500, 2.0, 0.25)
    assert mix.dimension == 500
    assert mix.component_count == 2
    assert np.array_equal(mix.means[0], np.full(500, -2.0))
    assert np.array_equal(mix.means[1], np.full(500, 2.0))


def test_marginal_log_density_single_component_at_mode():
    mix = GaussianMixture(means=np.array([[0.0]]), component_sigma=1.0,
                          weights=np.array([1.0]))
    got = marginal_log_density(mix, np.array([0.0]), 0.0)
    assert got == pytest.approx(np.log(1.0 / np.sqrt(2.0 * np.pi)), abs=1e-12)


def test_marginal_log_density_symmetry_at_midpoint():
    # both components sit at the same offset from the midpoint
    direct = marginal_log_density(PAIR_1D, np.array([0.0]), 0.5)
    total_var = 0.25**2 + 0.5**2
    one = -0.5 * 4.0 / total_var - 0.5 * np.log(2.0 * np.pi * total_var)
    assert direct == pytest.approx(one, abs=1e-12)


def test_marginal_log_density_matches_grid_quadrature_d3():
    # convolution integral on a 3-D grid; trapezoid on fully decayed
    # gaussians is accurate far beyond the 1e-4 requirement
    mix = GaussianMixture.symmetric_pair(3, 2.0, 0.25)
    z = np.array([0.5, -0.3, 1.2])
    sigma = 1.0
    h = 0.05
    axis = np.arange(-3.6, 3.6 + h / 2, h)
    grids = np.meshgrid(axis, axis, axis, indexing="ij")
    dens = np.zeros_like(grids[0])
    for mean, weight in zip(mix.means, mix.weights):
        expo = sum((g - m) ** 2 for g, m in zip(grids, mean))
        dens += weight * np.exp(-0.5 * expo / 0.25**2) / (2.0 * np.pi * 0.25**2) ** 1.5
    expo = sum((zi - g) ** 2 for zi, g in zip(z, grids))
    integrand = dens * np.exp(-0.5 * expo / sigma**2) / (2.0 * np.pi * sigma**2) ** 1.5
    value = integrand
    for _ in range(3):
        value = np.trapezoid(value, dx=h, axis=-1) if hasattr(np, "trapezoid") \
            else np.trapz(value, dx=h, axis=-1)
    got = marginal_log_density(mix, z, sigma)
    assert got == pytest.approx(np.log(value), rel=1e-4)


def test_score_zero_at_single_component_mode():
    mix = GaussianMixture(means=np.array([[1.0, -1.0]]), component_sigma=0.5,
                          weights=np.array([1.0]))
    got = score(mix, np.array([1.0, -1.0]), 0.7)
    assert np.abs(got).max() <= 1e-14


def test_score_zero_at_symmetric_midpoint():
    mix = GaussianMixture.symmetric_pair(4, 2.0, 0.25)
    got = score(mix, np.zeros(4), 1.0)
    assert np.abs(got).max() <= 1e-12


def test_score_matches_finite_differences():
    # d <= 5, sigma in {0.1, 1, 10}
    rng = np.random.default_rng(30)
    for sigma in (0.1, 1.0, 10.0):
        for dim in (1, 2, 3, 5):
            mix = GaussianMixture.symmetric_pair(dim, 2.0, 0.25)
            for _ in range(5):
                z = rng.uniform(-3.0, 3.0, size=dim)
                got = score(mix, z, sigma)
                ref = central_fd_gradient(
                    lambda x: marginal_log_density(mix, x, sigma), z
                )
                denom = max(float(np.abs(ref).max()), 1e-6)
                assert np.abs(got - ref).max() / denom <= 1e-5


def test_denoiser_uncond_identity_at_zero_noise():
    rng = np.random.default_rng(31)
    z = rng.standard_normal(6)
    mix = GaussianMixture.symmetric_pair(6, 2.0, 0.25)
    assert np.abs(denoiser_uncond(mix, z, 0.0) - z).max() <= 1e-12


def test_denoiser_uncond_collapses_to_prior_mean_at_huge_noise():
    mix = GaussianMixture(means=np.array([[1.5, -0.5]]), component_sigma=0.3,
                          weights=np.array([1.0]))
    got = denoiser_uncond(mix, np.array([40.0, -17.0]), 1e6)
    assert np.abs(got - mix.means[0]).max() <= 1e-3


def test_denoiser_uncond_matches_quadrature_1d():
    for z in (0.5, -1.7, 0.0, 3.2):
        got = denoiser_uncond(PAIR_1D, np.array([z]), 1.0)[0]
        ref = posterior_mean_quad(z, [-2.0, 2.0], [0.5, 0.5], 0.25, 1.0)
        assert got == pytest.approx(ref, abs=1e-6)


def test_tweedie_equivalence_up_to_d500():
    rng = np.random.default_rng(32)
    for dim in (2, 50, 500):
        mix = GaussianMixture.symmetric_pair(dim, 2.0, 0.25)
        z = rng.standard_normal((4, dim)) * 3.0
        for sigma in (0.1, 1.0, 5.0):
            a = denoiser_uncond(mix, z, sigma)
            b = z + sigma**2 * score(mix, z, sigma)
            assert np.abs(a - b).max() <= 1e-10


def test_denoiser_cond_known_values():
    assert np.abs(
        denoiser_cond(PAIR_1D, 1, np.array([2.0]), 3.0) - 2.0
    ).max() <= 1e-12
    rng = np.random.default_rng(33)
    z = rng.standard_normal(1)
    assert np.abs(denoiser_cond(PAIR_1D, 0, z, 0.0) - z).max() <= 1e-12
    got = denoiser_cond(PAIR_1D, 1, np.array([0.0]), 1.0)[0]
    assert got == pytest.approx(2.0 + (0.0625 / 1.0625) * (-2.0), abs=1e-9)


def test_denoiser_cond_equals_uncond_for_single_component():
    mix = GaussianMixture(means=np.array([[0.3, -0.7, 1.1]]), component_sigma=0.4,
                          weights=np.array([1.0]))
    rng = np.random.default_rng(34)
    z = rng.standard_normal((5, 3))
    assert np.array_equal(denoiser_cond(mix, 0, z, 0.8), denoiser_uncond(mix, z, 0.8))


def test_denoiser_cond_per_row_classes():
    mix = GaussianMixture.symmetric_pair(3, 2.0, 0.25)
    rng = np.random.default_rng(35)
    z = rng.standard_normal((4, 3))
    idx = np.array([0, 1, 1, 0])
    batch = denoiser_cond(mix, idx, z, 1.0)
    for i in range(4):
        assert np.array_equal(batch[i], denoiser_cond(mix, int(idx[i]), z[i], 1.0))


def test_denoiser_cond_validation():
    with pytest.raises(ContractError):
        denoiser_cond(PAIR_1D, 2, np.array([0.0]), 1.0)
    with pytest.raises(ContractError):
        denoiser_cond(PAIR_1D, -1, np.array([0.0]), 1.0)
    with pytest.raises(ContractError):
        denoiser_cond(PAIR_1D, 0.5, np.array([0.0]), 1.0)


def test_responsibilities_normalized_even_in_far_tails():
    mix = GaussianMixture.symmetric_pair(4, 2.0, 0.25)
    for scale in (1.0, 1e3, 1e6):
        z = np.full(4, scale * 0.25)
        gamma = responsibilities(mix, z, 0.5)
        assert np.isfinite(gamma).all()
        assert gamma.min() >= 0.0
        assert abs(gamma.sum() - 1.0) <= 1e-12


def test_log_responsibilities_consistent_with_responsibilities():
    rng = np.random.default_rng(36)
    mix = GaussianMixture.symmetric_pair(8, 2.0, 0.25)
    z = rng.standard_normal((3, 8)) * 2.0
    lg = log_responsibilities(mix, z, 1.0)
    assert np.abs(np.exp(lg) - responsibilities(mix, z, 1.0)).max() <= 1e-12


def test_dimension_mismatch_rejected():
    with pytest.raises(ContractError):
        score(PAIR_1D, np.zeros(3), 1.0)
