"""Fast self-contained invariant checks behind ``pglab selftest``.

Each check exercises one contract end to end with tiny inputs and
raises AssertionError on violation; the runner prints one line per
check and reports the failure count.
"""

from __future__ import annotations

import sys

import numpy as np

from .guidance import (
    GuidanceParams,
    MomentumState,
    apg_update,
    cfg_combine,
    clamp_norm,
    momentum_update,
    split_parallel_orthogonal,
)
from .metrics import ImageRGB, kde, mean_saturation, rms_contrast
from .mixture import GaussianMixture, denoiser_uncond, score
from .predictions import ScheduleParams, from_denoised, to_denoised
from .sampler import SigmaSchedule, no_guidance, run_batch


def _check_cfg_forms():
    rng = np.random.default_rng(7)
    cond = rng.standard_normal(64)
    uncond = rng.standard_normal(64)
    for scale in (0.0, 1.0, 2.5, 7.0):
        a = cfg_combine(cond, uncond, scale)
        b = uncond + scale * (cond - uncond)
        err = np.abs(a - b).max() / max(np.abs(b).max(), 1.0)
        assert err <= 1e-12, f"form mismatch {err:.3e} at scale {scale}"


def _check_apg_matches_cfg_when_inert():
    rng = np.random.default_rng(11)
    cond = rng.standard_normal(128)
    uncond = rng.standard_normal(128)
    params = GuidanceParams(
        guidance_scale=3.0, parallel_weight=1.0, clamp_radius=0.0, momentum=0.0
    )
    a = apg_update(cond, uncond, params)
    b = cfg_combine(cond, uncond, 3.0)
    assert np.array_equal(a, b), "inert settings must reproduce plain guidance bitwise"


def _check_projection_split():
    rng = np.random.default_rng(13)
    delta = rng.standard_normal(256)
    ref = rng.standard_normal(256)
    par, orth = split_parallel_orthogonal(delta, ref)
    recon = np.abs(par + orth - delta).max()
    assert recon <= 1e-12, f"split does not reconstruct, err {recon:.3e}"
    cross = abs(float(orth @ ref)) / float(np.linalg.norm(ref) ** 2)
    assert cross <= 1e-12, f"orthogonal part leaks onto reference, {cross:.3e}"


def _check_clamp():
    vec = np.array([3.0, 4.0])
    capped = clamp_norm(vec, 1.0)
    assert abs(np.linalg.norm(capped) - 1.0) <= 1e-12, "norm not capped at radius"
    assert np.array_equal(clamp_norm(vec, 0.0), vec), "radius 0 must disable"
    assert np.array_equal(clamp_norm(vec, 10.0), vec), "inside radius must pass through"


def _check_momentum_recurrence():
    state = MomentumState(momentum=-0.75)
    seen = [momentum_update(state, np.array([1.0]))[0] for _ in range(3)]
    expect = [1.0, 0.25, 0.8125]
    assert np.allclose(seen, expect, atol=1e-15), f"recurrence gave {seen}"


def _check_conversions():
    rng = np.random.default_rng(17)
    sigma = 0.7
    alpha = np.sqrt(1.0 - sigma**2)
    sched = ScheduleParams(alpha=alpha, sigma=sigma)
    z = rng.standard_normal(32)
    for kind in ("epsilon", "v_ddpm"):
        raw = rng.standard_normal(32)
        den = to_denoised(kind, z, raw, sched)
        back = from_denoised(kind, z, den, sched)
        err = np.abs(back - raw).max()
        assert err <= 1e-10, f"{kind} round trip err {err:.3e}"
    x = rng.standard_normal(32)
    eps = rng.standard_normal(32)
    z = alpha * x + sigma * eps
    via_eps = to_denoised("epsilon", z, eps, sched)
    via_v = to_denoised("v_ddpm", z, alpha * eps - sigma * x, sched)
    err = np.abs(via_eps - via_v).max()
    assert err <= 1e-10, f"parameterizations disagree by {err:.3e}"


def _check_mixture_identity():
    rng = np.random.default_rng(19)
    mix = GaussianMixture.symmetric_pair(50, 2.0, 0.25)
    z = rng.standard_normal((8, 50)) * 3.0
    sigma = 1.3
    direct = denoiser_uncond(mix, z, sigma)
    via_score = z + sigma**2 * score(mix, z, sigma)
    err = np.abs(direct - via_score).max()
    assert err <= 1e-10, f"posterior-mean and score forms disagree by {err:.3e}"


def _single_component_denoiser(component_sigma, dimension=2):
    mix = GaussianMixture(
        means=np.zeros((1, dimension)), component_sigma=component_sigma,
        weights=np.array([1.0]),
    )

    def den(z, sigma):
        return denoiser_uncond(mix, z, sigma)

    return den


def _check_sampler_moments():
    sigma_c = 0.25
    den = _single_component_denoiser(sigma_c)
    schedule = SigmaSchedule(sigma_min=0.002, sigma_max=80.0, steps=32)
    result = run_batch(den, den, no_guidance(), schedule, seed=101, count=256,
                       dimension=2, rule="heun")
    assert result.failure_count == 0, "trajectories failed"
    mean = result.terminal.mean(axis=0)
    var = result.terminal.var()
    target = sigma_c**2 + schedule.sigma_min**2
    assert np.abs(mean).max() < 0.1, f"terminal mean off zero: {mean}"
    assert abs(var - target) / target < 0.2, f"terminal variance {var:.4f} vs {target:.4f}"


def _check_batch_determinism():
    den = _single_component_denoiser(0.5, dimension=4)
    schedule = SigmaSchedule(sigma_min=0.01, sigma_max=10.0, steps=8)
    runs = [
        run_batch(den, den, no_guidance(), schedule, seed=3, count=16, dimension=4,
                  jobs=j)
        for j in (1, 4)
    ]
    assert np.array_equal(runs[0].terminal, runs[1].terminal), \
        "terminal states depend on worker count"


def _check_color_metrics():
    flat = np.empty((2, 2, 3))
    flat[..., 0] = 0.5
    flat[..., 1] = 0.25
    flat[..., 2] = 0.25
    img = ImageRGB(pixels=flat)
    sat = mean_saturation(img)
    assert abs(sat - 0.5) <= 1e-12, f"saturation {sat} != 0.5"
    board = np.zeros((2, 2, 3))
    board[0, 0] = board[1, 1] = 1.0
    contrast = rms_contrast(ImageRGB(pixels=board))
    assert abs(contrast - 0.5) <= 1e-12, f"contrast {contrast} != 0.5"


def _check_kde_mass():
    rng = np.random.default_rng(23)
    est = kde(rng.standard_normal(512))
    mass = est.mass()
    assert abs(mass - 1.0) <= 0.02, f"density mass {mass:.4f} off unity"


CHECKS = (
    ("guidance forms agree", _check_cfg_forms),
    ("inert settings reduce to plain guidance", _check_apg_matches_cfg_when_inert),
    ("projection splits cleanly", _check_projection_split),
    ("norm clamp caps and disables", _check_clamp),
    ("momentum recurrence", _check_momentum_recurrence),
    ("prediction conversions round trip", _check_conversions),
    ("mixture denoiser matches score form", _check_mixture_identity),
    ("sampler terminal moments", _check_sampler_moments),
    ("batch determinism across worker counts", _check_batch_determinism),
    ("color metrics on known images", _check_color_metrics),
    ("kde mass near one", _check_kde_mass),
)


def run_selftest(stream=None) -> int:
    """Run every check; print one line each; return the failure count."""
    if stream is None:
        stream = sys.stdout
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except Exception as exc:
            failures += 1
            print(f"FAIL  {name}: {exc}", file=stream)
        else:
            print(f"  ok  {name}", file=stream)
    total = len(CHECKS)
    print(f"{total - failures}/{total} checks passed", file=stream)
    return failures
