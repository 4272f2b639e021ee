"""Guidance laboratory: projected guidance for diffusion sampling.

Analytic denoisers, guided probability-flow sampling, and color metrics
in one numpy package, so every guidance claim can be checked without a
trained network.
"""

__version__ = "0.1.0"

from .config import (
    AUTO_RADIUS,
    ExperimentConfig,
    StrategySpec,
    build_config,
    parse_config_text,
    parse_strategy_token,
)
from .errors import (
    ContractError,
    DegenerateBandwidthError,
    DegenerateReferenceError,
    SamplingError,
)
from .guidance import (
    DEGENERATE_NORM_FLOOR,
    DenoisedPair,
    GuidanceParams,
    MomentumState,
    alignment_sign,
    apg_update,
    cfg_combine,
    cfg_objective,
    clamp_norm,
    gain_factor,
    momentum_update,
    split_parallel_orthogonal,
)
from .metrics import (
    ColorReport,
    DensityEstimate,
    ImageRGB,
    batch_color_report,
    kde,
    load_image,
    mean_saturation,
    report_from_paths,
    rgb_to_hsv,
    rms_contrast,
    silverman_bandwidth,
)
from .mixture import (
    GaussianMixture,
    denoiser_cond,
    denoiser_uncond,
    log_responsibilities,
    marginal_log_density,
    responsibilities,
    score,
)
from .predictions import (
    KINDS,
    EDMCoefficients,
    ScheduleParams,
    edm_coefficients,
    from_denoised,
    parse_kind,
    to_denoised,
)
from .sampler import (
    GuidanceStrategy,
    ModeDriftSummary,
    SigmaSchedule,
    Trajectory,
    apg_strategy,
    cfg_strategy,
    euler_step,
    heun_step,
    initial_state,
    karras_sigmas,
    mode_drift,
    nearest_mode,
    no_guidance,
    run_batch,
    sample,
)
from .experiments import (
    RunReport,
    calibrate_radius,
    class_assignment,
    parse_manifest,
    run_sweep,
    run_toy,
    write_trajectory_csv,
)

__all__ = [
    "__version__",
    "AUTO_RADIUS", "ExperimentConfig", "StrategySpec", "build_config",
    "parse_config_text", "parse_strategy_token",
    "ContractError", "DegenerateBandwidthError", "DegenerateReferenceError",
    "SamplingError",
    "DEGENERATE_NORM_FLOOR", "DenoisedPair", "GuidanceParams", "MomentumState",
    "alignment_sign", "apg_update", "cfg_combine", "cfg_objective", "clamp_norm",
    "gain_factor", "momentum_update", "split_parallel_orthogonal",
    "ColorReport", "DensityEstimate", "ImageRGB", "batch_color_report", "kde",
    "load_image", "mean_saturation", "report_from_paths", "rgb_to_hsv",
    "rms_contrast", "silverman_bandwidth",
    "GaussianMixture", "denoiser_cond", "denoiser_uncond", "log_responsibilities",
    "marginal_log_density", "responsibilities", "score",
    "KINDS", "EDMCoefficients", "ScheduleParams", "edm_coefficients",
    "from_denoised", "parse_kind", "to_denoised",
    "GuidanceStrategy", "ModeDriftSummary", "SigmaSchedule", "Trajectory",
    "apg_strategy", "cfg_strategy", "euler_step", "heun_step", "initial_state",
    "karras_sigmas", "mode_drift", "nearest_mode", "no_guidance", "run_batch",
    "sample",
    "RunReport", "calibrate_radius", "class_assignment", "parse_manifest",
    "run_sweep", "run_toy", "write_trajectory_csv",
]
