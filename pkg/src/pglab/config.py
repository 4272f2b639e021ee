"""Run configuration: a flat key = value file plus strategy tokens.

The file format is one ``key = value`` pair per line, ``#`` comments and
blank lines ignored.  List-valued keys separate entries with whitespace.
Strategies are compact tokens:

    none
    cfg:scale=3
    apg:scale=3,parallel=0,radius=auto,momentum=-0.5

Unspecified strategy fields fall back to the shipped defaults
(parallel=0, radius=auto, momentum=-0.5).  ``radius=auto`` asks the
runner to calibrate the clamp radius from observed update norms before
the main batch.  Command-line flags override file values; every
validation error names the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ContractError
from .guidance import GuidanceParams
from .sampler import GuidanceStrategy

_CONFIG_KEYS = (
    "dimension", "mode_magnitude", "component_sigma", "weights",
    "sigma_min", "sigma_max", "rho", "steps", "rule",
    "strategies", "sample_count", "seed", "output_dir",
    "momentum_per_evaluation",
    "sweep_scales", "sweep_parallel", "sweep_radius", "sweep_momentum",
    "sweep_cap",
)

AUTO_RADIUS = "auto"


@dataclass(frozen=True)
class StrategySpec:
    """A strategy token before radius calibration."""

    kind: str
    scale: float = 1.0
    parallel: float = 0.0
    radius: float | str = AUTO_RADIUS
    momentum: float = -0.5

    def needs_calibration(self) -> bool:
        return self.kind == "apg" and self.radius == AUTO_RADIUS

    def to_strategy(self, resolved_radius: float | None = None) -> GuidanceStrategy:
        if self.kind == "none":
            return GuidanceStrategy(kind="none")
        if self.kind == "cfg":
            return GuidanceStrategy(
                kind="cfg", params=GuidanceParams(guidance_scale=self.scale)
            )
        radius = self.radius
        if radius == AUTO_RADIUS:
            if resolved_radius is None:
                raise ContractError(
                    "strategy radius=auto requires a calibrated value"
                )
            radius = resolved_radius
        return GuidanceStrategy(
            kind="apg",
            params=GuidanceParams(
                guidance_scale=self.scale,
                parallel_weight=self.parallel,
                clamp_radius=float(radius),
                momentum=self.momentum,
            ),
        )

    def token(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "cfg":
            return f"cfg:scale={self.scale!r}"
        radius = self.radius if self.radius == AUTO_RADIUS else repr(self.radius)
        return (
            f"apg:scale={self.scale!r},parallel={self.parallel!r},"
            f"radius={radius},momentum={self.momentum!r}"
        )

    def label(self) -> str:
        if self.kind == "none":
            return "none"
        text = f"{self.kind}_scale{self.scale:g}"
        return text.replace("-", "m").replace(".", "p")


def parse_strategy_token(token: str) -> StrategySpec:
    head, _, tail = token.partition(":")
    if head not in ("none", "cfg", "apg"):
        raise ContractError(
            f"strategies: unknown kind {head!r} in token {token!r}"
        )
    if head == "none":
        if tail:
            raise ContractError(f"strategies: 'none' takes no fields, got {token!r}")
        return StrategySpec(kind="none")
    fields = {}
    if tail:
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ContractError(
                    f"strategies: expected key=value in token {token!r}, got {item!r}"
                )
            fields[key.strip()] = value.strip()
    allowed = {"scale"} if head == "cfg" else {"scale", "parallel", "radius", "momentum"}
    unknown = set(fields) - allowed
    if unknown:
        raise ContractError(
            f"strategies: unknown field(s) {sorted(unknown)} in token {token!r}"
        )
    if "scale" not in fields:
        raise ContractError(f"strategies: token {token!r} is missing scale=")
    try:
        scale = float(fields["scale"])
    except ValueError:
        raise ContractError(
            f"strategies: scale must be a number in token {token!r}"
        ) from None
    if head == "cfg":
        return StrategySpec(kind="cfg", scale=scale)
    spec = StrategySpec(kind="apg", scale=scale)
    if "parallel" in fields:
        spec = replace(spec, parallel=_float_field("parallel", fields["parallel"]))
    if "radius" in fields:
        raw = fields["radius"]
        spec = replace(
            spec, radius=AUTO_RADIUS if raw == AUTO_RADIUS else _float_field("radius", raw)
        )
    if "momentum" in fields:
        spec = replace(spec, momentum=_float_field("momentum", fields["momentum"]))
    return spec


def _float_field(name, raw):
    try:
        return float(raw)
    except ValueError:
        raise ContractError(f"strategies: {name} must be a number, got {raw!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated description of a toy or sweep run."""

    dimension: int = 500
    mode_magnitude: float = 2.0
    component_sigma: float = 0.25
    weights: tuple = (0.5, 0.5)
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    steps: int = 64
    rule: str = "heun"
    strategies: tuple = field(
        default_factory=lambda: (
            parse_strategy_token("cfg:scale=3"),
            parse_strategy_token("apg:scale=3"),
        )
    )
    sample_count: int = 1000
    seed: int = 0
    output_dir: str = "pglab_out"
    momentum_per_evaluation: bool = True
    sweep_scales: tuple = (1.0, 2.0, 3.0, 5.0, 8.0)
    sweep_parallel: tuple = (0.0,)
    sweep_radius: tuple = (AUTO_RADIUS,)
    sweep_momentum: tuple = (-0.5,)
    sweep_cap: int = 256

    def resolved_lines(self):
        """Canonical key = value lines reproducing this config exactly."""
        return [
            f"dimension = {self.dimension}",
            f"mode_magnitude = {self.mode_magnitude!r}",
            f"component_sigma = {self.component_sigma!r}",
            "weights = " + " ".join(repr(w) for w in self.weights),
            f"sigma_min = {self.sigma_min!r}",
            f"sigma_max = {self.sigma_max!r}",
            f"rho = {self.rho!r}",
            f"steps = {self.steps}",
            f"rule = {self.rule}",
            "strategies = " + " ".join(s.token() for s in self.strategies),
            f"sample_count = {self.sample_count}",
            f"seed = {self.seed}",
            f"output_dir = {self.output_dir}",
            f"momentum_per_evaluation = {'true' if self.momentum_per_evaluation else 'false'}",
            "sweep_scales = " + " ".join(repr(v) for v in self.sweep_scales),
            "sweep_parallel = " + " ".join(repr(v) for v in self.sweep_parallel),
            "sweep_radius = " + " ".join(
                v if v == AUTO_RADIUS else repr(v) for v in self.sweep_radius
            ),
            "sweep_momentum = " + " ".join(repr(v) for v in self.sweep_momentum),
            f"sweep_cap = {self.sweep_cap}",
        ]


def parse_config_text(text: str) -> dict:
    """Parse key = value lines into a raw string dict; keys must be known."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq:
            raise ContractError(
                f"config line {lineno}: expected 'key = value', got {stripped!r}"
            )
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ContractError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


def _parse_int(raw, key, minimum=None):
    try:
        value = int(raw)
    except ValueError:
        raise ContractError(f"{key}: expected an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ContractError(f"{key}: must be >= {minimum}, got {value}")
    return value


def _parse_float(raw, key, positive=False):
    try:
        value = float(raw)
    except ValueError:
        raise ContractError(f"{key}: expected a number, got {raw!r}") from None
    if positive and not value > 0:
        raise ContractError(f"{key}: must be > 0, got {value}")
    return value


def _parse_bool(raw, key):
    if raw in ("true", "1", "yes"):
        return True
    if raw in ("false", "0", "no"):
        return False
    raise ContractError(f"{key}: expected true or false, got {raw!r}")


def build_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate raw strings (file values plus overrides) into a config."""
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = str(value)
    cfg = ExperimentConfig()
    out = {}
    if "dimension" in merged:
        out["dimension"] = _parse_int(merged["dimension"], "dimension", minimum=1)
    if "mode_magnitude" in merged:
        out["mode_magnitude"] = _parse_float(merged["mode_magnitude"], "mode_magnitude")
    if "component_sigma" in merged:
        out["component_sigma"] = _parse_float(
            merged["component_sigma"], "component_sigma", positive=True
        )
    if "weights" in merged:
        parts = merged["weights"].split()
        if len(parts) < 1:
            raise ContractError("weights: expected at least one value")
        out["weights"] = tuple(_parse_float(p, "weights") for p in parts)
    if "sigma_min" in merged:
        out["sigma_min"] = _parse_float(merged["sigma_min"], "sigma_min", positive=True)
    if "sigma_max" in merged:
        out["sigma_max"] = _parse_float(merged["sigma_max"], "sigma_max", positive=True)
    if "rho" in merged:
        out["rho"] = _parse_float(merged["rho"], "rho", positive=True)
    if "steps" in merged:
        out["steps"] = _parse_int(merged["steps"], "steps", minimum=1)
    if "rule" in merged:
        if merged["rule"] not in ("euler", "heun"):
            raise ContractError(f"rule: expected euler or heun, got {merged['rule']!r}")
        out["rule"] = merged["rule"]
    if "strategies" in merged:
        tokens = merged["strategies"].split()
        if not tokens:
            raise ContractError("strategies: expected at least one token")
        out["strategies"] = tuple(parse_strategy_token(t) for t in tokens)
    if "sample_count" in merged:
        out["sample_count"] = _parse_int(merged["sample_count"], "sample_count", minimum=1)
    if "seed" in merged:
        out["seed"] = _parse_int(merged["seed"], "seed", minimum=0)
    if "output_dir" in merged:
        if not merged["output_dir"]:
            raise ContractError("output_dir: must not be empty")
        out["output_dir"] = merged["output_dir"]
    if "momentum_per_evaluation" in merged:
        out["momentum_per_evaluation"] = _parse_bool(
            merged["momentum_per_evaluation"], "momentum_per_evaluation"
        )
    if "sweep_scales" in merged:
        out["sweep_scales"] = tuple(
            _parse_float(p, "sweep_scales") for p in merged["sweep_scales"].split()
        )
    if "sweep_parallel" in merged:
        out["sweep_parallel"] = tuple(
            _parse_float(p, "sweep_parallel") for p in merged["sweep_parallel"].split()
        )
    if "sweep_radius" in merged:
        out["sweep_radius"] = tuple(
            p if p == AUTO_RADIUS else _parse_float(p, "sweep_radius")
            for p in merged["sweep_radius"].split()
        )
    if "sweep_momentum" in merged:
        out["sweep_momentum"] = tuple(
            _parse_float(p, "sweep_momentum") for p in merged["sweep_momentum"].split()
        )
    if "sweep_cap" in merged:
        out["sweep_cap"] = _parse_int(merged["sweep_cap"], "sweep_cap", minimum=1)

    cfg = replace(cfg, **out)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig):
    if not cfg.sigma_min < cfg.sigma_max:
        raise ContractError(
            f"sigma_min: must be below sigma_max, got {cfg.sigma_min!r} vs {cfg.sigma_max!r}"
        )
    total = sum(cfg.weights)
    if any(w <= 0 for w in cfg.weights):
        raise ContractError("weights: all must be > 0")
    if abs(total - 1.0) > 1e-9:
        raise ContractError(f"weights: must sum to 1, got {total!r}")
    for spec in cfg.strategies:
        if spec.scale < 0:
            raise ContractError(f"strategies: scale must be >= 0, got {spec.scale!r}")


def load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ContractError(f"config: cannot read {path}: {exc}") from None
