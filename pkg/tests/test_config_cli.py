"""Unit tests for config parsing, the experiment runner glue, and the CLI."""

import numpy as np
import pytest

from pglab.cli import _report_outcomes, entry
from pglab.config import (
    AUTO_RADIUS,
    ExperimentConfig,
    StrategySpec,
    build_config,
    parse_config_text,
    parse_strategy_token,
)
from pglab.errors import ContractError
from pglab.experiments import (
    RunReport,
    class_assignment,
    format_manifest,
    parse_manifest,
    sweep_cells,
)


def test_parse_strategy_token_variants():
    assert parse_strategy_token("none") == StrategySpec(kind="none")
    assert parse_strategy_token("cfg:scale=3") == StrategySpec(kind="cfg", scale=3.0)
    got = parse_strategy_token("apg:scale=3,parallel=0.5,radius=2,momentum=-0.25")
    assert got == StrategySpec(kind="apg", scale=3.0, parallel=0.5,
                               radius=2.0, momentum=-0.25)
    bare = parse_strategy_token("apg:scale=2")
    assert bare.parallel == 0.0
    assert bare.radius == AUTO_RADIUS
    assert bare.momentum == -0.5


@pytest.mark.parametrize("token", [
    "ddim:scale=1",
    "none:x=1",
    "cfg:scale=1,parallel=0",
    "cfg",
    "cfg:parallel=1",
    "apg:scale=abc",
    "apg:scale=1,radius=xyz",
    "apg:scale=1,momentum",
])
def test_parse_strategy_token_rejects(token):
    with pytest.raises(ContractError) as info:
        parse_strategy_token(token)
    # errors must point at the offending token or field
    assert "strategies" in str(info.value)


def test_strategy_token_round_trip():
    for text in ("none", "cfg:scale=2.5",
                 "apg:scale=3.0,parallel=0.1,radius=auto,momentum=-0.5",
                 "apg:scale=7.0,parallel=0.0,radius=56.97979198553695,momentum=-0.75"):
        spec = parse_strategy_token(text)
        assert parse_strategy_token(spec.token()) == spec


def test_needs_calibration():
    assert parse_strategy_token("apg:scale=3").needs_calibration()
    assert not parse_strategy_token("apg:scale=3,radius=2").needs_calibration()
    assert not parse_strategy_token("cfg:scale=3").needs_calibration()


def test_to_strategy_radius_resolution():
    spec = parse_strategy_token("apg:scale=3")
    with pytest.raises(ContractError):
        spec.to_strategy()
    strategy = spec.to_strategy(resolved_radius=1.5)
    assert strategy.params.clamp_radius == 1.5
    fixed = parse_strategy_token("apg:scale=3,radius=0.5").to_strategy()
    assert fixed.params.clamp_radius == 0.5
    assert parse_strategy_token("cfg:scale=2").to_strategy().params.guidance_scale == 2.0


def test_config_defaults_and_round_trip():
    cfg = build_config({})
    assert cfg == ExperimentConfig()
    text = "\n".join(cfg.resolved_lines())
    assert build_config(parse_config_text(text)) == cfg
    custom = build_config({
        "dimension": "32", "steps": "8", "rule": "euler",
        "weights": "0.25 0.75", "strategies": "none cfg:scale=4",
        "momentum_per_evaluation": "false",
        "sweep_radius": "auto 2.0",
    })
    assert custom.dimension == 32
    assert custom.weights == (0.25, 0.75)
    assert custom.strategies[0].kind == "none"
    assert custom.momentum_per_evaluation is False
    assert custom.sweep_radius == (AUTO_RADIUS, 2.0)
    text = "\n".join(custom.resolved_lines())
    assert build_config(parse_config_text(text)) == custom


def test_parse_config_text_diagnostics():
    raw = parse_config_text("# comment\n\nseed = 3\n  steps=8  \n")
    assert raw == {"seed": "3", "steps": "8"}
    with pytest.raises(ContractError) as info:
        parse_config_text("seed = 1\nwat = 2\n")
    assert "line 2" in str(info.value) and "wat" in str(info.value)
    with pytest.raises(ContractError) as info:
        parse_config_text("seed\n")
    assert "line 1" in str(info.value)


@pytest.mark.parametrize("raw,needle", [
    ({"dimension": "0"}, "dimension"),
    ({"dimension": "x"}, "dimension"),
    ({"component_sigma": "-1"}, "component_sigma"),
    ({"weights": "0.5 0.6"}, "weights"),
    ({"weights": "1.5 -0.5"}, "weights"),
    ({"sigma_min": "2", "sigma_max": "1"}, "sigma_min"),
    ({"steps": "0"}, "steps"),
    ({"rule": "rk4"}, "rule"),
    ({"sample_count": "0"}, "sample_count"),
    ({"seed": "-1"}, "seed"),
    ({"strategies": "cfg:scale=-1"}, "scale"),
    ({"momentum_per_evaluation": "maybe"}, "momentum_per_evaluation"),
    ({"sweep_cap": "0"}, "sweep_cap"),
    ({"output_dir": ""}, "output_dir"),
])
def test_build_config_names_offending_key(raw, needle):
    with pytest.raises(ContractError) as info:
        build_config(raw)
    assert needle in str(info.value)


def test_overrides_win_and_none_is_skipped():
    cfg = build_config({"seed": "3"}, {"seed": 7, "output_dir": None})
    assert cfg.seed == 7
    assert cfg.output_dir == "pglab_out"
    cfg = build_config({}, {"output_dir": "elsewhere"})
    assert cfg.output_dir == "elsewhere"


def test_class_assignment_proportions():
    assert np.array_equal(class_assignment((0.5, 0.5), 4), [0, 0, 1, 1])
    assert np.array_equal(class_assignment((0.25, 0.75), 8),
                          [0, 0, 1, 1, 1, 1, 1, 1])
    classes = class_assignment((0.5, 0.5), 1001)
    counts = np.bincount(classes)
    assert abs(counts[0] - counts[1]) <= 1
    assert class_assignment((1.0,), 5).max() == 0


def test_sweep_cells_counting_and_cap():
    cfg = build_config({"sweep_scales": "1 2 3 5 8"})
    cells = sweep_cells(cfg)
    assert len(cells) == 10  # five cfg cells + five apg cells
    kinds = [spec.kind for spec in cells]
    assert kinds.count("cfg") == 5 and kinds.count("apg") == 5
    capped = build_config({"sweep_scales": "1 2 3 5 8", "sweep_cap": "3"})
    with pytest.raises(ContractError) as info:
        sweep_cells(capped)
    assert "sweep_cap" in str(info.value)


def test_manifest_round_trip():
    cfg = build_config({"dimension": "8", "steps": "4"})
    text = format_manifest("toy", cfg, 1.25, {"drift_summary.csv": "ab" * 32})
    parsed = parse_manifest(text)
    assert parsed["head"]["command"] == "toy"
    assert parsed["head"]["hash_algorithm"] == "sha256"
    assert float(parsed["head"]["duration_seconds"]) == 1.25
    assert build_config(parsed["config"]) == cfg
    assert parsed["outputs"] == {"drift_summary.csv": "ab" * 32}


SMALL_CONFIG = """
dimension = 6
mode_magnitude = 2.0
component_sigma = 0.25
sigma_min = 0.01
sigma_max = 5.0
steps = 4
rule = euler
strategies = cfg:scale=2 apg:scale=2
sample_count = 16
seed = 3
"""


def _write_config(tmp_path, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_CONFIG + extra)
    return path


def test_cli_toy_produces_artifacts(tmp_path, capsys):
    cfg_path = _write_config(tmp_path)
    out = tmp_path / "out"
    assert entry(["toy", "--config", str(cfg_path), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "cfg_scale2" in stdout and "manifest" in stdout
    assert (out / "drift_summary.csv").is_file()
    assert (out / "manifest.txt").is_file()
    samples = sorted(p.name for p in out.glob("samples_*.csv"))
    assert len(samples) == 2
    scatters = sorted(p.name for p in out.glob("scatter_*.svg"))
    assert len(scatters) == 2
    header = (out / "drift_summary.csv").read_text().splitlines()[0]
    assert header.startswith("strategy,")


def test_cli_toy_is_deterministic(tmp_path):
    cfg_path = _write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert entry(["toy", "--config", str(cfg_path), "--out", str(out_a)]) == 0
    assert entry(["toy", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    hashes_a = parse_manifest((out_a / "manifest.txt").read_text())["outputs"]
    hashes_b = parse_manifest((out_b / "manifest.txt").read_text())["outputs"]
    assert hashes_a == hashes_b


def test_cli_rejects_zero_sample_count(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text(SMALL_CONFIG + "\nsample_count = 0\n")
    out = tmp_path / "out"
    code = entry(["toy", "--config", str(cfg_path), "--out", str(out)])
    assert code == 1
    assert "sample_count" in capsys.readouterr().err


def test_cli_usage_errors_exit_1():
    for argv in ([], ["frobnicate"], ["toy", "--config"]):
        with pytest.raises(SystemExit) as info:
            entry(argv)
        assert info.value.code == 1


def test_cli_metrics_known_aggregate(tmp_path, capsys):
    import cv2

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    gray = np.full((4, 4, 3), 128, dtype=np.uint8)
    assert cv2.imwrite(str(img_dir / "gray.png"), gray)
    red = np.zeros((4, 4, 3), dtype=np.uint8)
    red[..., 2] = 255
    assert cv2.imwrite(str(img_dir / "red.png"), red)
    out = tmp_path / "report"
    code = entry(["metrics", str(img_dir), "--out", str(out), "--kde"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "2 images" in stdout
    lines = (out / "color_report.csv").read_text().splitlines()
    assert lines[0] == "image,mean_saturation,rms_contrast"
    assert len(lines) == 4  # header, two rows, aggregate
    last = lines[-1].split(",")
    assert last[0] == "aggregate"
    assert float(last[1]) == pytest.approx(0.5, abs=1e-12)
    assert (out / "color_kde.svg").is_file()


def test_cli_metrics_single_gray(tmp_path, capsys):
    import cv2

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    assert cv2.imwrite(str(img_dir / "g.png"),
                       np.full((2, 2, 3), 77, dtype=np.uint8))
    out = tmp_path / "report"
    assert entry(["metrics", str(img_dir), "--out", str(out)]) == 0
    capsys.readouterr()
    rows = (out / "color_report.csv").read_text().splitlines()
    _, sat, con = rows[1].split(",")
    assert float(sat) == 0.0 and float(con) == 0.0


def test_cli_metrics_missing_directory(tmp_path, capsys):
    missing = tmp_path / "nope"
    code = entry(["metrics", str(missing)])
    assert code == 1
    err = capsys.readouterr().err
    assert "nope" in err


def test_cli_metrics_no_matches(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = entry(["metrics", str(empty)])
    assert code == 1
    assert "*.png" in capsys.readouterr().err


def test_cli_metrics_unwritable_output(tmp_path, capsys):
    import cv2

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    assert cv2.imwrite(str(img_dir / "a.png"),
                       np.full((2, 2, 3), 10, dtype=np.uint8))
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    code = entry(["metrics", str(img_dir), "--out", str(blocker)])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_report_outcomes_failure_budget(tmp_path, capsys):
    report = RunReport(
        output_dir=tmp_path, manifest_path=tmp_path / "manifest.txt",
        outcomes=[], sample_total=100, failed_total=2, duration_seconds=0.1,
    )
    assert _report_outcomes(report) == 2
    assert "1%" in capsys.readouterr().err
    ok = RunReport(
        output_dir=tmp_path, manifest_path=tmp_path / "manifest.txt",
        outcomes=[], sample_total=100, failed_total=1, duration_seconds=0.1,
    )
    assert _report_outcomes(ok) == 0
    capsys.readouterr()


def test_cli_selftest_passes(capsys):
    assert entry(["selftest"]) == 0
    stdout = capsys.readouterr().out
    assert "checks passed" in stdout
