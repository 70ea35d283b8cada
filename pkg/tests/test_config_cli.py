import json
import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from cauchyflow.checks import CheckRecord, VerificationReport, load_report, merge_reports
from cauchyflow.cli import main
from cauchyflow.config import RunConfig, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, name="cfg.json", **kw):
    cfg = {"flow": {"name": "taylor_green_2d"}, "dimension": 2, "resolution": 16, "times": [0.1, 0.2]}
    cfg.update(kw)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(argv):
    return main([str(a) for a in argv])


def summary(out):
    return json.loads((Path(out) / "summary.json").read_text())


# -------------------------------------------------------------------- config


@pytest.mark.parametrize("bad", [
    {"order": -3},
    {"resolution": 15},
    {"times": [0.2, 0.1]},
    {"times": []},
    {"weber_samples": 4},
    {"dimension": 3},  # taylor_green_2d is planar
    {"surprise": 1},
    {"tolerances": {"invariant": 0.0}},
    {"tolerances": {"invariant": -1e-6}},
    {"tolerances": {"unknown_tol": 1.0}},
    {"flow": {"name": "solid_rotation"}},
    {"flow": {"name": "hurricane"}},
    {"safety": 1.5},
    {"contour": {"markers": 8}},
])
def test_schema_rejects(bad, tmp_path):
    with pytest.raises(ValidationError):
        load_config(write_cfg(tmp_path, **bad))


def test_config_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "abc_verify.json")
    again = RunConfig.model_validate(json.loads(json.dumps(cfg.echo())))
    assert again == cfg
    assert cfg.tolerances.invariant == 1e-6  # defaults filled in
    assert cfg.flow.build(3).name == "abc"


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    load_config(path)


def test_contour_center_is_seeded(tmp_path):
    a = load_config(write_cfg(tmp_path, seed=7))
    b = load_config(write_cfg(tmp_path, "b.json", seed=7))
    c = load_config(write_cfg(tmp_path, "c.json", seed=8))
    assert a.contour_center() == b.contour_center() != c.contour_center()
    r = a.contour.radius
    assert all(r <= x <= 2 * math.pi - r for x in a.contour_center())


# -------------------------------------------------------------------- checks


def test_check_record_comparisons():
    assert CheckRecord("a", "x", 1e-9, 1e-6).passed
    assert not CheckRecord("a", "x", 1e-3, 1e-6).passed
    assert CheckRecord("a", "x", 5.0, 4.0, "ge").passed
    assert CheckRecord("a", "x", 2.0, 1.8, "in", 2.2).passed
    assert not CheckRecord("a", "x", 2.3, 1.8, "in", 2.2).passed
    assert not CheckRecord("a", "x", math.nan, 1.0).passed
    assert CheckRecord("a", "x", math.inf, 4.0, "ge").passed
    with pytest.raises(ValueError):
        CheckRecord("a", "x", 1.0, 1.0, "lt")


def test_report_overall_and_uniqueness(tmp_path):
    rep = VerificationReport("verify", {"k": 1})
    rep.add(CheckRecord("one", "x", 0.0, 1.0))
    with pytest.raises(ValueError):
        rep.add(CheckRecord("one", "x", 0.0, 1.0))
    assert rep.passed
    rep.add(CheckRecord("two", "y", math.inf, 4.0, "ge"))
    rep.add(CheckRecord("three", "z", 2.0, 1.0))
    assert not rep.passed and [c.name for c in rep.failures()] == ["three"]
    rep.write(tmp_path)
    back = load_report(tmp_path / "summary.json")
    assert back.to_dict()["checks"] == rep.to_dict()["checks"]  # compares nan/inf by their text form
    merged = merge_reports([("a", rep), ("b", back)])
    assert len(merged.checks) == 6 and merged.checks[0].name == "a/one"
    assert not merged.passed


# ----------------------------------------------------------------------- CLI


def test_rest_taylor_passes(tmp_path):
    out = tmp_path / "rest"
    assert run(["taylor", "--config", CONFIGS / "rest_taylor.json", "--output", out, "--quiet"]) == 0
    s = summary(out)
    assert s["passed"] and all(c["passed"] for c in s["checks"])
    assert (out / "series.cfs").exists() and (out / "snapshot_001.cfs").exists()


def test_tg_taylor_invariant_drift(tmp_path):
    out = tmp_path / "tg"
    assert run(["taylor", "--config", CONFIGS / "tg2d_taylor.json", "--output", out, "--quiet"]) == 0
    checks = {c["name"]: c for c in summary(out)["checks"]}
    assert checks["cauchy-invariants"]["value"] <= 1e-7


def test_negative_order_is_a_schema_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, order=-2)
    assert run(["taylor", "--config", cfg, "--output", tmp_path / "o"]) == 2
    assert "order" in capsys.readouterr().err


@pytest.mark.parametrize("content", ["{not json", None])
def test_unreadable_config_exits_2(content, tmp_path):
    p = tmp_path / "x.json"
    if content is not None:
        p.write_text(content)
    assert run(["verify", "--config", p, "--output", tmp_path / "o", "--quiet"]) == 2


def test_extrapolation_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, times=[1.5])
    assert run(["taylor", "--config", cfg, "--output", tmp_path / "o"]) == 2
    assert "trust region" in capsys.readouterr().err


def test_negative_control(tmp_path, capsys):
    cfg = CONFIGS / "negative_control.json"
    assert run(["verify", "--config", cfg, "--output", tmp_path / "a"]) == 2
    assert "--allow-invalid" in capsys.readouterr().err
    out = tmp_path / "b"
    assert run(["verify", "--config", cfg, "--output", out, "--allow-invalid", "--quiet"]) == 1
    checks = {c["name"]: c for c in summary(out)["checks"]}
    assert not checks["unit-jacobian"]["passed"]
    assert checks["unit-jacobian"]["value"] > 1e-3
    assert (out / "diagnostics.csv").exists()  # reports are written on failure too


def test_constant_flow_circulation_rows_are_zero(tmp_path):
    cfg = write_cfg(tmp_path, flow={"name": "uniform", "U": [1.0, 0.5]}, times=[0.0, 0.5, 1.0],
                    contour={"center": [2.0, 2.0], "radius": 0.5, "markers": 64})
    out = tmp_path / "c"
    assert run(["circulation", "--config", cfg, "--output", out, "--quiet"]) == 0
    lines = (out / "circulation.csv").read_text().splitlines()
    assert lines[0] == "t,gamma,gamma0,flux0,drift,stokes_gap,markers"
    for line in lines[1:]:
        assert line.split(",")[1:6] == ["0.0"] * 5


def test_tg_verify_scalar_invariant(tmp_path):
    cfg = write_cfg(tmp_path, resolution=32, times=[0.0, 0.5], noether_dt=[0.04, 0.02, 0.01],
                    contour={"center": [1.5707963267948966] * 2, "radius": 1.0, "markers": 128})
    out = tmp_path / "v"
    assert run(["verify", "--config", cfg, "--output", out, "--quiet"]) == 0
    names = [c["name"] for c in summary(out)["checks"]]
    assert "scalar-vorticity-conservation" in names and "relabeling-symmetry" in names
    assert len(names) == len(set(names))


def test_outputs_are_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, times=[0.0, 0.2], contour={"radius": 0.6, "markers": 32,
                                                        "marker_sweep": [16, 32, 64]})
    for sub in ("track", "circulation", "taylor"):
        a, b = tmp_path / f"{sub}1", tmp_path / f"{sub}2"
        codes = {run([sub, "--config", cfg, "--output", d, "--quiet"]) for d in (a, b)}
        assert len(codes) == 1
        csvs = sorted(p.name for p in a.glob("*.csv"))
        assert csvs
        for name in csvs:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        assert summary(a)["checks"] == summary(b)["checks"]


def test_summary_echo_reparses(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "t"
    run(["track", "--config", cfg, "--output", out, "--quiet"])
    echoed = RunConfig.model_validate(summary(out)["config"])
    assert echoed == load_config(cfg)
    assert set(summary(out)["environment"]) >= {"python", "numpy", "scipy"}


def test_report_merge(tmp_path):
    cfg = write_cfg(tmp_path)
    run(["track", "--config", cfg, "--output", tmp_path / "r1", "--quiet"])
    run(["taylor", "--config", cfg, "--output", tmp_path / "r2", "--quiet"])
    out = tmp_path / "merged"
    code = run(["report-merge", tmp_path / "r1", tmp_path / "r2" / "summary.json", "--output", out, "--quiet"])
    merged = summary(out)
    assert code == (0 if merged["passed"] else 1)
    names = [c["name"] for c in merged["checks"]]
    assert "r1/cauchy-invariants" in names and "r2/cauchy-invariants" in names
    assert run(["report-merge", tmp_path / "missing", "--output", out]) == 2


def test_threads_flag(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run(["track", "--config", cfg, "--output", tmp_path / "a", "--threads", "2", "--quiet"]) == 0
    assert run(["track", "--config", cfg, "--output", tmp_path / "b", "--threads", "0", "--quiet"]) == 2
