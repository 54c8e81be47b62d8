import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from isospec import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, cfg, verb="run", name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = cli.main([verb, str(path), "--out", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.mark.parametrize(
    "cfg, key",
    [
        ({"experiment": "framework_random", "n": 5, "colour": 1}, "colour"),
        ({"experiment": "spectral", "n": 5}, "experiment"),
        ({"experiment": "framework_random", "n": 1}, "n"),
        ({"experiment": "framework_random", "n": 5, "seed": -3}, "seed"),
        ({"experiment": "d1_cauchy", "n": 16, "sigma": "tanh(1)"}, "sigma"),
        ({"experiment": "d1_cauchy", "n": 16, "scheme": "simpson"}, "scheme"),
        ({"experiment": "laplace2d", "n": 8, "omega": {"kind": "exp"}}, "omega"),
        ({"experiment": "laplace2d", "n": 8, "zeros": [[0.5, 0.5]]}, "zeros"),
        ({"experiment": "laplace2d", "n": 8, "kernel_source": "fft"}, "kernel_source"),
        ({"experiment": "framework_random", "n": 5, "tolerances": {"eig_tol": 1}}, "tolerances.eig_tol"),
        ({"experiment": "framework_random", "n": 5, "output": {"format": "xml"}}, "output.format"),
    ],
)
def test_config_errors_name_the_key(tmp_path, capsys, cfg, key):
    code, out = run(tmp_path, cfg)
    assert code == 2
    assert f"'{key}" in capsys.readouterr().err
    m = manifest(out)
    assert m["exit_code"] == 2 and not m["passed"]


def test_sweep_list_preconditions(tmp_path):
    base = {"experiment": "framework_random"}
    assert run(tmp_path, {**base, "n_list": [10]}, "sweep")[0] == 2
    assert run(tmp_path, {**base, "n_list": [10, 10]}, "sweep")[0] == 2
    assert run(tmp_path, {**base, "n_list": [20, 10]}, "sweep")[0] == 2
    assert run(tmp_path, {**base, "n": 10}, "sweep")[0] == 2


def test_parse_config_defaults():
    cfg = cli.parse_config({"experiment": "d1_antiperiodic", "n": 33})
    assert cfg.sigma == "cos(1,0.25)" and cfg.scheme == "trapezoid"
    assert cfg.format == "csv" and cfg.seed == 0


def test_bad_log_level(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ISOSPEC_LOG", "loud")
    code, _ = run(tmp_path, {"experiment": "framework_random", "n": 4})
    assert code == 2 and "ISOSPEC_LOG" in capsys.readouterr().err


def test_missing_or_broken_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_usage_errors_exit_2(capsys):
    assert cli.main([]) == 2
    assert cli.main(["fly", "x.json"]) == 2


@pytest.mark.parametrize(
    "cfg",
    [
        {"experiment": "d1_cauchy", "n": 64, "sigma": "affine(-1,1)"},
        {"experiment": "d1_antiperiodic", "n": 65, "sigma": "cos(1,-0.5)"},
        {"experiment": "laplace2d", "n": 15, "zeros": [[0.5, 0.5, 1]]},  # zero on a node
    ],
)
def test_refused_inputs(tmp_path, cfg):
    code, out = run(tmp_path, cfg)
    assert code == 2
    assert "input refused" in manifest(out)["error"]


def test_critical_kernel_scale_refused(tmp_path):
    from isospec import laplace2d as l2

    g = l2.RectGrid(12)
    zeros = l2.ZeroSet(((0.5 + 0.5j, 1),))
    crit = l2.critical_scaling_2d(g, l2.HarmonicWeight("constant"), l2.solve_poisson_logF(g, zeros))
    cfg = {"experiment": "laplace2d", "n": 12, "zeros": [[0.5, 0.5, 1]], "kernel_scale": crit.t_critical}
    code, out = run(tmp_path, cfg)
    assert code == 2 and "density" in manifest(out)["error"]


def test_d1_cauchy_certificate(tmp_path):
    code, out = run(tmp_path, json.loads((CONFIGS / "d1_cauchy.json").read_text()))
    assert code == 0
    m = manifest(out)
    assert m["passed"] and m["exit_code"] == 0
    names = {c["name"]: c for c in m["checks"]}
    assert names["volterra_certificate"]["passed"]
    assert names["power_norm_hits_zero_at_n"]["passed"]
    assert m["results"][0]["extra"]["certificate"]["exact_closure_identity"] is True
    assert m["config"]["sigma"] == "affine(1,-1)"
    assert all(s["seconds"] >= 0 for s in m["stages"])


def test_laplace_without_zeros_is_unperturbed(tmp_path):
    code, out = run(tmp_path, {"experiment": "laplace2d", "n": 10, "zeros": []})
    assert code == 0
    assert manifest(out)["results"][0]["max_abs_diff"] == 0.0
    with open(out / "spectral_report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100 and all(float(r["abs_diff"]) == 0.0 for r in rows)


def test_framework_random_is_byte_identical(tmp_path):
    cfg = json.loads((CONFIGS / "framework_random.json").read_text())
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    code_a, a = run(tmp_path / "a", cfg)
    code_b, b = run(tmp_path / "b", cfg)
    assert code_a == code_b == 0
    text = (a / "spectral_report.csv").read_bytes()
    assert text == (b / "spectral_report.csv").read_bytes()
    header = text.decode().splitlines()[0]
    assert header == "index,lambda_ref_re,lambda_ref_im,lambda_pert_re,lambda_pert_im,abs_diff,vec_residual"
    assert len(text.decode().splitlines()) == 51


def test_different_seed_changes_report(tmp_path):
    base = {"experiment": "framework_random", "n": 8}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, a = run(tmp_path / "a", {**base, "seed": 1})
    _, b = run(tmp_path / "b", {**base, "seed": 2})
    assert (a / "spectral_report.csv").read_bytes() != (b / "spectral_report.csv").read_bytes()


def test_json_output_parses(tmp_path):
    cfg = {"experiment": "framework_random", "n": 6, "seed": 3, "output": {"format": "json"}}
    code, out = run(tmp_path, cfg)
    assert code == 0
    rows = json.loads((out / "spectral_report.json").read_text())
    assert len(rows) == 6 and list(rows[0]) == list(cli.REPORT_COLUMNS)
    assert isinstance(rows[0]["abs_diff"], float)


def test_check_failure_exits_1_with_manifest(tmp_path):
    cfg = {"experiment": "framework_random", "n": 30, "seed": 1, "tolerances": {"match_tol": 1e-300}}
    code, out = run(tmp_path, cfg)
    assert code == 1
    m = manifest(out)
    assert m["exit_code"] == 1 and not m["passed"]
    assert not {c["name"]: c for c in m["checks"]}["spectra_match"]["passed"]


def test_laplace_sweep(tmp_path):
    code, out = run(tmp_path, json.loads((CONFIGS / "laplace2d_sweep.json").read_text()), "sweep")
    assert code == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "n,max_abs_diff,riesz_condition,greens_discrepancy,verdict"
    rows = [l.split(",") for l in lines[1:4]]
    g = [float(r[3]) for r in rows]
    assert g[0] > g[1] > g[2]
    assert lines[4] == "trend,,,,greens_discrepancy decreasing: pass"
    for n in (32, 64, 128):
        assert (out / f"spectral_report_n{n}.csv").exists()


def test_antiperiodic_sweep(tmp_path):
    code, out = run(tmp_path, json.loads((CONFIGS / "d1_antiperiodic_sweep.json").read_text()), "sweep")
    assert code == 0
    m = manifest(out)
    e = [r["extra"]["reference_error"] for r in m["results"]]
    assert all(0.2 <= b / a <= 0.3 for a, b in zip(e, e[1:]))
    assert (out / "convergence.csv").read_text().rstrip().endswith("reference_error ratio <= 0.3: pass")


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "framework_random", "n": 4}))
    res = subprocess.run(
        [sys.executable, "-m", "isospec", "run", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr


@given(st.floats(allow_nan=False))
def test_fmt_round_trips(x):
    s = cli.fmt(x)
    assert float(s) == x
    if math.isfinite(x):
        assert "e" in s and s == s.lower()
