import json
import time

import numpy as np
import pytest

from edgefem.cli import (
    ExperimentConfig,
    main,
    plateau_exit_index,
    resolve_rule,
    run_convergence,
    run_preasymptotic,
    run_probe,
    run_quadcheck,
)
from edgefem.problems import catalog, residual_check
from edgefem.quadrature import builtin_rule, dump_rule

from conftest import fd_curl


def test_config_validation(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"problem": "cube_poly", "order": 1, "mesh_ns": [2, 4], "junk": 1}))
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_json(path)

    with pytest.raises(ValueError, match="strictly increasing"):
        ExperimentConfig(mesh_ns=[4, 4])
    with pytest.raises(ValueError, match="order"):
        ExperimentConfig(order=3)

    cfg = ExperimentConfig(order=2)
    assert cfg.mesh_ns == [2, 4, 6, 8, 12]
    assert cfg.label == "cube_poly_k2"


def test_resolve_rule_specs():
    assert resolve_rule("pt5").label == "pt5"
    assert resolve_rule(3).label == "pt5"
    assert resolve_rule("tensorized:2").label == "tensor_gl2"
    assert resolve_rule("degree:5").label == "pt15"
    with pytest.raises(TypeError):
        resolve_rule(3.5)


@pytest.mark.parametrize("problem", ["cube_poly", "cube_oscillatory(10)", "cube_oscillatory(20)"])
def test_catalog_residual_self_check(problem):
    entry = catalog(problem)
    assert residual_check(entry, n_points=50) <= 1e-10


def test_catalog_unknown_problem():
    with pytest.raises(KeyError):
        catalog("sphere_poly")


def test_catalog_exact_curl_matches_fd(rng):
    # the stored closed-form curl is checked against a finite-difference oracle
    entry = catalog("cube_poly")
    pts = rng.uniform(-0.8, 0.8, size=(20, 3))
    fd = fd_curl(entry.exact, pts)
    assert np.abs(fd - entry.exact_curl(pts)).max() <= 1e-6
    # and curl (mu^-1 curl E) against a second differentiation
    fd2 = fd_curl(lambda q: entry.exact_curl(q) / 10.0, pts)
    assert np.abs(fd2 - entry.curl_mu_inv_curl(pts)).max() <= 1e-5


def test_run_convergence_outputs_and_determinism(tmp_path):
    cfg = ExperimentConfig(problem="cube_poly", order=1, mesh_ns=[1, 2, 3],
                           q1="pt1_offcenter", q2="pt1_centroid", q3="pt1_centroid",
                           fit_window=3, label="tiny")
    recs, fit = run_convergence(cfg, tmp_path / "a")
    assert len(recs) == 3
    assert (tmp_path / "a" / "tiny.csv").exists()
    assert (tmp_path / "a" / "tiny.dat").exists()
    assert "fitted slope" in (tmp_path / "a" / "tiny_summary.txt").read_text()

    run_convergence(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "tiny.csv").read_bytes() == (tmp_path / "b" / "tiny.csv").read_bytes()
    dat = (tmp_path / "a" / "tiny.dat").read_text()
    assert "," not in dat


def test_run_preasymptotic_reports_plateau(tmp_path):
    cfg = ExperimentConfig(problem="cube_oscillatory(10)", order=1, mesh_ns=[2, 3, 4],
                           q1="pt1_offcenter", q2="pt1_centroid", q3="high", label="pre")
    recs, exit_idx = run_preasymptotic(cfg, tmp_path)
    summary = (tmp_path / "pre_summary.txt").read_text()
    assert "plateau exit index" in summary
    assert len(recs) == 3


def test_plateau_exit_index_synthetic():
    assert plateau_exit_index([1.0, 0.9, 0.7]) == 2
    assert plateau_exit_index([1.0, 0.85, 0.67]) == 2
    assert plateau_exit_index([1.0, 0.81, 0.79]) is None
    assert plateau_exit_index([1.0, 1.2, 1.1]) is None
    assert plateau_exit_index([1.0, 0.1]) == 1


def test_run_probe_consistency_and_curved(tmp_path):
    rows, fit = run_probe("consistency", {"order": 1, "m": 1, "mesh_ns": [2, 3, 4],
                                          "problem": "cube_oscillatory(1)"}, tmp_path)
    assert len(rows) == 3
    assert (tmp_path / "probe_consistency.dat").exists()

    rows, fit = run_probe("curved", {"mode": "curlcurl", "order": 1, "m": 1}, tmp_path)
    assert (tmp_path / "probe_curved_summary.txt").exists()
    with pytest.raises(ValueError):
        run_probe("spectral", {}, tmp_path)


def test_run_quadcheck_speed_and_content(tmp_path):
    t0 = time.time()
    report = run_quadcheck(tmp_path)
    assert time.time() - t0 < 1.0
    assert "builtin only" in report
    for label in ("pt1_offcenter", "pt1_centroid", "pt4", "pt5", "pt15", "high"):
        assert label in report
    assert (tmp_path / "quadcheck.txt").exists()


def test_run_quadcheck_custom_rules(tmp_path):
    rules = tmp_path / "rules.txt"
    rules.write_text(dump_rule(builtin_rule("pt5")) + dump_rule(builtin_rule("pt4")))
    report = run_quadcheck(tmp_path, custom_rules_path=rules)
    assert "pt5 (custom): degree 3 pass=True" in report
    assert "pt4 (custom): degree 2 pass=True" in report

    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert "builtin only" in run_quadcheck(tmp_path, custom_rules_path=empty)

    bad = tmp_path / "bad.txt"
    bad.write_text("fake 3 1\n0.25 0.25 0.25 0.1666\n")
    with pytest.raises(RuntimeError, match="certification failed"):
        run_quadcheck(tmp_path, custom_rules_path=bad)


def test_main_quadcheck_exit_code(tmp_path, capsys):
    assert main(["quad-check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "pt15" in out


def test_main_convergence_assert_gate(tmp_path):
    cfg = {"problem": "cube_poly", "order": 1, "mesh_ns": [1, 2, 3],
           "q1": "pt1_offcenter", "q2": "pt1_centroid", "q3": "pt1_centroid",
           "fit_window": 3, "expect_slope": -5.0, "slope_tol": 0.01}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["convergence", "--config", str(path), "--out", str(tmp_path), "--assert"]) == 2
    cfg["expect_slope"] = None
    path.write_text(json.dumps(cfg))
    assert main(["convergence", "--config", str(path), "--out", str(tmp_path)]) == 0


def test_main_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"problem": "cube_poly", "wrong": 1}))
    assert main(["convergence", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_main_requires_config(tmp_path):
    assert main(["convergence", "--out", str(tmp_path)]) == 1


def test_shipped_configs_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for name in ("convergence_k1.json", "convergence_k1_degraded_mass.json",
                 "convergence_k2.json", "convergence_k2_tensorized.json",
                 "preasymptotic_m10_1pt.json"):
        cfg = ExperimentConfig.from_json(root / name)
        for spec in (cfg.q1, cfg.q2, cfg.q3):
            assert resolve_rule(spec) is not None
    for name in ("probe_curved_mass.json", "probe_consistency_m1.json"):
        params = json.loads((root / name).read_text())
        assert params.pop("kind") in ("curved", "consistency")
