import hashlib
import json

import numpy as np
import yaml

import zerostat.trials as trials_mod
from zerostat.cli import main
from zerostat.experiments import (
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_OK,
    ExperimentConfig,
    default_polytope_edges,
    interval_labels,
    list_experiments,
    load_config,
    run,
    validate,
)
from zerostat.polytopes import LatticePolytope
from zerostat.zeros import ZeroSolverError

PAIR = {"experiment": "pair-corr", "parameters": {"N": 20, "trials": 40, "rmax": 3.0, "bins": 6, "batches": 4}, "master_seed": 17}
BK = {"experiment": "bk-count", "parameters": {"polytope": "[[0,0],[3,0],[0,3]]", "trials": 20}, "master_seed": 5}


def write_config(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


# validation ---------------------------------------------------------------------


def test_validate_examples():
    bad = json.loads(json.dumps(PAIR))
    bad["parameters"]["rmax"] = -1
    assert len(validate(bad)) == 1
    nonconvex = {"experiment": "bk-count", "parameters": {"polytope": "[[0,0],[2,0],[1,0],[0,2]]"}}
    assert len(validate(nonconvex)) == 1
    assert validate(PAIR) == []


def test_validate_unknown_names():
    assert validate({"experiment": "nope", "parameters": {}})
    assert validate({"experiment": "pair-corr", "parameters": {"bogus": 1}}) == ["unknown parameter 'bogus'"]
    assert validate({"experiment": "pair-corr", "parameters": {}, "extra": 1})
    assert validate({"experiment": "pair-corr", "parameters": {}, "master_seed": -3})


def test_validate_is_pure():
    doc = json.loads(json.dumps(PAIR))
    validate(doc)
    assert doc == PAIR


def test_every_experiment_has_valid_defaults_except_required():
    for name in list_experiments():
        problems = validate({"experiment": name, "parameters": {}})
        assert all("required" in p for p in problems)


def test_load_config_roundtrip(tmp_path):
    cfg = load_config(write_config(tmp_path, PAIR))
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.master_seed == 17 and cfg.parameters["N"] == 20
    assert ExperimentConfig.from_mapping(cfg.to_dict()) == cfg


# runs -------------------------------------------------------------------------------


def test_rerun_is_byte_identical(tmp_path):
    a = run(PAIR, tmp_path / "a")
    b = run(PAIR, tmp_path / "b")
    c = run(PAIR, tmp_path / "c", workers=2)
    assert a.exit_code in (EXIT_OK, EXIT_FAIL)
    assert data_files(tmp_path / "a") == data_files(tmp_path / "b") == data_files(tmp_path / "c")
    assert "pair_correlation.csv" in data_files(tmp_path / "a")


def test_manifest_lists_every_file_with_hash(tmp_path):
    out = tmp_path / "bk"
    res = run(BK, out)
    assert res.exit_code == EXIT_OK and res.verdict == "PASS"
    manifest = json.loads((out / "manifest.json").read_text())
    files = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["files"]) == files
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["master_seed"] == 5
    assert manifest["config"]["experiment"] == "bk-count"
    assert manifest["solver_failures"] == 0
    assert manifest["count_domain"] == "(C^*)^m"
    assert {"zerostat", "numpy", "python"} <= set(manifest["software"])
    assert manifest["wall_time_s"] >= 0


def test_seed_isolation(tmp_path):
    more = json.loads(json.dumps(BK))
    more["parameters"]["trials"] = 21
    run(BK, tmp_path / "t20")
    run(more, tmp_path / "t21")
    a = (tmp_path / "t20" / "counts.csv").read_text().splitlines()
    b = (tmp_path / "t21" / "counts.csv").read_text().splitlines()
    assert b[: len(a)] == a and len(b) == len(a) + 1

    other = json.loads(json.dumps(PAIR))
    other["master_seed"] = 18
    run(PAIR, tmp_path / "s17")
    run(other, tmp_path / "s18")
    x = (tmp_path / "s17" / "pair_correlation.csv").read_text().splitlines()
    y = (tmp_path / "s18" / "pair_correlation.csv").read_text().splitlines()
    assert x[0] == y[0] and len(x) == len(y)
    assert x != y


def test_square_dilation_count(tmp_path):
    doc = {"experiment": "bk-count", "parameters": {"polytope": "[[0,0],[1,0],[1,1],[0,1]]", "dilation": 2, "trials": 30}}
    res = run(doc, tmp_path / "sq")
    assert res.report.summary["target"] == 8
    assert res.verdict == "PASS"


def test_poisson_selftest_run(tmp_path):
    doc = {"experiment": "poisson-selftest", "parameters": {"trials": 500, "bins": 10}, "master_seed": 1}
    res = run(doc, tmp_path / "p")
    assert res.exit_code == EXIT_OK and res.verdict == "PASS"


def test_kappa_analytic_run(tmp_path):
    doc = {"experiment": "kappa-analytic", "parameters": {"m": 1, "r": [0.1, 1.0, 3.0]}}
    res = run(doc, tmp_path / "k")
    assert res.exit_code == EXIT_OK
    rows = (tmp_path / "k" / "kappa.csv").read_text().splitlines()
    assert len(rows) == 4


def test_config_error_writes_nothing(tmp_path):
    bad = json.loads(json.dumps(PAIR))
    bad["parameters"]["rmax"] = -1
    res = run(bad, tmp_path / "never")
    assert res.exit_code == EXIT_CONFIG and res.violations
    assert not (tmp_path / "never").exists()


def _failing_batch(real):
    def fake(coeffs, tol=1e-8):
        out = real(coeffs, tol=tol)
        return [ZeroSolverError("injected") if i % 10 == 0 else zs for i, zs in enumerate(out)]

    return fake


def test_budget_exceeded_keeps_partial_data(tmp_path, monkeypatch):
    monkeypatch.setattr(trials_mod, "solve_cp1_batch", _failing_batch(trials_mod.solve_cp1_batch))
    doc = {"experiment": "density-map", "parameters": {"N": 10, "trials": 50}}
    res = run(doc, tmp_path / "d")
    assert res.exit_code == EXIT_BUDGET
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["status"] == "solver-failure-budget-exceeded"
    assert manifest["solver_failures"] == 5
    assert set(manifest["files"]) == {p.name for p in (tmp_path / "d").iterdir()} - {"manifest.json"}
    assert manifest["files"]


# CLI ----------------------------------------------------------------------------------


def test_cli_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    names = capsys.readouterr().out.split()
    assert names == list_experiments()
    assert len(names) == 8 and "pair-corr" in names


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", str(write_config(tmp_path, PAIR))]) == EXIT_OK
    bad = json.loads(json.dumps(PAIR))
    bad["parameters"]["rmax"] = -1
    assert main(["validate", str(write_config(tmp_path, bad, "bad.yaml"))]) == EXIT_CONFIG
    assert "rmax" in capsys.readouterr().err


def test_cli_missing_or_malformed_file(tmp_path):
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    junk = tmp_path / "junk.yaml"
    junk.write_text("experiment: [unclosed\n")
    assert main(["run", str(junk)]) == EXIT_CONFIG


def test_cli_run_exit_codes(tmp_path, monkeypatch):
    assert main(["run", str(write_config(tmp_path, BK)), "--out", str(tmp_path / "ok")]) == EXIT_OK
    assert (tmp_path / "ok" / "verdict.json").exists()
    bad = json.loads(json.dumps(BK))
    bad["parameters"]["trials"] = 0
    assert main(["run", str(write_config(tmp_path, bad, "bad.yaml"))]) == EXIT_CONFIG
    # the finite-N kernel remainder decays like 1/N, so this built-in bound fails
    ks = {"experiment": "kernel-scaling", "parameters": {}}
    assert main(["run", str(write_config(tmp_path, ks, "ks.yaml")), "--out", str(tmp_path / "ks")]) == EXIT_FAIL
    monkeypatch.setattr(trials_mod, "solve_cp1_batch", _failing_batch(trials_mod.solve_cp1_batch))
    dm = {"experiment": "density-map", "parameters": {"N": 10, "trials": 50}}
    assert main(["run", str(write_config(tmp_path, dm, "dm.yaml")), "--out", str(tmp_path / "dm")]) == EXIT_BUDGET


def test_cli_output_dir_override(tmp_path):
    doc = dict(BK, output_dir=str(tmp_path / "from_config"))
    main(["run", str(write_config(tmp_path, doc)), "--out", str(tmp_path / "override")])
    assert (tmp_path / "override" / "manifest.json").exists()
    assert not (tmp_path / "from_config").exists()


def test_cli_rejects_bad_workers(tmp_path):
    assert main(["run", str(write_config(tmp_path, BK)), "--workers", "0"]) == EXIT_CONFIG


def test_density_map_curve_values(tmp_path):
    doc = {"experiment": "density-map", "parameters": {"N": 20, "trials": 300}, "master_seed": 2}
    res = run(doc, tmp_path / "dm")
    rows = (tmp_path / "dm" / "bands.csv").read_text().splitlines()
    assert len(rows) == 11
    assert res.exit_code in (EXIT_OK, EXIT_FAIL)
    names = [c["name"] for c in res.report.checks]
    assert names == ["max_band_rel_dev_fs", "max_band_rel_dev_kernel"]
    assert all(np.isfinite(c["value"]) for c in res.report.checks)


def test_interval_labels_keep_margin_out():
    P = LatticePolytope.interval(1, 3)
    assert interval_labels(P, 4, [0.0, 0.2, 0.25, 0.75, 0.8, 1.0]) == ["forbidden", "margin", "allowed", "margin", "forbidden"]
    edges = default_polytope_edges(P, 4, 4)
    assert edges == [0.0, 0.2, 0.25, 0.375, 0.5, 0.625, 0.75, 0.8, 1.0]


def test_polytope_density_run(tmp_path):
    doc = {"experiment": "polytope-density", "parameters": {"polytope": "[1,3]", "p": 4, "dilation": 5, "trials": 200}, "master_seed": 3}
    res = run(doc, tmp_path / "pd")
    rows = (tmp_path / "pd" / "regions.csv").read_text().splitlines()
    assert rows[0] == "region,cells,fs_mass,normalized_level"
    assert [r.split(",")[0] for r in rows[1:]] == ["allowed", "forbidden"]
    assert {c["name"] for c in res.report.checks} == {"allowed_level_vs_fs", "forbidden_over_allowed"}
    labels = {line.rsplit(",", 1)[1] for line in (tmp_path / "pd" / "density.csv").read_text().splitlines()[1:]}
    assert labels == {"allowed", "forbidden", "margin"}
