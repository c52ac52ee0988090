import csv
import json

import pytest

from spintorus.harness import (
    DEFAULT_TOLERANCES,
    SCHEMA_VERSION,
    ConfigError,
    load_config,
    main,
    parse_config,
    replay,
)

MANIFEST_KEYS = {
    "schema_version", "command", "mode", "argv", "versions", "started", "status", "checks",
    "config", "seed", "tolerances", "timings", "wall_time_s",
}
REPORT_KEYS = {"schema_version", "command", "passed", "checks", "data"}
CHECK_KEYS = {"name", "residual", "tolerance", "passed"}


def write_config(tmp_path, model, **sections):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model": model, **sections}))
    return str(path)


def read(path):
    return json.loads(path.read_text())


def test_default_config():
    cfg = load_config(None)
    assert (cfg.model.n, cfg.model.N, cfg.model.eta) == (3, 2, 0.6)
    assert cfg.seed == 42
    assert load_config(None).model == cfg.model
    assert load_config(None, seed_override=7).model != cfg.model


@pytest.mark.parametrize(
    "data,field",
    [
        ({"model": {"n": 3, "N": 2, "eta": 0}}, "eta"),
        ({"model": {"n": 3, "N": 2, "eta": 0.6, "thetas": [0.1, 0.1]}}, r"theta\[0\] and theta\[1\]"),
        ({"model": {"n": 3, "eta": 0.6}}, r"model\.N"),
        ({"model": {"n": "3", "N": 2, "eta": 0.6}}, r"model\.n"),
        ({"model": {"n": 3, "N": 2, "eta": 0.6}, "tolerances": {"nope": 1}}, r"tolerances\.nope"),
        ({"model": {"n": 3, "N": 2, "eta": 0.6}, "tolerances": {"fusion": -1}}, r"tolerances\.fusion"),
        ({"model": {"n": 3, "N": 2, "eta": 0.6}, "seeds": {"global": -2}}, r"seeds\.global"),
        ({"model": {"n": 3, "N": 2, "eta": 0.6}, "extra": {}}, "unknown section"),
    ],
)
def test_validation_names_field(data, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(data)


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "model": {\n    "n": 3,\n  }\n}')
    with pytest.raises(ConfigError, match="line 4"):
        load_config(str(path))


def test_check_default_passes(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["check", "--out", str(out)]) == 0
    manifest = read(out / "manifest.json")
    report = read(out / "report.json")
    assert set(manifest) == MANIFEST_KEYS
    assert set(report) == REPORT_KEYS
    assert manifest["schema_version"] == report["schema_version"] == SCHEMA_VERSION
    assert manifest["status"] == "passed"
    assert all(set(c) >= CHECK_KEYS for c in report["checks"])
    names = {c["name"] for c in report["checks"]}
    assert {"qybe", "commutativity", "hamiltonian_cross", "ladder_quantum_determinant"} <= names
    assert "check: passed" in capsys.readouterr().out


def test_manifest_written_on_config_failure(tmp_path):
    cfg = write_config(tmp_path, {"n": 3, "N": 2, "eta": 0})
    out = tmp_path / "run"
    assert main(["check", "--config", cfg, "--out", str(out)]) == 2
    manifest = read(out / "manifest.json")
    assert manifest["status"] == "error"
    assert "eta" in manifest["error"]


def test_tolerance_override_can_fail_run(tmp_path):
    out = tmp_path / "run"
    assert main(["check", "--out", str(out), "--tol", "r_matrix=1e-30"]) == 1
    assert read(out / "manifest.json")["status"] == "failed"
    assert main(["check", "--out", str(out), "--tol", "bogus=1"]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SPINTORUS_OUT", str(tmp_path / "env"))
    cfg = write_config(tmp_path, {"n": 2, "N": 2, "eta": 0.4})
    assert main(["tq-verify", "--config", cfg]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_spectrum_su3_single_site(tmp_path):
    cfg = write_config(tmp_path, {"n": 3, "N": 1, "eta": 0.5, "thetas": [0.1]})
    out = tmp_path / "run"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    report = read(out / "report.json")
    assert report["data"]["num_records"] == 3
    assert any(c["name"] == "trace_identity" and c["passed"] for c in report["checks"])
    with open(out / "spectrum.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["state", "m", "re_u", "im_u", "re_lambda", "im_lambda"]
    assert len(rows) == 1 + 3 * 3 * 21


def test_tq_verify_random_roots(tmp_path):
    out = tmp_path / "run"
    assert main(["tq-verify", "--out", str(out)]) == 0
    report = read(out / "report.json")
    assert report["data"]["sequence_counts"] == {"1": 5, "2": 5}


def test_solve_functional_reports_matches(tmp_path):
    cfg = write_config(tmp_path, {"n": 3, "N": 1, "eta": 0.5, "thetas": [0.1]})
    out = tmp_path / "run"
    assert main(["solve", "--mode", "functional", "--config", cfg, "--out", str(out)]) == 0
    assert read(out / "report.json")["data"]["summary"] == "3/3 matches"


def test_export(tmp_path):
    cfg = write_config(tmp_path, {"n": 2, "N": 2, "eta": 0.4, "thetas": [0.1, -0.2]})
    out = tmp_path / "run"
    assert main(["export", "--config", cfg, "--out", str(out)]) == 0
    for name in ("model.json", "records.json", "spectrum.csv", "manifest.json", "report.json"):
        assert (out / name).exists()
    assert read(out / "model.json")["n"] == 2


def test_replay_reproduces(tmp_path):
    out = tmp_path / "run"
    main(["check", "--out", str(out), "--seed", "5"])
    manifest, diffs = replay(out / "manifest.json")
    assert manifest["seed"] == 5
    assert diffs and max(diffs.values()) == 0.0
    assert main(["replay", str(out / "manifest.json")]) == 0


def test_tolerance_names_are_stable():
    assert set(DEFAULT_TOLERANCES) == {
        "r_matrix", "fusion", "commutativity", "hamiltonian", "relations", "laurent_fit",
        "match", "tq", "bae_residual", "certification",
    }
