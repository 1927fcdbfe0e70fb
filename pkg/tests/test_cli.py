import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from bayesid.cli import load_config, main, ConfigError
from bayesid.experiments import FlopDims, flop_model

DEMO = Path(__file__).resolve().parents[1] / "demos" / "configs" / "linear_pendulum.yaml"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def cfg_path(tmp_path):
    cfg = yaml.safe_load(DEMO.read_text())
    cfg["mcmc"]["n_samples"] = 600
    cfg["predict"]["draws"] = 40
    cfg["suite"]["landscape"]["grid"] = 6
    cfg["suite"]["landscape"]["n_values"] = [20]
    cfg["suite"]["sweep"].update(n_values=[10], n_samples=300, n_draws=10)
    cfg["output"]["dir"] = str(tmp_path / "out")
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


def _write_cfg(tmp_path, cfg, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


def test_simulate_writes_configured_rows(cfg_path, tmp_path):
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    out = tmp_path / "out"
    rows = _rows(out / "observations.csv")
    assert len(rows) == 41
    manifest = json.loads((out / "manifest-simulate.json").read_text())
    assert manifest["seeds"]["noise_seed"] == 7
    assert set(manifest["files"]) == {"truth.csv", "observations.csv"}


def test_simulate_n_zero_writes_nothing(cfg_path, tmp_path):
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["data"]["n"] = 0
    cfg["output"]["dir"] = str(tmp_path / "empty")
    assert main(["simulate", "--config", str(_write_cfg(tmp_path, cfg))]) == 2
    assert not (tmp_path / "empty").exists() or not any((tmp_path / "empty").iterdir())


def test_simulate_is_bit_identical(cfg_path, tmp_path):
    main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "b")])
    for name in ("truth.csv", "observations.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_refuses_overwrite_without_force(cfg_path, capsys):
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    assert main(["simulate", "--config", str(cfg_path)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["simulate", "--config", str(cfg_path), "--force"]) == 0


def test_unknown_key_names_line(tmp_path):
    text = DEMO.read_text().replace("  system: LinearPendulum",
                                    "  system: LinearPendulum\n  colour: red")
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError, match=r"truth\.colour \(line 5\)"):
        load_config(path)


def test_yaml_syntax_error_reports_position(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("schema_version: 1\ntruth: [unclosed\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_schema_version_checked(tmp_path):
    path = tmp_path / "v.yaml"
    path.write_text("schema_version: 2\n")
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(path)


def test_fit_bayes_predict_pipeline(cfg_path, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    assert main(["fit", "--config", str(cfg_path), "--method", "bayes"]) == 0
    rows = _rows(out / "chain.csv")
    assert len(rows) == 601
    diag = json.loads((out / "diagnostics.json").read_text())
    assert 0 < diag["acceptance"] < 1
    assert main(["predict", "--config", str(cfg_path)]) == 0
    ens = _rows(out / "ensemble.csv")
    assert ens[0] == ["draw", "t", "x1", "x2", "valid"]
    assert len(ens) == 1 + 40 * 41
    red = _rows(out / "reduction.csv")
    assert red[0] == ["t", "est_1", "est_2", "lo_1", "lo_2", "hi_1", "hi_2"]
    assert (out / "mode.csv").exists()


def test_predict_single_draw_collapses_band(cfg_path, tmp_path):
    out = tmp_path / "out"
    main(["simulate", "--config", str(cfg_path)])
    main(["fit", "--config", str(cfg_path), "--method", "bayes"])
    assert main(["predict", "--config", str(cfg_path), "--draws", "1"]) == 0
    red = np.array(_rows(out / "reduction.csv")[1:], dtype=float)
    np.testing.assert_array_equal(red[:, 1:3], red[:, 3:5])
    np.testing.assert_array_equal(red[:, 1:3], red[:, 5:7])
    assert not (out / "mode.csv").exists()


def test_predict_alternate_x0(cfg_path, tmp_path):
    out = tmp_path / "out"
    main(["simulate", "--config", str(cfg_path)])
    main(["fit", "--config", str(cfg_path), "--method", "bayes"])
    assert main(["predict", "--config", str(cfg_path), "--x0", "0.3,0.2"]) == 0
    ens = np.array(_rows(out / "ensemble.csv")[1:], dtype=float)
    first = ens[ens[:, 1] == 0.0]
    np.testing.assert_array_equal(first[:, 2:4], np.tile([0.3, 0.2], (40, 1)))


def test_predict_too_many_draws(cfg_path):
    main(["simulate", "--config", str(cfg_path)])
    main(["fit", "--config", str(cfg_path), "--method", "bayes"])
    assert main(["predict", "--config", str(cfg_path), "--draws", "100000"]) == 2


def test_predict_corrupt_chain_names_row(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    main(["simulate", "--config", str(cfg_path)])
    main(["fit", "--config", str(cfg_path), "--method", "bayes"])
    lines = (out / "chain.csv").read_text().splitlines()
    lines[9] = "9,not-a-number"
    (out / "chain.csv").write_text("\n".join(lines) + "\n")
    assert main(["predict", "--config", str(cfg_path)]) == 2
    assert "row 10" in capsys.readouterr().err


def test_fit_dmd_and_tdmd(cfg_path, tmp_path):
    main(["simulate", "--config", str(cfg_path)])
    for method in ("dmd", "tdmd"):
        assert main(["fit", "--config", str(cfg_path), "--method", method]) == 0
        A = np.array(_rows(tmp_path / "out" / f"{method}_A.csv")[1:], dtype=float)
        assert A.shape == (2, 2)
        assert len(_rows(tmp_path / "out" / f"{method}_eigs.csv")) == 3


def test_fit_dmd_single_observation(cfg_path, tmp_path, capsys):
    out = tmp_path / "one"
    out.mkdir()
    (out / "observations.csv").write_text("t,y1,y2,present\n0.1,1.0,2.0,1\n")
    assert main(["fit", "--config", str(cfg_path), "--method", "dmd", "--out", str(out)]) == 2
    assert "two observations" in capsys.readouterr().err


def test_fit_sindy_needs_dense_data(cfg_path, tmp_path, capsys):
    out = tmp_path / "gappy"
    out.mkdir()
    (out / "observations.csv").write_text(
        "t,y1,y2,present\n0.1,1.0,2.0,1\n0.2,,,0\n0.3,1.1,2.1,1\n")
    assert main(["fit", "--config", str(cfg_path), "--method", "sindy", "--out", str(out)]) == 2
    assert "dense data required" in capsys.readouterr().err


def test_fit_kf_with_nonlinear_model_fails_early(cfg_path, tmp_path, capsys):
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["model"] = {"family": "KnownODE", "system": "VanDerPol"}
    path = _write_cfg(tmp_path, cfg)
    main(["simulate", "--config", str(path)])
    assert main(["fit", "--config", str(path), "--method", "bayes"]) == 2
    assert "linear" in capsys.readouterr().err
    assert not (tmp_path / "out" / "chain.csv").exists()


def test_suite_flops_matches_model(cfg_path, tmp_path):
    assert main(["suite", "flops", "--config", str(cfg_path)]) == 0
    rows = _rows(tmp_path / "out" / "flops.csv")
    head = rows[0]
    for r in rows[1:]:
        rec = dict(zip(head, r))
        dims = FlopDims(*(int(rec[k]) for k in ("d", "m", "p", "n", "F", "H", "r")))
        assert rec["flops"] == str(flop_model(rec["algorithm"], dims))


def test_suite_landscape_shapes(cfg_path, tmp_path):
    assert main(["suite", "landscape", "--config", str(cfg_path)]) == 0
    files = sorted((tmp_path / "out").glob("landscape_*_n20.csv"))
    assert len(files) == 3
    for f in files:
        assert len(_rows(f)) == 1 + 36


def test_suite_sweep_shape(cfg_path, tmp_path):
    assert main(["suite", "sweep", "--config", str(cfg_path)]) == 0
    rows = _rows(tmp_path / "out" / "sweep.csv")
    recs = [dict(zip(rows[0], r)) for r in rows[1:]]
    bayes = [r for r in recs if r["algorithm"] == "BayesKF" and not r["baseline"]]
    assert len(bayes) == 1 and bayes[0]["n_used"] == "1"
    manifest = json.loads((tmp_path / "out" / "manifest-suite-sweep.json").read_text())
    assert manifest["spec"]["realizations"] == 2


def test_manifest_hashes_match_files(cfg_path, tmp_path):
    import hashlib
    main(["simulate", "--config", str(cfg_path)])
    manifest = json.loads((tmp_path / "out" / "manifest-simulate.json").read_text())
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((tmp_path / "out" / name).read_bytes()).hexdigest() == digest
