import csv
import json

import numpy as np
import pytest

from ssvi.cli import main


def write_config(tmp_path, name="config.json", **overrides):
    cfg = {
        "target": {"family": "gaussian", "mean": [0.0, 0.0],
                   "cov": [[1.0, 0.5], [0.5, 1.0]]},
        "dictionary": {"R": 2.0, "delta": 1.0},
        "optimizer": {"step_size": 0.5, "max_iters": 25,
                      "n_samples": 4000},
        "seed": 0,
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_trace(path):
    with open(path) as fh:
        header = fh.readline()
        assert header.startswith("# tool_version=")
        assert "ordering_version=class-major-v1" in header
        return list(csv.DictReader(fh))


class TestFit:
    def test_writes_outputs_exit_zero(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["fit", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "params.json").exists()
        assert (out / "trace.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["dict_size"] == 4 + 2 * 16 + 3 * 4  # N=4, d=2
        assert summary["iters"] == 25
        assert summary["runtime_ms"] > 0
        assert summary["tool_version"]

    def test_trace_nonincreasing(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["fit", "--config", str(cfg), "--out", str(out)])
        rows = read_trace(out / "trace.csv")
        fe = [float(r["free_energy"]) for r in rows]
        assert np.all(np.diff(fe) <= 1e-10)

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["fit", "--config", str(cfg), "--out", str(a), "--threads", "1"])
        main(["fit", "--config", str(cfg), "--out", str(b), "--threads", "2"])
        assert (a / "params.json").read_bytes() \
            == (b / "params.json").read_bytes()
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()

    def test_bad_grid_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dictionary={"R": 2.0, "delta": 0.3})
        assert main(["fit", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2
        assert "dictionary" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, extra_block={"x": 1})
        assert main(["fit", "--config", str(cfg)]) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["fit", "--config", str(tmp_path / "nope.json")]) == 2

    def test_params_json_reloadable(self, tmp_path):
        import ssvi
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["fit", "--config", str(cfg), "--out", str(out)])
        blob = json.loads((out / "params.json").read_text())
        params, spec = ssvi.params_from_json(blob)
        assert spec.d == 2


class TestOracleGaussian:
    def test_emits_oracle_json(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["oracle-gaussian", "--config", str(cfg),
                     "--out", str(out)]) == 0
        o = json.loads((out / "oracle.json").read_text())
        assert np.isclose(o["gap"], 0.5 * np.log(0.75), atol=1e-10)
        assert np.isclose(o["kl_ssvi"], 0.0, atol=1e-12)
        assert np.shape(o["ssvi_cov"]) == (2, 2)


class TestCompare:
    def test_identity_residual_small(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["compare", "--config", str(cfg),
                     "--out", str(out)]) == 0
        o = json.loads((out / "compare.json").read_text())
        assert o["gap_identity_residual"] < 1e-10
        assert o["kl_ssvi_fit_free_energy_gap"] is not None

    def test_without_optimizer_block(self, tmp_path):
        cfg = write_config(tmp_path)
        blob = json.loads(cfg.read_text())
        del blob["optimizer"]
        cfg.write_text(json.dumps(blob))
        out = tmp_path / "out"
        assert main(["compare", "--config", str(cfg),
                     "--out", str(out)]) == 0
        o = json.loads((out / "compare.json").read_text())
        assert o["kl_ssvi_fit_free_energy_gap"] is None

    def test_diagonal_gap_zero(self, tmp_path):
        cfg = write_config(
            tmp_path, target={"family": "gaussian", "mean": [0.0, 0.0],
                              "cov": [[1.0, 0.0], [0.0, 2.0]]})
        out = tmp_path / "out"
        main(["compare", "--config", str(cfg), "--out", str(out)])
        o = json.loads((out / "compare.json").read_text())
        assert abs(o["gap_exact"]) < 1e-14

    def test_non_gaussian_exits_2(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, target={"family": "glm_location",
                              "design": [[1.0, 0.0], [0.0, 1.0]],
                              "response": [1.0, -1.0]})
        assert main(["compare", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2


class TestDiagnose:
    def test_writes_reports(self, tmp_path):
        cfg = write_config(tmp_path,
                           diagnostics={"grid_sizes": [5, 3], "mc_n": 300})
        out = tmp_path / "out"
        assert main(["diagnose", "--config", str(cfg),
                     "--out", str(out)]) == 0
        d = json.loads((out / "diagnose.json").read_text())
        assert np.isfinite(d["worst_normalized_residual"])
        assert np.shape(d["pushforward_cov"]) == (2, 2)
        rows = read_trace(out / "residuals.csv")
        assert {"equation", "residual", "std_error"} <= set(rows[0])

    def test_small_mc_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, diagnostics={"mc_n": 10})
        assert main(["diagnose", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2


class TestBench:
    def test_sweep_csv(self, tmp_path):
        cfg = write_config(tmp_path)
        blob = json.loads(cfg.read_text())
        blob.pop("dictionary")
        blob.pop("optimizer")
        blob["bench"] = {"d": [2, 3], "R": 2.0, "delta": [1.0, 0.5],
                         "mc_n": 5000}
        cfg.write_text(json.dumps(blob))
        out = tmp_path / "out"
        assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_trace(out / "bench.csv")
        assert len(rows) == 4
        for r in rows:
            d = int(r["d"])
            N = int(round(2 * float(r["R"]) / float(r["delta"])))
            assert int(r["p"]) == N + 2 * (d - 1) * N * N + 3 * (d - 1) * N
            assert float(r["gram_build_ms"]) > 0
            assert float(r["l2_error_vs_oracle"]) >= 0
