import json

import pytest

from model_core import ParseError, ValidationError
from robust_sparse_estimation import load_config, main, resolve_threads

SOLVER = "[solver]\nmax_outer_iters = 15\nmax_inner_iters = 30\nwarm_inner_iters = 5\nhuber_max_iters = 500\n"


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _generate(tmp_path, n=100, extra=""):
    config = _write(tmp_path / "gen.ini", f"[generate]\nn = {n}\nd = 5\ns = 2\nseed = 7\n{extra}")
    return main(["generate", "-c", config, "-o", str(tmp_path / "data")])


class TestConfig:
    def test_defaults_without_file(self):
        config = load_config(None)
        assert config["tuning"] == {}
        assert set(config) == {"generate", "tuning", "solver", "bench"}

    def test_typed_values(self, tmp_path):
        path = _write(tmp_path / "c.ini", "[bench]\nn_values = 100, 200\ncovariate_laws = gaussian, student_t:9\n"
                                          "[solver]\ngap_tolerance = none\n[tuning]\nC_s = 400\n")
        config = load_config(path)
        assert config["bench"]["n_values"] == (100, 200)
        assert config["bench"]["covariate_laws"] == (("gaussian", None), ("student_t", 9.0))
        assert config["solver"]["gap_tolerance"] is None
        assert config["tuning"]["C_s"] == 400.0

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ValidationError, match="tuning.bogus"):
            load_config(_write(tmp_path / "c.ini", "[tuning]\nbogus = 1\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ValidationError, match="plots"):
            load_config(_write(tmp_path / "c.ini", "[plots]\nx = 1\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ValidationError, match="generate.n"):
            load_config(_write(tmp_path / "c.ini", "[generate]\nn = many\n"))

    def test_missing_header(self, tmp_path):
        with pytest.raises(ParseError) as excinfo:
            load_config(_write(tmp_path / "c.ini", "n = 1\n"))
        assert excinfo.value.line == 1

    def test_threads(self, monkeypatch):
        monkeypatch.delenv("ROBREG_THREADS", raising=False)
        assert resolve_threads(None) == 1
        monkeypatch.setenv("ROBREG_THREADS", "3")
        assert resolve_threads(None) == 3
        assert resolve_threads(2) == 2
        monkeypatch.setenv("ROBREG_THREADS", "many")
        with pytest.raises(ValidationError):
            resolve_threads(None)

    def test_threads_only_on_bench(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["verify", "-o", str(tmp_path), "-t", "2"])
        assert excinfo.value.code == 2
        assert "unrecognized arguments: -t 2" in capsys.readouterr().err
        with pytest.raises(SystemExit):
            main(["verify", "--help"])
        assert "take no --threads" in " ".join(capsys.readouterr().out.split())
        with pytest.raises(SystemExit):
            main(["bench", "--help"])
        assert "only command that runs in parallel" in " ".join(capsys.readouterr().out.split())


class TestGenerate:
    def test_writes_instance(self, tmp_path):
        assert _generate(tmp_path) == 0
        lines = (tmp_path / "data" / "instance.csv").read_text().splitlines()
        assert len(lines) == 101
        assert all(line.endswith(",0") for line in lines[1:])
        meta = json.loads((tmp_path / "data" / "instance.csv.meta.json").read_text())
        assert meta["truth"]["outlier_set"] == []

    def test_refuses_overwrite_then_forced_rerun_is_identical(self, tmp_path, capsys):
        assert _generate(tmp_path) == 0
        first = (tmp_path / "data" / "instance.csv").read_bytes()
        assert _generate(tmp_path) == 1
        assert "already exists" in capsys.readouterr().err
        config = str(tmp_path / "gen.ini")
        assert main(["generate", "-c", config, "-o", str(tmp_path / "data"), "--force"]) == 0
        assert (tmp_path / "data" / "instance.csv").read_bytes() == first

    def test_too_many_outliers(self, tmp_path, capsys):
        assert _generate(tmp_path, n=10, extra="contamination = oblivious\no = 20\n") == 1
        assert "o=20" in capsys.readouterr().err

    def test_missing_size(self, tmp_path, capsys):
        config = _write(tmp_path / "gen.ini", "[generate]\nd = 5\ns = 2\n")
        assert main(["generate", "-c", config, "-o", str(tmp_path)]) == 1
        assert "generate.n" in capsys.readouterr().err

    def test_seed_range(self, tmp_path):
        assert main(["generate", "-o", str(tmp_path), "--seed", "-1"]) == 1


class TestEstimate:
    def test_clean_instance(self, tmp_path):
        assert _generate(tmp_path) == 0
        config = _write(tmp_path / "est.ini", "[tuning]\ncalibration = practical\n" + SOLVER)
        instance = str(tmp_path / "data" / "instance.csv")
        assert main(["estimate", instance, "-c", config, "-o", str(tmp_path / "out")]) == 0
        result = json.loads((tmp_path / "out" / "instance.result.json").read_text())
        assert result["failed"] is False
        assert result["l2_error"] >= 0.0
        assert result["config"]["calibration"] == "practical"
        assert result["config"]["provenance"]["lambda_o"].startswith("practical")
        assert result["sizes"] == {"s": 2, "o": 0, "source": "ground truth"}
        assert result["profile"]["source"] == "estimated"
        assert result["solver_controls"]["max_outer_iters"] == 15

    def test_oracle_profile_and_lasso(self, tmp_path):
        assert _generate(tmp_path) == 0
        config = _write(tmp_path / "est.ini", "[tuning]\nprofile = oracle\ncalibration = practical\n" + SOLVER)
        instance = str(tmp_path / "data" / "instance.csv")
        assert main(["estimate", instance, "-c", config, "-o", str(tmp_path), "-e", "lasso"]) == 0
        result = json.loads((tmp_path / "instance.result.json").read_text())
        assert result["estimator"] == "lasso"
        assert result["profile"]["estimated"] is False
        assert result["weights"] is None

    def test_all_zero_design(self, tmp_path, capsys):
        rows = "".join("1.0,0.0,0.0,0.0,0\n" for _ in range(10))
        instance = _write(tmp_path / "zero.csv", "y,x_1,x_2,x_3,is_outlier\n" + rows)
        assert main(["estimate", instance, "-o", str(tmp_path)]) == 1
        assert "lambda_Sigma" in capsys.readouterr().err

    def test_malformed_instance(self, tmp_path, capsys):
        instance = _write(tmp_path / "bad.csv", "y,x_1,x_2,x_3,is_outlier\n1,2,3,4,0\n1,2,x,4,0\n")
        assert main(["estimate", instance, "-o", str(tmp_path)]) == 1
        assert "bad.csv:3:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        assert _generate(tmp_path) == 0
        config = _write(tmp_path / "est.ini", "[tuning]\nlambda_x = 1\n")
        assert main(["estimate", str(tmp_path / "data" / "instance.csv"), "-c", config, "-o", str(tmp_path)]) == 1


class TestBench:
    CONFIG = "[bench]\nreplicates = 1\nn_values = 60\no_values = 0, 5\nd = 4\ns = 1\n" + SOLVER

    def test_writes_outputs(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ROBREG_THREADS", "2")
        config = _write(tmp_path / "bench.ini", self.CONFIG)
        out = tmp_path / "out"
        assert main(["bench", "breakdown", "-c", config, "-o", str(out)]) == 0
        for name in ("bench_breakdown.csv", "bench_breakdown_long.csv", "bench_breakdown.json", "bench_breakdown.md"):
            assert (out / name).exists()
        summary = json.loads((out / "bench_breakdown.json").read_text())
        assert summary["metadata"]["threads"] == 2
        assert summary["checks"] == {"row count = 2": True}
        assert len((out / "bench_breakdown.csv").read_text().splitlines()) == 3

    def test_refuses_overwrite(self, tmp_path):
        config = _write(tmp_path / "bench.ini", self.CONFIG)
        assert main(["bench", "breakdown", "-c", config, "-o", str(tmp_path), "-t", "1"]) == 0
        assert main(["bench", "breakdown", "-c", config, "-o", str(tmp_path), "-t", "1"]) == 1

    def test_unknown_suite(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["bench", "speed", "-o", str(tmp_path)])


@pytest.mark.slow
class TestVerify:
    def test_passes(self, tmp_path):
        assert main(["verify", "-o", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["passed"]
        assert (tmp_path / "verify.md").exists()

    def test_fault_injection_fails(self, tmp_path):
        assert main(["verify", "-o", str(tmp_path), "--fault-rounding-threshold", "2.0"]) == 2
        report = json.loads((tmp_path / "verify.json").read_text())
        failed = [check["name"] for check in report["checks"] if not check["passed"]]
        assert "rounding zeroes at most 2*eps*n samples" in failed
