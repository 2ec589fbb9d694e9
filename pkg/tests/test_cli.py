import json
import math
import subprocess
import sys

import pytest

from opinionpool.cli import SEED_ENV, main

FIG2 = {"experts": [{"mean": [0.0, 0.0], "variance": [0.5, 0.5]}, {"mean": [4.0, 4.0], "variance": [0.2, 0.2]}]}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "experts.json"
    path.write_text(json.dumps(FIG2))
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestPool:
    @pytest.mark.parametrize("method", ["poe", "moe", "holder05", "hellinger", "mohel", "wb"])
    def test_methods(self, config, tmp_path, method):
        out = tmp_path / f"{method}.json"
        assert run("pool", config, "--method", method, "-o", out, "--samples", 2000) == 0
        obj = json.loads(out.read_text())
        assert obj["method"] == method
        manifest = json.loads((tmp_path / f"{method}.json.manifest.json").read_text())
        assert set(manifest) == {"command", "config_digest", "root_seed", "started_at", "version"}

    def test_poe_values(self, config, tmp_path):
        out = tmp_path / "poe.json"
        run("pool", config, "--method", "poe", "-o", out)
        obj = json.loads(out.read_text())
        # precisions 2 + 5 per dim
        assert obj["variance"] == pytest.approx([1 / 7, 1 / 7])
        assert obj["mean"] == pytest.approx([20 / 7, 20 / 7])

    def test_holder_reports_normalizer(self, config, tmp_path):
        out = tmp_path / "h.json"
        run("pool", config, "--method", "holder05", "-o", out, "--samples", 100_000, "--seed", 1)
        obj = json.loads(out.read_text())
        assert abs(obj["log_norm"] - obj["log_norm_closed_form"]) < 3 * obj["log_norm_se"]
        assert obj["ess"] > 0 and isinstance(obj["low_ess"], bool)

    def test_round_trip(self, config, tmp_path):
        first = tmp_path / "agg.json"
        assert run("pool", config, "--method", "hellinger", "-o", first) == 0
        second = tmp_path / "again.json"
        assert run("pool", first, "--method", "poe", "-o", second) == 0
        a, b = json.loads(first.read_text()), json.loads(second.read_text())
        assert a["mean"] == pytest.approx(b["mean"], rel=1e-14)
        assert a["variance"] == pytest.approx(b["variance"], rel=1e-14)

    def test_csv(self, config, tmp_path):
        out = tmp_path / "moe.csv"
        run("pool", config, "--method", "moe", "-o", out, "--format", "csv")
        lines = out.read_text().splitlines()
        assert lines[0] == "kind,component,weight,dim,mean,variance,log_norm,log_norm_se"
        assert len(lines) == 5

    def test_weights(self, config, tmp_path):
        out = tmp_path / "w.json"
        assert run("pool", config, "--method", "moe", "--weights", "0.25,0.75", "-o", out) == 0
        assert json.loads(out.read_text())["weights"] == [0.25, 0.75]

    def test_bad_weights(self, config, tmp_path):
        assert run("pool", config, "--method", "moe", "--weights", "0.5", "0.6", "-o", tmp_path / "x") == 2

    def test_unknown_method(self, config, tmp_path, capsys):
        assert run("pool", config, "--method", "median", "-o", tmp_path / "x") == 2
        assert "hellinger" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"experts": [\n  {"mean": [0.0], "variance": [1.0]},\n  oops\n]}')
        assert run("pool", bad, "--method", "poe", "-o", tmp_path / "x") == 2
        err = capsys.readouterr().err
        assert "line 3" in err and "column" in err

    def test_dimension_mismatch(self, tmp_path, capsys):
        bad = tmp_path / "mixed.json"
        bad.write_text(json.dumps({"experts": [{"mean": [0.0], "variance": [1.0]}, {"mean": [0.0, 1.0], "variance": [1.0, 1.0]}]}))
        assert run("pool", bad, "--method", "poe", "-o", tmp_path / "x") == 2
        assert "dimension" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run("pool", tmp_path / "nope.json", "--method", "poe", "-o", tmp_path / "x") == 2

    def test_unwritable_output(self, config, tmp_path):
        assert run("pool", config, "--method", "poe", "-o", tmp_path / "missing" / "dir" / "out.json") == 3


class TestExperiment:
    def test_figure2_csv(self, tmp_path):
        out = tmp_path / "f2.csv"
        assert run("experiment", "--preset", "figure2", "-o", out, "--samples", 1000, "--seed", 42, "--jobs", 1) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n_good,n_bad,method,nll,nll_se,bc,bc_se,sharpness,sharpness_se,n_samples,seed"
        assert len(lines) == 33

    def test_byte_identical_across_jobs(self, tmp_path):
        outs = []
        for jobs in (1, 2, 1):
            out = tmp_path / f"f2_{len(outs)}.csv"
            run("experiment", "--preset", "figure2", "-o", out, "--samples", 2000, "--seed", 7, "--jobs", jobs)
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_seed_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "7")
        env_out = tmp_path / "env.csv"
        run("experiment", "--preset", "figure2", "-o", env_out, "--samples", 500, "--jobs", 1)
        monkeypatch.delenv(SEED_ENV)
        flag_out = tmp_path / "flag.csv"
        run("experiment", "--preset", "figure2", "-o", flag_out, "--samples", 500, "--jobs", 1, "--seed", 7)
        assert env_out.read_bytes() == flag_out.read_bytes()
        manifest = json.loads((tmp_path / "env.csv.manifest.json").read_text())
        assert manifest["root_seed"] == 7

    def test_bad_seed_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        assert run("experiment", "--preset", "figure2", "-o", tmp_path / "x", "--samples", 500) == 2

    def test_figure1(self, tmp_path):
        out = tmp_path / "f1.csv"
        assert run("experiment", "--preset", "figure1", "-o", out, "--samples", 5000) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "method,dim,mean,mean_se,variance,variance_se" and len(lines) == 11

    def test_custom_config(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"n_good": [1, 2], "n_bad": [0, 1], "methods": ["poe", "wb"], "n_samples": 500}))
        out = tmp_path / "sweep.json.out"
        assert run("experiment", "--config", cfg, "-o", out, "--format", "json", "--jobs", 1) == 0
        assert len(json.loads(out.read_text())["rows"]) == 8

    def test_custom_config_bad_method(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"methods": ["poe", "median"]}))
        assert run("experiment", "--config", cfg, "-o", tmp_path / "x") == 2
        assert "hellinger" in capsys.readouterr().err

    def test_unknown_preset(self, tmp_path):
        assert run("experiment", "--preset", "figure9", "-o", tmp_path / "x") == 2

    def test_unwritable_output(self, tmp_path):
        assert run("experiment", "--preset", "figure1", "-o", tmp_path / "no" / "f.csv", "--samples", 500) == 3


class TestDivergence:
    def test_worked_example(self, tmp_path, capsys):
        cfg = tmp_path / "pair.json"
        cfg.write_text(json.dumps({"experts": [{"mean": [0.0], "variance": [1.0]}, {"mean": [1.0], "variance": [1.0]}]}))
        assert run("divergence", cfg, "--alpha", 0.5, "--seed", 3) == 0
        obj = json.loads(capsys.readouterr().out)
        assert abs(obj["estimate"] - 4 * (1 - math.exp(-1 / 8))) < 3 * obj["std_err"]
        assert obj["seed"] == 3 and obj["n_samples"] == 100_000

    def test_alpha_domain(self, config):
        assert run("divergence", config, "--alpha", 1.0) == 2

    def test_needs_two_experts(self, tmp_path):
        cfg = tmp_path / "one.json"
        cfg.write_text(json.dumps({"experts": [{"mean": [0.0], "variance": [1.0]}]}))
        assert run("divergence", cfg, "--alpha", 0.5) == 2


def test_console_module(config, tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run(
        [sys.executable, "-m", "opinionpool", "pool", str(config), "--method", "hellinger", "-o", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["kind"] == "gaussian"


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "opinionpool", "pool"], capture_output=True, text=True)
    assert proc.returncode == 2
