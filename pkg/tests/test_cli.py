"""CLI smoke tests: subcommands, file outputs, exit codes."""

import json

import numpy as np
import pytest

from riskirl.cli import main
from riskirl import serialize


@pytest.fixture
def lq_demos(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "lq", "--count", "3", "--seed", "4", "--out", str(out)]) == 0
    return out / "demos.json"


class TestLqPath:
    def test_simulate_writes_demos(self, lq_demos):
        demos = serialize.load_demos(lq_demos)
        assert len(demos) == 3
        assert demos[0].state.shape == (10,)

    def test_infer_single_known(self, tmp_path, lq_demos):
        out = tmp_path / "inf"
        assert main(["infer-single", "--demos", str(lq_demos), "--seed", "4", "--out", str(out)]) == 0
        env = serialize.load_envelope(out / "envelope.json")
        assert env.dim == 3
        assert len(env.vertices) >= 1

    def test_forward(self, capsys):
        state = " ".join(["0.1"] * 10)
        assert main(["forward", "--scenario", "lq", "--seed", "4", "--state", state]) == 0
        out = capsys.readouterr().out
        assert "u_star:" in out and "tau_star:" in out

    def test_inconsistent_demo_exit_code_2(self, tmp_path):
        # a garbage interior control admits no stationarity certificate
        demos = [{"state": [0.0] * 10, "control": [3.0, -2.0, 1.0, 0.5, -1.0]}]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(demos))
        out = tmp_path / "inf"
        code = main(["infer-single", "--demos", str(path), "--seed", "4", "--out", str(out)])
        assert code == 2

    def test_missing_file_exit_code_1(self, tmp_path):
        code = main(["infer-single", "--demos", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 1


class TestDrivingPath:
    def test_simulate_infer_eval_forward(self, tmp_path):
        sim = tmp_path / "sim"
        assert main(["simulate", "--scenario", "driving", "--profile", "risk-averse", "--count", "6", "--seed", "1", "--beta", "5.0", "--out", str(sim)]) == 0
        data = sim / "segments.json"
        segments = serialize.load_segments(data)
        assert len(segments) == 6
        assert segments[0].observed_action.shape == (15, 2)

        fitdir = tmp_path / "fit"
        assert main(["infer-multi", "--data", str(data), "--iters", "3", "--beta", "5.0", "--seed", "1", "--out", str(fitdir)]) == 0
        model = serialize.load_model(fitdir / "model.json")
        assert model.weights.shape == (6,)
        assert (fitdir / "fit_trace.csv").exists()

        evdir = tmp_path / "ev"
        assert main(["eval", "--model", str(fitdir / "model.json"), "--data", str(data), "--out", str(evdir)]) == 0
        assert (evdir / "errors.csv").exists()
        assert (evdir / "errors.png").exists()

        state = " ".join(str(v) for v in np.round(segments[0].start_state, 3))
        assert main(["forward", "--scenario", "driving", "--model", str(fitdir / "model.json"), "--state", state, "--prev-mode", "1"]) == 0

    def test_kmeans_library_option(self, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", "--scenario", "driving", "--count", "16", "--seed", "2", "--beta", "5.0", "--out", str(sim)])
        fitdir = tmp_path / "fit"
        assert main(["infer-multi", "--data", str(sim / "segments.json"), "--library", "kmeans", "--iters", "2", "--beta", "5.0", "--out", str(fitdir)]) == 0
        lib = serialize.load_library(fitdir / "library.json")
        assert lib.first_stage.shape[0] == 15
        assert lib.later_stage.shape[0] == 5


class TestBenchCli:
    def test_bench_lq_writes_report(self, tmp_path, capsys):
        out = tmp_path / "lq"
        assert main(["bench-lq", "--seed", "2", "--counts", "1,2", "--out", str(out)]) == 0
        assert (out / "bench_lq_report.json").exists()
        assert "hausdorff ratio" in capsys.readouterr().out
