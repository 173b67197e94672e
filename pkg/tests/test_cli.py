import json
import subprocess
import sys

import numpy as np
import pytest

from mixfit import Gaussian, GaussianParams, MixtureParams
from mixfit.cli import main
from mixfit.io import load_model, save_model, write_csv

from conftest import benchmark_data


@pytest.fixture
def bench_csv(tmp_path):
    path = tmp_path / "data.csv"
    write_csv(path, benchmark_data(7).x)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error:")


class TestFit:
    def test_fit_writes_model(self, capsys, tmp_path, bench_csv):
        out = tmp_path / "m.json"
        trace = tmp_path / "t.csv"
        code, stdout, _ = run(capsys, "fit", bench_csv, "--k", 2, "--seed", 7, "--out", out, "--trace", trace)
        assert code == 0
        summary = json.loads(stdout)
        theta, meta = load_model(out)
        w = sorted(theta.weights)
        assert abs(w[1] - 0.8) <= 0.06 and abs(w[0] - 0.2) <= 0.06
        assert meta["final_ll"] == summary["final_ll"]
        assert meta["solver"] == "em" and meta["seed"] == 7
        rows = trace.read_text().splitlines()
        assert rows[0] == "iter,ll,val_ll" and len(rows) == summary["iterations"] + 1

    def test_same_seed_byte_identical(self, capsys, tmp_path, bench_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "fit", bench_csv, "--k", 2, "--seed", 3, "--out", a)
        run(capsys, "fit", bench_csv, "--k", 2, "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("solver", ["rcg", "rlbfgs"])
    def test_other_solvers(self, capsys, tmp_path, bench_csv, solver):
        code, stdout, _ = run(capsys, "fit", bench_csv, "--k", 2, "--solver", solver, "--out", tmp_path / "m.json")
        assert code == 0 and json.loads(stdout)["k"] == 2

    def test_sgd_and_early_stopping(self, capsys, tmp_path, bench_csv):
        code, stdout, _ = run(capsys, "fit", bench_csv, "--k", 2, "--solver", "sgd", "--batch-size", 100,
                              "--step", 2e-3, "--step-decay", 100, "--max-iters", 10,
                              "--validation-fraction", 0.2, "--out", tmp_path / "m.json")
        assert code == 0 and json.loads(stdout)["iterations"] <= 10

    def test_sgd_without_batch(self, capsys, tmp_path, bench_csv):
        code, _, err = run(capsys, "fit", bench_csv, "--k", 2, "--solver", "sgd", "--out", tmp_path / "m.json")
        assert code == 64
        _error_line(err)

    def test_batch_exceeds_n(self, capsys, tmp_path, bench_csv):
        code, _, err = run(capsys, "fit", bench_csv, "--k", 2, "--solver", "sgd", "--batch-size", 5000,
                           "--out", tmp_path / "m.json")
        assert code == 64

    @pytest.mark.parametrize("argv", [["fit"], ["fit", "x.csv", "--k", "0", "--out", "m"], ["bogus"],
                                      ["fit", "x.csv", "--k", "2", "--out", "m", "--solver", "newton"]])
    def test_invalid_flags(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 64
        _error_line(err)

    def test_ragged_csv(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        code, _, err = run(capsys, "fit", path, "--k", 1, "--out", tmp_path / "m.json")
        assert code == 2
        _error_line(err)

    def test_missing_csv(self, capsys, tmp_path):
        code, _, err = run(capsys, "fit", tmp_path / "none.csv", "--k", 1, "--out", tmp_path / "m.json")
        assert code == 2

    def test_too_few_points_is_fit_failure(self, capsys, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("1.0\n")
        code, _, err = run(capsys, "fit", path, "--k", 1, "--out", tmp_path / "m.json")
        assert code == 3
        _error_line(err)


class TestSample:
    def test_rows_and_reproducibility(self, capsys, tmp_path):
        model = tmp_path / "m.json"
        save_model(model, MixtureParams((GaussianParams([0.0, 1.0], np.eye(2)),), [1.0]))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "sample", model, "--n", 1000, "--seed", 5, "--out", a)[0] == 0
        run(capsys, "sample", model, "--n", 1000, "--seed", 5, "--out", b)
        rows = a.read_text().splitlines()
        assert len(rows) == 1000 and all(len(r.split(",")) == 2 for r in rows)
        assert a.read_bytes() == b.read_bytes()

    def test_degenerate_labels(self, capsys, tmp_path):
        model = tmp_path / "m.json"
        comps = (GaussianParams([0.0], [[1.0]]), GaussianParams([9.0], [[1.0]]))
        save_model(model, MixtureParams(comps, [1.0, 0.0]))
        out = tmp_path / "s.csv"
        run(capsys, "sample", model, "--n", 200, "--labels", "--out", out)
        labels = [r.split(",")[-1] for r in out.read_text().splitlines()]
        assert set(labels) == {"0"}

    def test_invalid_model(self, capsys, tmp_path):
        model = tmp_path / "m.json"
        model.write_text('{"format_version": 1, "d": 1, "k": 1, "weights": [1.0], '
                         '"components": [{"mu": [0.0], "sigma": [[-1.0]]}]}')
        code, _, err = run(capsys, "sample", model, "--n", 5, "--out", tmp_path / "s.csv")
        assert code == 2
        _error_line(err)


class TestEval:
    def test_matches_fit_ll(self, capsys, tmp_path, bench_csv):
        model = tmp_path / "m.json"
        _, stdout, _ = run(capsys, "fit", bench_csv, "--k", 2, "--out", model)
        reported = json.loads(stdout)["final_ll"]
        per = tmp_path / "ll.csv"
        code, stdout, _ = run(capsys, "eval", model, bench_csv, "--per-datum", per)
        assert code == 0
        res = json.loads(stdout)
        assert abs(res["ll"] - reported) <= 1e-12 * abs(reported)
        assert res["n"] == 1000 and len(per.read_text().splitlines()) == 1000

    def test_entropy_identity(self, capsys, tmp_path):
        theta = GaussianParams([1.0, -1.0], [[2.0, 0.3], [0.3, 0.5]])
        model = tmp_path / "m.json"
        save_model(model, MixtureParams((theta,), [1.0]))
        data = tmp_path / "s.csv"
        run(capsys, "sample", model, "--n", 20000, "--seed", 1, "--out", data)
        _, stdout, _ = run(capsys, "eval", model, data)
        assert abs(json.loads(stdout)["mean_ll"] + Gaussian(2).entropy(theta)) <= 0.05

    def test_dimension_mismatch(self, capsys, tmp_path, bench_csv):
        model = tmp_path / "m.json"
        save_model(model, MixtureParams((GaussianParams([0.0, 0.0], np.eye(2)),), [1.0]))
        code, _, err = run(capsys, "eval", model, bench_csv)
        assert code == 2
        _error_line(err)

    def test_empty_data(self, capsys, tmp_path):
        model = tmp_path / "m.json"
        save_model(model, MixtureParams((GaussianParams([0.0], [[1.0]]),), [1.0]))
        empty = tmp_path / "e.csv"
        empty.write_text("")
        assert run(capsys, "eval", model, empty)[0] == 2


def _clusters_csv(path, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(3, size=1500)
    write_csv(path, (np.array([0.0, 10.0, 20.0])[labels] + rng.standard_normal(1500))[None, :])


class TestSelect:
    def test_finds_three(self, capsys, tmp_path):
        data = tmp_path / "c.csv"
        _clusters_csv(data, 0)
        code, stdout, _ = run(capsys, "select", data, "--k-init", 1, "--criterion", "bic", "--out", tmp_path / "m.json")
        assert code == 0
        lines = [json.loads(line) for line in stdout.strip().splitlines()]
        assert lines[-1]["k"] == 3
        assert all({"round", "move", "k", "criterion"} <= set(e) for e in lines[:-1])

    def test_invalid_range(self, capsys, tmp_path, bench_csv):
        code, _, err = run(capsys, "select", bench_csv, "--k-min", 2, "--k-max", 1, "--out", tmp_path / "m.json")
        assert code == 64
        _error_line(err)

    def test_zero_rounds_matches_fit(self, capsys, tmp_path, bench_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "fit", bench_csv, "--k", 2, "--seed", 4, "--out", a)
        run(capsys, "select", bench_csv, "--k-init", 2, "--max-rounds", 0, "--seed", 4, "--out", b)
        assert a.read_bytes() == b.read_bytes()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mixfit", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("mixfit ")


def test_console_script_exit_code(tmp_path):
    out = subprocess.run(["mixfit", "fit"], capture_output=True, text=True)
    assert out.returncode == 64 and out.stderr.startswith("error:")
