import csv
import json

import numpy as np
import pytest

from knockoffkit import io
from knockoffkit.bayes_net import NodeSpec, validate_and_index
from knockoffkit.cli import main
from knockoffkit.gmm import GaussianMixture, sample
from knockoffkit.harness import SyntheticSpec, generate_synthetic


def three_clusters(n, seed):
    m = GaussianMixture(np.array([0.3, 0.3, 0.4]), np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]]),
                        np.array([np.eye(2), [[1.0, 0.5], [0.5, 1.0]], 0.5 * np.eye(2)]))
    return sample(m, n, np.random.default_rng(seed))


def write_data(path, X, y=None):
    cols = [f"x{j}" for j in range(X.shape[1])]
    if y is not None:
        X, cols = np.column_stack([X, y]), cols + ["y"]
    io.write_csv(path, X, cols)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestFitModel:
    def test_fixed_k(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", three_clusters(300, 0))
        out = tmp_path / "m.json"
        assert main(["fit-model", "--data", str(data), "--k", "2", "--out", str(out), "--seed", "1"]) == 0
        model, cols = io.load_model(out)
        assert model.num_components == 2 and cols == ["x0", "x1"]

    def test_aic_picks_three(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", three_clusters(1500, 1))
        out = tmp_path / "m.json"
        assert main(["fit-model", "--data", str(data), "--k-range", "1..5", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "chosen k = 3" in text
        assert sum(1 for line in text.splitlines() if line[:1].isdigit()) == 5

    def test_non_numeric_cell(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text("a,b\n1,2\n3,x\n")
        assert main(["fit-model", "--data", str(data), "--k", "1", "--out", str(tmp_path / "m.json")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["fit-model", "--data", str(tmp_path / "nope.csv"), "--k", "1",
                     "--out", str(tmp_path / "m.json")]) == 2


class TestKnockoffs:
    def test_identity_net_copies_input(self, tmp_path, capsys):
        h = NodeSpec("H", "discrete", (), False, "identity", cpt=[0.5, 0.5])
        x = NodeSpec("X", "discrete", ("H",), True, "identity", cpt=[[0.7, 0.3], [0.2, 0.8]])
        net_path = tmp_path / "n.json"
        io.save_net(net_path, validate_and_index([h, x]))
        X = np.random.default_rng(0).integers(0, 2, (50, 1)).astype(float)
        data = write_data(tmp_path / "d.csv", X)
        out = tmp_path / "k.csv"
        assert main(["knockoffs", "--data", str(data), "--net", str(net_path), "--out", str(out)]) == 0
        Xk, cols, _ = io.read_csv(out)
        assert cols == ["x0_knockoff"]
        np.testing.assert_array_equal(Xk, X)

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", three_clusters(200, 2))
        model = tmp_path / "m.json"
        main(["fit-model", "--data", str(data), "--k", "3", "--out", str(model)])
        outs = []
        for name in ("a.csv", "b.csv"):
            outs.append(tmp_path / name)
            main(["knockoffs", "--data", str(data), "--model", str(model), "--out", str(outs[-1]), "--seed", "9"])
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_pipeline_moments(self, tmp_path, capsys):
        X = three_clusters(4000, 3)
        data = write_data(tmp_path / "d.csv", X)
        model, out = tmp_path / "m.json", tmp_path / "k.csv"
        assert main(["fit-model", "--data", str(data), "--k", "3", "--out", str(model)]) == 0
        assert main(["knockoffs", "--data", str(data), "--model", str(model), "--out", str(out)]) == 0
        Xk, _, _ = io.read_csv(out)
        # per-coordinate spread is about 3, so these bounds are several standard errors wide
        np.testing.assert_allclose(Xk.mean(0), X.mean(0), atol=0.3)
        np.testing.assert_allclose(np.cov(Xk.T), np.cov(X.T), atol=0.6)

    def test_requires_a_model(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", three_clusters(20, 0))
        assert main(["knockoffs", "--data", str(data), "--out", str(tmp_path / "k.csv")]) == 2

    def test_dimension_mismatch(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", three_clusters(100, 0))
        model = tmp_path / "m.json"
        io.save_model(model, GaussianMixture(np.ones(1), np.zeros((1, 3)), np.eye(3)[None]))
        assert main(["knockoffs", "--data", str(data), "--model", str(model), "--out", str(tmp_path / "k.csv")]) == 2


def gaussian_model(path, d):
    io.save_model(path, GaussianMixture(np.ones(1), np.zeros((1, d)), np.eye(d)[None]),
                  [f"x{j}" for j in range(d)])
    return path


class TestSelect:
    def test_null_labels_select_little(self, tmp_path, capsys):
        model = gaussian_model(tmp_path / "m.json", 10)
        sizes = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            data = write_data(tmp_path / "d.csv", rng.standard_normal((500, 10)), rng.integers(0, 2, 500))
            report = tmp_path / "r.csv"
            assert main(["select", "--data", str(data), "--model", str(model), "--method", "logistic",
                         "--q", "0.1", "--report", str(report), "--seed", str(seed)]) == 0
            sizes.append(sum(r["selected"] == "1" for r in read_rows(report)))
        assert np.mean(sizes) <= 0.5

    def test_polynomial_signal_found(self, tmp_path, capsys):
        spec = SyntheticSpec(n=2000, d=20, l=3, nonnull_count=5)
        hits = 0
        for seed in range(20):
            X, Y, _, m = generate_synthetic(spec, seed, return_model=True)
            data = write_data(tmp_path / "d.csv", X, Y)
            model = tmp_path / "m.json"
            io.save_model(model, m, [f"x{j}" for j in range(20)])
            assert main(["select", "--data", str(data), "--model", str(model), "--q", "0.3",
                         "--seed", str(seed)]) == 0
            hits += "selected 0 of" not in capsys.readouterr().out
        assert hits >= 16

    def test_outputs_and_determinism(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((300, 4))
        data = write_data(tmp_path / "d.csv", X, (X[:, 0] > 0).astype(int))
        model = gaussian_model(tmp_path / "m.json", 4)
        files = []
        for tag in ("a", "b"):
            stats, report = tmp_path / f"s{tag}.csv", tmp_path / f"r{tag}.csv"
            assert main(["select", "--data", str(data), "--model", str(model), "--method", "swap",
                         "--predictor", "logistic", "--q", "0.5", "--stats-out", str(stats),
                         "--report", str(report), "--seed", "3"]) == 0
            files.append((stats.read_bytes(), report.read_bytes()))
        assert files[0] == files[1]
        rows = read_rows(tmp_path / "sa.csv")
        assert [r["feature"] for r in rows] == ["x0", "x1", "x2", "x3"]
        for r in rows:
            assert float(r["W"]) == float(r["Z"]) - float(r["Z_knockoff"])
        assert set(read_rows(tmp_path / "ra.csv")[0]) == {"feature", "W", "selected", "threshold", "q", "offset"}

    def test_precomputed_knockoffs(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((200, 3))
        data = write_data(tmp_path / "d.csv", X, (X[:, 1] > 0).astype(int))
        ko = write_data(tmp_path / "k.csv", rng.standard_normal((200, 3)))
        assert main(["select", "--data", str(data), "--knockoffs", str(ko), "--method", "lcd", "--q", "0.3"]) == 0
        bad = write_data(tmp_path / "k2.csv", rng.standard_normal((200, 2)))
        assert main(["select", "--data", str(data), "--knockoffs", str(bad), "--method", "lcd"]) == 2

    @pytest.mark.parametrize("q", ["1.5", "0", "-0.2"])
    def test_bad_q(self, tmp_path, capsys, q):
        data = write_data(tmp_path / "d.csv", np.zeros((5, 2)), np.zeros(5))
        model = gaussian_model(tmp_path / "m.json", 2)
        assert main(["select", "--data", str(data), "--model", str(model), "--q", q]) == 2

    def test_bad_q_from_config(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", np.zeros((5, 2)), np.zeros(5))
        model = gaussian_model(tmp_path / "m.json", 2)
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"q": 1.5}))
        assert main(["select", "--config", str(cfg), "--data", str(data), "--model", str(model)]) == 2

    def test_unknown_method(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", np.zeros((5, 2)), np.zeros(5))
        model = gaussian_model(tmp_path / "m.json", 2)
        assert main(["select", "--data", str(data), "--model", str(model), "--method", "forest"]) == 2
        assert "swap-integral" in capsys.readouterr().err

    def test_non_binary_labels_for_logistic(self, tmp_path, capsys):
        data = write_data(tmp_path / "d.csv", np.random.default_rng(0).standard_normal((20, 2)), np.arange(20) % 3)
        model = gaussian_model(tmp_path / "m.json", 2)
        assert main(["select", "--data", str(data), "--model", str(model), "--method", "logistic"]) == 2


class TestExperiment:
    def config(self, tmp_path):
        cfg = {"dataset": "synthetic", "data": {"n": 300, "d": 5, "l": 2, "nonnull_count": 2},
               "models": ["oracle"], "methods": ["logistic", "lcd"], "q": [0.2], "repetitions": 2}
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["experiment", "--experiment", str(self.config(tmp_path)), "--out-dir", str(out)]) == 0
        assert len(read_rows(out / "repetitions.csv")) == 4
        assert len(read_rows(out / "summary.csv")) == 2
        doc = json.loads((out / "summary.json").read_text())
        assert set(doc) == {"config", "summary", "failures"} and doc["config"]["repetitions"] == 2

    def test_byte_identical_reruns(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        for tag in ("a", "b"):
            assert main(["experiment", "--experiment", str(cfg), "--out-dir", str(tmp_path / tag), "--seed", "4"]) == 0
        for name in ("repetitions.csv", "summary.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_preset(self, tmp_path, capsys):
        assert main(["experiment", "--preset", "nope", "--out-dir", str(tmp_path)]) == 2

    def test_bad_experiment_key(self, tmp_path, capsys):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"repetitionz": 2}))
        assert main(["experiment", "--experiment", str(path), "--out-dir", str(tmp_path)]) == 2


class TestPrintConfig:
    @pytest.mark.parametrize("what", ["experiment", "stat", "break-fdr", "select"])
    def test_prints_json(self, capsys, what):
        assert main(["print-config", what]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert isinstance(doc, dict) and doc

    def test_select_defaults(self, capsys):
        main(["print-config", "select"])
        doc = json.loads(capsys.readouterr().out)
        assert doc["method"] == "swap-integral" and doc["q"] == 0.1

    def test_unknown(self, capsys):
        assert main(["print-config", "nope"]) == 2
