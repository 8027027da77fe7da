import json

import numpy as np
import pytest

from knockoffkit import io
from knockoffkit.bayes_net import NodeSpec, validate_and_index
from knockoffkit.harness import random_mixture
from knockoffkit.io import InputError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 4)) * 10.0 ** rng.integers(-300, 300, (50, 4))
        X[0, 0] = 0.1 + 0.2
        p = tmp_path / "x.csv"
        io.write_csv(p, X, ["a", "b", "c", "d"])
        Y, cols, y = io.read_csv(p)
        assert cols == ["a", "b", "c", "d"] and y is None
        np.testing.assert_array_equal(X, Y)

    def test_label_split(self, tmp_path):
        p = write(tmp_path / "x.csv", "a,y,b\n1.5,0,2\n3,1,4\n")
        X, cols, y = io.read_csv(p, label="y")
        assert cols == ["a", "b"]
        np.testing.assert_array_equal(X, [[1.5, 2], [3, 4]])
        assert y.dtype.kind == "i" and list(y) == [0, 1]

    def test_non_numeric_names_line_and_column(self, tmp_path):
        p = write(tmp_path / "x.csv", "a,b\n1,2\n3,oops\n")
        with pytest.raises(InputError, match=r"line 3, column 'b'.*'oops'"):
            io.read_csv(p)

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path / "x.csv", "a,b\n1,2\n3\n")
        with pytest.raises(InputError, match="line 3"):
            io.read_csv(p)

    def test_non_finite(self, tmp_path):
        p = write(tmp_path / "x.csv", "a\nnan\n")
        with pytest.raises(InputError, match="finite"):
            io.read_csv(p)

    @pytest.mark.parametrize("text", ["", "a,b\n", "a,,c\n1,2,3\n"])
    def test_empty_or_bad_header(self, tmp_path, text):
        with pytest.raises(InputError):
            io.read_csv(write(tmp_path / "x.csv", text))

    def test_missing_label_and_file(self, tmp_path):
        p = write(tmp_path / "x.csv", "a\n1\n")
        with pytest.raises(InputError, match="label column"):
            io.read_csv(p, label="y")
        with pytest.raises(InputError, match="cannot read"):
            io.read_csv(tmp_path / "missing.csv")

    def test_format_float(self):
        for x in (0.1, 1e-310, -2.5e300, 3.0):
            assert float(io.format_float(x)) == x
        assert io.format_float(float("-inf")) == "-inf"

    def test_write_table(self, tmp_path):
        p = tmp_path / "t.csv"
        io.write_table(p, [{"a": True, "b": 0.1, "c": None}, {"a": False, "b": 2, "c": "x"}], ["a", "b", "c"])
        assert p.read_text().splitlines() == ["a,b,c", "1,0.1,", "0,2,x"]


class TestJson:
    def test_invalid_json_location(self, tmp_path):
        p = write(tmp_path / "c.json", '{\n  "q": 0.1,\n}\n')
        with pytest.raises(InputError, match="line 3, column 1"):
            io.read_json(p)


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        m = random_mixture(3, 4, np.random.default_rng(1))
        p = tmp_path / "m.json"
        io.save_model(p, m, ["x", "y", "z"])
        m2, cols = io.load_model(p)
        assert cols == ["x", "y", "z"]
        for a, b in ((m.weights, m2.weights), (m.means, m2.means), (m.covariances, m2.covariances)):
            np.testing.assert_array_equal(a, b)

    def test_wrong_format_and_version(self, tmp_path):
        m = random_mixture(2, 1, np.random.default_rng(2))
        doc = io.model_to_dict(m)
        with pytest.raises(InputError, match="version"):
            io.model_from_dict({**doc, "version": 2})
        with pytest.raises(InputError, match="not a"):
            io.model_from_dict({**doc, "format": "other"})
        with pytest.raises(InputError, match="invalid model"):
            io.model_from_dict({**doc, "means": [[1.0]]})


class TestNetFiles:
    def net(self):
        h = NodeSpec("H", "discrete", (), False, cpt=[0.3, 0.7])
        x = NodeSpec("X", "gaussian", ("H",), True, "gaussian-conditional",
                     means=[[0.0, 1.0], [2.0, -1.0]], covariances=[np.eye(2), 2 * np.eye(2)])
        return validate_and_index([h, x])

    def test_round_trip(self, tmp_path):
        p = tmp_path / "n.json"
        io.save_net(p, self.net())
        net = io.load_net(p)
        assert [nd.id for nd in net.nodes] == ["H", "X"]
        np.testing.assert_array_equal(net.nodes[1].covariances[1], 2 * np.eye(2))
        assert net.nodes[1].conjugate == "gaussian-conditional"
        assert io.net_to_dict(net) == json.loads(p.read_text())

    def test_unknown_field_rejected(self):
        doc = io.net_to_dict(self.net())
        doc["nodes"][0]["colour"] = "red"
        with pytest.raises(InputError, match="colour"):
            io.net_from_dict(doc)

    def test_invalid_node(self):
        doc = io.net_to_dict(self.net())
        doc["nodes"][0]["cpt"] = [0.5, 0.6]
        with pytest.raises(InputError, match="probability"):
            io.net_from_dict(doc)
