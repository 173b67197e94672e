import json

import numpy as np
import pytest

from mixfit import GaussianParams, MixtureParams
from mixfit.errors import DataFormatError, ModelFileError
from mixfit.io import dumps_model, fmt, load_model, loads_model, read_csv, save_model, write_csv, write_trace

from conftest import random_mixture


class TestCsv:
    def test_round_trip_exact(self, tmp_path, rng):
        x = rng.standard_normal((3, 50)) * 10.0 ** rng.integers(-300, 300, size=(3, 50))
        path = tmp_path / "x.csv"
        write_csv(path, x)
        np.testing.assert_array_equal(read_csv(path).x, x)

    def test_header_and_weights(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("a,b,w\n1,2,0.5\n3,4,1.5\n")
        batch = read_csv(path, weights_column=2)
        np.testing.assert_array_equal(batch.x, [[1, 3], [2, 4]])
        np.testing.assert_array_equal(batch.w, [0.5, 1.5])

    @pytest.mark.parametrize("text", ["1,2\n3\n", "1,x\n", "", "a,b\n", "1,nan\n"])
    def test_bad_input(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(DataFormatError):
            read_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_csv(tmp_path / "none.csv")

    def test_labels_column(self, tmp_path):
        path = tmp_path / "s.csv"
        write_csv(path, np.array([[0.5, 1.5]]), [0, 1])
        assert path.read_text() == "0.5,0\n1.5,1\n"

    def test_trace(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace(path, [-3.0, -2.0], [-1.0])
        assert path.read_text() == "iter,ll,val_ll\n1,-3,-1\n2,-2,\n"


class TestModelFile:
    def test_round_trip_bytes(self, tmp_path, rng):
        theta = random_mixture(rng, 3, 2)
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        save_model(a, theta, {"seed": 3})
        loaded, meta = load_model(a)
        save_model(b, loaded, meta)
        assert a.read_bytes() == b.read_bytes()
        for c0, c1 in zip(theta.components, loaded.components):
            np.testing.assert_array_equal(c0.sigma, c1.sigma)

    def test_valid_json(self, rng):
        obj = json.loads(dumps_model(random_mixture(rng, 2, 2)))
        assert obj["format_version"] == 1 and obj["k"] == 2 and "tool_version" in obj["metadata"]

    def _obj(self):
        theta = MixtureParams((GaussianParams([0.0], [[1.0]]),), [1.0])
        return json.loads(dumps_model(theta))

    @pytest.mark.parametrize("mutate", [
        lambda o: o.update(format_version=2),
        lambda o: o.update(weights=[0.5]),
        lambda o: o["components"][0].update(sigma=[[-1.0]]),
        lambda o: o["components"][0].update(mu=[0.0, 1.0]),
        lambda o: o.update(k=2),
        lambda o: o.pop("components"),
    ])
    def test_invalid_models(self, mutate):
        obj = self._obj()
        mutate(obj)
        with pytest.raises(ModelFileError):
            loads_model(json.dumps(obj))

    def test_not_json(self):
        with pytest.raises(ModelFileError):
            loads_model("{")


def test_fmt_rejects_nonfinite():
    with pytest.raises(ValueError):
        fmt(float("inf"))
    assert float(fmt(0.1)) == 0.1
