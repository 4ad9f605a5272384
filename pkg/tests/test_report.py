import json
import math

import numpy as np
import pytest

from psyeval.factor import advise_extraction
from psyeval.report import dumps, jsonable, scree_csv, scree_svg, warn_small_sample
from psyeval.simulate import FactorModelSpec, generate_factor_data, simple_structure


class TestAdvisories:
    def test_pilot_minimum(self):
        assert any("pilot" in a for a in warn_small_sample(29))
        assert warn_small_sample(30) == []

    def test_observations_per_item(self):
        assert any("observations per item" in a for a in warn_small_sample(59, {"n_items": 12}))
        assert warn_small_sample(60, {"n_items": 12}) == []

    def test_indicators(self):
        out = warn_small_sample(100, {"indicators_per_factor": [4, 2]})
        assert len(out) == 1 and "factor 2" in out[0]


class TestSerialization:
    def test_nan_becomes_null(self):
        text = dumps({"b": float("nan"), "a": np.float64(1.5), "c": np.array([1, 2])})
        assert json.loads(text) == {"a": 1.5, "b": None, "c": [1, 2]}
        assert text.index('"a"') < text.index('"b"')

    def test_jsonable_nested(self):
        out = jsonable({"x": (np.int64(3), frozenset({"f"})), "y": math.inf})
        json.dumps(out, allow_nan=False)


@pytest.fixture(scope="module")
def advice():
    data = generate_factor_data(FactorModelSpec(simple_structure(2, 3, 0.7), n=200, seed=3))
    return advise_extraction(data, replicates=100, seed=1)


def test_scree_csv(advice):
    rows = scree_csv(advice).strip().splitlines()
    assert rows[0] == "index,eigenvalue,random_mean,random_p95"
    assert len(rows) == 7
    values = [float(r.split(",")[1]) for r in rows[1:]]
    assert values == sorted(values, reverse=True)


def test_scree_svg_is_xml(advice):
    import xml.etree.ElementTree as ET

    root = ET.fromstring(scree_svg(advice))
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 3
