import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fixtures import random_network
from losslim.analysis import GainMatrix, network_gains
from losslim.errors import InputError
from losslim.formats import (
    gains_from_csv,
    gains_from_dict,
    gains_to_csv,
    gains_to_dict,
    network_from_dict,
    network_to_dict,
    read_network,
    read_statespace,
    statespace_from_dict,
    statespace_to_dict,
    write_network,
    write_statespace,
)
from losslim.netgen import EnsembleConfig, generate_network
from losslim.numlin import StateSpace
from losslim.svg import PALETTE, color_index, heatmap

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 4), m=st.integers(0, 3), p=st.integers(0, 3), data=st.data())
def test_statespace_round_trip(n, m, p, data):
    mat = lambda r, c: data.draw(arrays(float, (r, c), elements=finite))  # noqa: E731
    s = StateSpace(mat(n, n), mat(n, m), mat(p, n), mat(p, m))
    back = statespace_from_dict(json.loads(json.dumps(statespace_to_dict(s))))
    for name in "ABCD":
        assert np.array_equal(getattr(back, name), getattr(s, name))
        assert getattr(back, name).shape == getattr(s, name).shape


def test_statespace_file_round_trip(tmp_path):
    s = StateSpace([[0.0, -1.0], [1.0, 0.0]], [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]])
    write_statespace(tmp_path / "s.json", s)
    back = read_statespace(tmp_path / "s.json")
    assert np.array_equal(back.A, s.A)
    text = (tmp_path / "s.json").read_text()
    assert text.endswith("\n") and json.loads(text)["n"] == 2


@pytest.mark.parametrize("data", [
    [],
    {"n": 1, "m": 1, "p": 1, "A": [[0]], "B": [[1]], "C": [[1]]},
    {"n": 1, "m": 1, "p": 1, "A": [[0, 1]], "B": [[1]], "C": [[1]], "D": [[0]]},
    {"n": 1, "m": 1, "p": 1, "A": [["x"]], "B": [[1]], "C": [[1]], "D": [[0]]},
    {"n": "one", "m": 1, "p": 1, "A": [[0]], "B": [[1]], "C": [[1]], "D": [[0]]},
])
def test_statespace_parse_errors(data):
    with pytest.raises(InputError):
        statespace_from_dict(data)


def test_statespace_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_statespace(tmp_path / "missing.json")


def test_network_round_trip(tmp_path):
    net = generate_network(EnsembleConfig(n_clusters=3, total_buses=12, seed=2))
    write_network(tmp_path / "n.json", net)
    back = read_network(tmp_path / "n.json")
    assert back == net
    first = (tmp_path / "n.json").read_bytes()
    write_network(tmp_path / "m.json", back)
    assert (tmp_path / "m.json").read_bytes() == first


def test_network_schema_optional_fields():
    data = {"buses": [{"id": 0, "kind": "hydro", "power": 1, "inertia": 3, "position": [0, 0],
                       "cluster": 0},
                      {"id": 1, "kind": "load", "power": -1, "position": [1, 0], "cluster": 0}],
            "lines": [{"i": 0, "j": 1, "susceptance": 2, "tier": "transmission"}]}
    net = network_from_dict(data)
    assert net.lines[0].load_angle == 0.0
    assert net.bus(1).inertia is None
    out = network_to_dict(net)
    assert "inertia" not in out["buses"][1]
    assert out["lines"][0]["load_angle"] == 0.0


@pytest.mark.parametrize("data", [
    {"buses": []},
    {"buses": [{"kind": "hydro"}], "lines": []},
    {"buses": [{"id": 0, "kind": "nuclear"}], "lines": []},
    {"buses": [{"id": 0, "kind": "hydro"}], "lines": [{"i": 0, "j": 5, "susceptance": 1}]},
])
def test_network_parse_errors(data):
    with pytest.raises(InputError):
        network_from_dict(data)


def test_gain_csv_round_trip():
    net = random_network(np.random.default_rng(40), 4, 2)
    g = network_gains(net, "H2")
    text = gains_to_csv(g)
    lines = text.splitlines()
    assert lines[0] == "0,1,2,3"
    digits = [v.split("e")[0].replace("-", "").replace(".", "").lstrip("0")
              for v in lines[1].split(",")]
    assert all(len(d) <= 17 for d in digits) and max(len(d) for d in digits) >= 15
    back = gains_from_csv(text, "H2", g.clusters)
    assert np.array_equal(back.values, g.values)
    assert back.bus_ids == g.bus_ids and back.clusters == g.clusters
    assert gains_to_csv(back) == text


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(0, 1e300, allow_nan=False)))
def test_gain_csv_round_trip_exact(values):
    g = GainMatrix(values, "Hinf", [5, 6, 7])
    assert np.array_equal(gains_from_csv(gains_to_csv(g), "Hinf").values, values)


def test_gain_json_round_trip():
    g = GainMatrix(np.array([[1.5, 0.25], [0.25, 1.5]]), "Hinf", [3, 9], [0, 1])
    back = gains_from_dict(json.loads(json.dumps(gains_to_dict(g))))
    assert np.array_equal(back.values, g.values)
    assert (back.metric, back.bus_ids, back.clusters) == ("Hinf", [3, 9], [0, 1])


def test_gain_csv_errors():
    with pytest.raises(InputError):
        gains_from_csv("", "H2")
    with pytest.raises(InputError):
        gains_from_csv("0,1\n1.0,2.0\n", "H2")
    with pytest.raises(InputError):
        gains_from_csv("0\nabc\n", "H2")
    with pytest.raises(ValueError):
        gains_to_csv(GainMatrix(np.eye(2), "H2").log())


def test_color_index_bins():
    idx = color_index([0.0, 0.5, 1.0, 0.124], 0.0, 1.0)
    assert idx.tolist() == [0, 4, len(PALETTE) - 1, 0]
    assert color_index([2.0, 2.0], 2.0, 2.0).tolist() == [0, 0]


def test_heatmap_scales_and_metadata():
    g = GainMatrix(np.array([[np.e, 1.0], [1.0, np.e**2]]), "H2", [0, 1], [0, 1])
    svg = heatmap(g)
    meta = re.search(r"<!-- metric=H2 scale=ln min=(\S+) max=(\S+) n=2 -->", svg)
    assert meta and float(meta.group(1)) == 0.0 and float(meta.group(2)) == pytest.approx(2.0)
    assert svg.count('stroke="#ffffff"') == 2
    h = heatmap(GainMatrix(np.array([[2.0, 1.0], [1.0, 2.0]]), "Hinf"))
    assert "scale=linear min=1 max=2" in h
    assert 'stroke="#ffffff"' not in h
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert set(re.findall(r'fill="(#[0-9a-f]{6})"', svg)) <= set(PALETTE) | {"#ffffff"}
