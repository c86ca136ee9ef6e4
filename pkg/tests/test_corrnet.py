import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from feederperc.corrnet import (
    CorrelationMatrix,
    CorrelationNetwork,
    correlation_matrix,
    pearson,
    read_network,
    threshold_network,
    write_network,
)
from feederperc.powerflow import PanelError, TimeSeriesPanel


def panel(rows, ids=None):
    rows = np.asarray(rows, dtype=float)
    ids = tuple(ids or range(1, len(rows) + 1))
    times = tuple(f"2023-01-01T{h:02d}:00:00" for h in range(rows.shape[1]))
    return TimeSeriesPanel(ids, times, rows)


@pytest.mark.parametrize(
    "x, y, r",
    [([1, 2, 3], [2, 4, 6], 1.0), ([1, 2, 3], [6, 4, 2], -1.0), ([1, 2, 3, 4], [1, 3, 2, 4], 0.8)],
)
def test_pearson_examples(x, y, r):
    assert abs(pearson(x, y) - r) <= 1e-12


def test_pearson_constant_is_undefined():
    assert pearson([2, 2, 2], [1, 2, 3]) is None
    assert pearson([1, 2, 3], [5, 5, 5]) is None


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        pearson([1], [1])


series = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=30)


@given(series, st.data())
def test_pearson_symmetric_and_bounded(x, data):
    y = data.draw(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=len(x), max_size=len(x)))
    a, b = pearson(x, y), pearson(y, x)
    assert (a is None) == (b is None)
    if a is not None:
        assert a == pytest.approx(b, abs=1e-12)
        assert -1.0 <= a <= 1.0


@given(series, st.floats(0.01, 100), st.floats(-100, 100), st.booleans())
def test_pearson_affine(x, a, b, flip):
    x = np.asarray(x)
    assume(np.ptp(x) > 1e-3 * max(1.0, np.max(np.abs(x))))
    a = -a if flip else a
    r = pearson(x, a * x + b)
    assert r == pytest.approx(math.copysign(1.0, a), abs=1e-9)


@given(series, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(x, a, b):
    x = np.asarray(x)
    y = np.sin(np.arange(len(x)) * 1.3)
    assume(np.ptp(x) > 1e-3 * max(1.0, np.max(np.abs(x))))
    assert pearson(a * x + b, y) == pytest.approx(pearson(x, y), abs=1e-9)


def test_matrix_two_node_example():
    c = correlation_matrix(panel([[1, 2, 3], [1, 3, 2]]), panel([[2, 4, 6], [6, 4, 2]]))
    assert np.allclose(c.values, [[1.0, -1.0], [0.5, -0.5]], atol=1e-12)


def test_matrix_matches_pearson():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(6, 20)), rng.normal(size=(6, 20))
    c = correlation_matrix(panel(a), panel(b))
    for m in range(6):
        for n in range(6):
            assert c.values[m, n] == pytest.approx(pearson(a[m], b[n]), abs=1e-12)


def test_matrix_self_diagonal_and_undefined():
    rows = [[1, 2, 3, 5], [4, 4, 4, 4], [2, 0, 1, 3]]
    c = correlation_matrix(panel(rows), panel(rows))
    assert c.values[0, 0] == pytest.approx(1.0) and c.values[2, 2] == pytest.approx(1.0)
    assert np.all(np.isnan(c.values[1])) and np.all(np.isnan(c.values[:, 1]))


def test_matrix_all_perfect():
    a = panel([[1, 2, 3], [2, 4, 6]])
    b = panel([[3, 5, 7], [0, 1, 2]])
    assert np.allclose(correlation_matrix(a, b).values, 1.0)


def test_matrix_mismatch():
    with pytest.raises(PanelError):
        correlation_matrix(panel([[1, 2, 3]]), panel([[1, 2, 3]], ids=[7]))
    with pytest.raises(PanelError):
        correlation_matrix(panel([[1, 2, 3]]), panel([[1, 2, 3, 4]]))


def test_threshold_examples():
    c = CorrelationMatrix((1, 2), np.array([[1, 0.5], [-0.2, 1]]))
    g = threshold_network(c, 0.0)
    assert g.edge_list() == [(1, 2)]
    neg = CorrelationMatrix((1, 2, 3), np.full((3, 3), -0.5))
    assert threshold_network(neg, 0.0).n_edges == 0
    ex = CorrelationMatrix((1, 2), np.array([[1.0, -1.0], [0.5, -0.5]]))
    assert threshold_network(ex, 0.99).n_edges == 0
    assert threshold_network(ex, 0.0).n_edges == 1


def test_threshold_strict_and_undefined():
    c = CorrelationMatrix((1, 2, 3), np.array([[1, 0.0, np.nan], [0.0, 1, 0.3], [np.nan, 0.1, 1]]))
    g = threshold_network(c, 0.0)
    assert g.edge_list() == [(2, 3)]
    assert not g.adjacency.diagonal().any()


square = st.integers(2, 8).flatmap(
    lambda n: st.lists(st.floats(-1, 1), min_size=n * n, max_size=n * n).map(lambda v: np.reshape(v, (n, n)))
)


@given(square, st.floats(-1, 1), st.floats(0, 1))
def test_threshold_properties(vals, t, eps):
    c = CorrelationMatrix(tuple(range(len(vals))), vals)
    g = threshold_network(c, t)
    assert np.array_equal(g.adjacency, g.adjacency.T)
    assert threshold_network(c, t + eps).n_edges <= g.n_edges
    off = vals[~np.eye(len(vals), dtype=bool)]
    if not np.any((off > t) & (off <= t + eps)):
        assert np.array_equal(threshold_network(c, t + eps).adjacency, g.adjacency)


def test_network_invariants():
    with pytest.raises(ValueError):
        CorrelationNetwork((0, 1), np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        CorrelationNetwork((0, 1), np.eye(2))


def test_network_round_trip(tmp_path):
    g = CorrelationNetwork.from_edges(4, [(0, 1), (1, 3)], node_ids=[10, 20, 30, 40], threshold=0.2, provenance="P_0%-HC_0%")
    side = write_network(g, tmp_path / "g.edges")
    assert (tmp_path / "g.edges").read_text() == "10,20\n20,40\n"
    meta = json.loads(side.read_text())
    assert meta["n_nodes"] == 4 and meta["n_edges"] == 2 and meta["threshold"] == 0.2
    back = read_network(tmp_path / "g.edges")
    assert back.node_ids == g.node_ids and np.array_equal(back.adjacency, g.adjacency)
    assert back.provenance == "P_0%-HC_0%"
