import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from mwggm.graph import (GraphPrior, UndirectedGraph, adjacency_graph, ar_graph, boundary,
                         conditional_regression, format_edge_list, free_elements, iter_all_graphs,
                         lattice_adjacency, log_graph_prior, neighborhoods, parse_adjacency_matrix,
                         parse_edge_list, read_adjacency, upper_degree)


@hst.composite
def graphs(draw, max_n=6):
    n = draw(hst.integers(1, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    chosen = draw(hst.lists(hst.sampled_from(pairs), unique=True)) if pairs else []
    return UndirectedGraph(n, frozenset(chosen))


def test_construction_checks():
    with pytest.raises(ValueError):
        UndirectedGraph(3, frozenset({(2, 2)}))
    with pytest.raises(ValueError):
        UndirectedGraph(3, frozenset({(1, 4)}))
    with pytest.raises(ValueError):
        UndirectedGraph(0)
    g = UndirectedGraph(3, frozenset({(3, 1), (1, 3)}))
    assert g.edges == {(1, 3)}


def test_boundary_examples():
    assert boundary(UndirectedGraph.empty(4), 2) == set()
    assert boundary(UndirectedGraph.complete(3), 1) == {2, 3}
    assert boundary(UndirectedGraph.path(3), 2) == {1, 3}
    with pytest.raises(ValueError):
        boundary(UndirectedGraph.path(3), 4)


def test_free_elements_examples():
    assert free_elements(UndirectedGraph.empty(3)) == [(1, 1), (2, 2), (3, 3)]
    assert free_elements(UndirectedGraph.complete(3)) == [(1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]
    assert free_elements(UndirectedGraph.path(3)) == [(1, 1), (1, 2), (2, 2), (2, 3), (3, 3)]


def test_upper_degree_examples():
    assert upper_degree(UndirectedGraph.complete(4), 1) == 3
    assert upper_degree(UndirectedGraph.complete(4), 4) == 0
    assert upper_degree(UndirectedGraph.path(3), 2) == 1
    with pytest.raises(ValueError):
        upper_degree(UndirectedGraph.path(3), 0)


def test_neighborhood_examples():
    assert [len(s) for s in neighborhoods(UndirectedGraph.empty(3))] == [3, 0]
    assert [len(s) for s in neighborhoods(UndirectedGraph.complete(3))] == [0, 3]
    add, delete = neighborhoods(UndirectedGraph.path(3))
    assert add == [(1, 3)]
    assert len(delete) == 2


@settings(max_examples=60, deadline=None)
@given(G=graphs())
def test_graph_invariants(G):
    n = G.n_vertices
    assert len(free_elements(G)) == n + len(G.edges)
    add, delete = neighborhoods(G)
    assert len(add) + len(delete) == n * (n - 1) // 2
    # every neighbour has G in its own neighbourhood
    for e in add:
        assert e in neighborhoods(G.with_edge(*e))[1]
    for e in delete:
        assert e in neighborhoods(G.without_edge(*e))[0]
    for v in range(1, n + 1):
        assert upper_degree(G, v) == sum(1 for u in boundary(G, v) if u > v)
    assert upper_degree(G, n) == 0


def test_ar_graph_examples():
    assert ar_graph(5, 1).edges == {(1, 2), (2, 3), (3, 4), (4, 5)}
    assert ar_graph(5, 2).edges == ar_graph(5, 1).edges | {(1, 3), (2, 4), (3, 5)}
    assert ar_graph(3, 2) == UndirectedGraph.complete(3)
    with pytest.raises(ValueError):
        ar_graph(3, 3)
    with pytest.raises(ValueError):
        ar_graph(6, 0)


@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_ar_graphs_nest(m):
    orders = [q for q in range(1, 5) if q < m]
    for q, r in zip(orders, orders[1:]):
        assert ar_graph(m, q).edges < ar_graph(m, r).edges
    for q in orders:
        assert all(j - i <= q for i, j in ar_graph(m, q).edges)


def test_adjacency_graph_examples():
    assert adjacency_graph(np.zeros((3, 3))) == UndirectedGraph.empty(3)
    assert adjacency_graph(np.array([[0, 1], [1, 0]])).edges == {(1, 2)}
    W = lattice_adjacency(2, 2)
    G = adjacency_graph(W)
    assert G.edges == {(1, 2), (1, 3), (2, 4), (3, 4)}
    assert all(len(boundary(G, v)) == 2 for v in range(1, 5))


def test_adjacency_validation_errors():
    with pytest.raises(ValueError, match="symmetric"):
        adjacency_graph(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError, match="diagonal"):
        adjacency_graph(np.eye(2))
    with pytest.raises(ValueError):
        adjacency_graph(np.array([[0, 2], [2, 0]]))
    with pytest.raises(ValueError):
        parse_adjacency_matrix("0 1\n1\n")


def test_lattice_degrees():
    W = lattice_adjacency(3, 4)
    deg = W.sum(axis=1).reshape(3, 4)
    assert deg[0, 0] == 2 and deg[1, 1] == 4 and deg[0, 1] == 3
    assert np.array_equal(W, W.T)


def test_conditional_regression_examples():
    coef, var = conditional_regression(np.eye(3), 2)
    assert np.all(coef == 0) and var == 1.0
    coef, var = conditional_regression(np.array([[2.0, -1.0], [-1.0, 2.0]]), 1)
    assert coef[1] == pytest.approx(0.5) and var == pytest.approx(0.5)
    K = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.5], [0.0, 0.5, 2.0]])
    coef, _ = conditional_regression(K, 1)
    assert coef[2] == 0.0
    with pytest.raises(ValueError):
        conditional_regression(np.array([[1.0, 2.0], [2.0, 1.0]]), 1)


def test_conditional_regression_matches_gaussian_conditioning():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((4, 4))
    K = A @ A.T + 4 * np.eye(4)
    Sigma = np.linalg.inv(K)
    coef, var = conditional_regression(K, 3)
    others = [0, 1, 3]
    beta = np.linalg.solve(Sigma[np.ix_(others, others)], Sigma[others, 2])
    assert np.allclose(coef[others], beta)
    assert var == pytest.approx(Sigma[2, 2] - Sigma[2, others] @ beta)


def test_graph_prior():
    G3 = UndirectedGraph.complete(3)
    assert log_graph_prior(G3, GraphPrior()) == 0.0
    pen = GraphPrior("edge-penalizing", 0.5)
    assert log_graph_prior(UndirectedGraph.empty(3), pen) == 0.0
    assert log_graph_prior(G3, pen) == pytest.approx(3 * math.log(0.5))
    with pytest.raises(ValueError):
        GraphPrior("edge-penalizing", 0.0)
    with pytest.raises(ValueError):
        GraphPrior("beta", 0.5)


def test_edge_list_round_trip(tmp_path):
    G = UndirectedGraph(5, frozenset({(1, 4), (2, 3), (4, 5)}))
    text = format_edge_list(G)
    assert text.splitlines()[0] == "vertices: 5"
    assert parse_edge_list(text) == G
    p = tmp_path / "g.txt"
    p.write_text(text)
    assert np.array_equal(read_adjacency(p), G.adjacency)
    q = tmp_path / "w.txt"
    q.write_text("0 1 0\n1 0 1\n0 1 0\n")
    assert adjacency_graph(read_adjacency(q)) == UndirectedGraph.path(3)
    with pytest.raises(ValueError):
        parse_edge_list("1 2\n")


def test_iter_all_graphs_counts():
    gs = list(iter_all_graphs(3))
    assert len(gs) == 8
    assert len({g.key() for g in gs}) == 8
