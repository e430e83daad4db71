"""Undirected graphs over 1-based vertices, graph families and graph priors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np


Edge = tuple[int, int]


def _norm_edge(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class UndirectedGraph:
    """Vertex count plus a set of edges ``(i, j)`` with ``1 <= i < j <= n``."""

    n_vertices: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n_vertices < 1:
            raise ValueError("a graph needs at least one vertex")
        clean = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            e = _norm_edge(i, j)
            if not (1 <= e[0] and e[1] <= self.n_vertices):
                raise ValueError(f"edge {e} outside 1..{self.n_vertices}")
            clean.add(e)
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def empty(cls, n: int) -> "UndirectedGraph":
        return cls(n, frozenset())

    @classmethod
    def complete(cls, n: int) -> "UndirectedGraph":
        return cls(n, frozenset((i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)))

    @classmethod
    def path(cls, n: int) -> "UndirectedGraph":
        return cls(n, frozenset((i, i + 1) for i in range(1, n)))

    @classmethod
    def from_adjacency(cls, A: np.ndarray) -> "UndirectedGraph":
        A = np.asarray(A)
        n = A.shape[0]
        return cls(n, frozenset((i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if A[i, j]))

    def __contains__(self, edge: Edge) -> bool:
        return _norm_edge(*edge) in self.edges

    def __len__(self) -> int:
        return len(self.edges)

    @cached_property
    def sorted_edges(self) -> tuple[Edge, ...]:
        return tuple(sorted(self.edges))

    @cached_property
    def adjacency(self) -> np.ndarray:
        """0-based symmetric boolean adjacency matrix (read-only)."""
        A = np.zeros((self.n_vertices, self.n_vertices), dtype=np.uint8)
        for i, j in self.edges:
            A[i - 1, j - 1] = A[j - 1, i - 1] = 1
        A.setflags(write=False)
        return A

    @cached_property
    def upper_degrees(self) -> np.ndarray:
        """``d_i``: number of neighbours of vertex ``i`` with a larger index (0-based array)."""
        d = np.zeros(self.n_vertices, dtype=np.intp)
        for i, _ in self.edges:
            d[i - 1] += 1
        return d

    def with_edge(self, i: int, j: int) -> "UndirectedGraph":
        return UndirectedGraph(self.n_vertices, self.edges | {_norm_edge(i, j)})

    def without_edge(self, i: int, j: int) -> "UndirectedGraph":
        return UndirectedGraph(self.n_vertices, self.edges - {_norm_edge(i, j)})

    def key(self) -> tuple:
        return (self.n_vertices, self.sorted_edges)

    def _check_vertex(self, v: int) -> None:
        if not 1 <= v <= self.n_vertices:
            raise ValueError(f"vertex {v} outside 1..{self.n_vertices}")


def boundary(G: UndirectedGraph, v: int) -> set[int]:
    G._check_vertex(v)
    return {b if a == v else a for a, b in G.edges if v in (a, b)}


def free_elements(G: UndirectedGraph) -> list[Edge]:
    """Diagonal pairs plus edges, row-major. ``len`` gives ``|nu(G)|``."""
    n = G.n_vertices
    return [(i, j) for i in range(1, n + 1) for j in range(i, n + 1) if i == j or (i, j) in G.edges]


def upper_degree(G: UndirectedGraph, i: int) -> int:
    G._check_vertex(i)
    return int(G.upper_degrees[i - 1])


def neighborhoods(G: UndirectedGraph) -> tuple[list[Edge], list[Edge]]:
    """Edges whose addition (resp. deletion) yields the one-edge neighbours of ``G``.

    Returned as edge lists rather than graph objects; ``G.with_edge(*e)`` and
    ``G.without_edge(*e)`` materialise a neighbour when needed.
    """
    n = G.n_vertices
    add = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if (i, j) not in G.edges]
    return add, list(G.sorted_edges)


def ar_graph(m_T: int, q: int) -> UndirectedGraph:
    """Band graph linking every pair of time points at most ``q`` apart."""
    if not 1 <= q < m_T:
        raise ValueError(f"AR order {q} needs 1 <= q < m_T={m_T}")
    return UndirectedGraph(m_T, frozenset((i - k, i) for k in range(1, q + 1) for i in range(k + 1, m_T + 1)))


def validate_adjacency(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("adjacency matrix must be square")
    if not np.array_equal(W, W.T):
        raise ValueError("adjacency matrix is not symmetric")
    if np.any(np.diag(W) != 0):
        raise ValueError("adjacency matrix has a nonzero diagonal")
    if not np.all((W == 0) | (W == 1)):
        raise ValueError("adjacency entries must be 0 or 1")
    return W


def adjacency_graph(W: np.ndarray) -> UndirectedGraph:
    return UndirectedGraph.from_adjacency(validate_adjacency(W))


def conditional_regression(K: np.ndarray, v: int) -> tuple[np.ndarray, float]:
    """Regression of ``x_v`` on the other coordinates implied by precision ``K``.

    Returns the coefficient vector (length ``m``, entry ``v`` set to zero) and
    the residual variance.
    """
    K = np.asarray(K, dtype=float)
    if not np.allclose(K, K.T):
        raise ValueError("precision matrix must be symmetric")
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix is not positive definite") from exc
    if not 1 <= v <= K.shape[0]:
        raise ValueError(f"vertex {v} outside 1..{K.shape[0]}")
    k = v - 1
    coef = -K[k] / K[k, k]
    coef[k] = 0.0
    return coef, 1.0 / K[k, k]


@dataclass(frozen=True)
class GraphPrior:
    """Uniform prior, or an edge-penalising prior ``p(G) ∝ penalty**|E|``."""

    kind: str = "uniform"
    penalty: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "edge-penalizing"):
            raise ValueError(f"unknown graph prior {self.kind!r}")
        if not 0.0 < self.penalty <= 1.0:
            raise ValueError("penalty must lie in (0, 1]")


def log_graph_prior(G: UndirectedGraph, prior: GraphPrior) -> float:
    if prior.kind == "uniform":
        return 0.0
    return len(G.edges) * math.log(prior.penalty)


# -- file formats --------------------------------------------------------------

def format_edge_list(G: UndirectedGraph) -> str:
    lines = [f"vertices: {G.n_vertices}"]
    lines.extend(f"{i} {j}" for i, j in G.sorted_edges)
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> UndirectedGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or not lines[0].startswith("vertices:"):
        raise ValueError("edge list must start with a 'vertices: n' header")
    n = int(lines[0].split(":", 1)[1])
    edges: set[Edge] = set()
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {ln!r}")
        edges.add(_norm_edge(int(parts[0]), int(parts[1])))
    return UndirectedGraph(n, frozenset(edges))


def parse_adjacency_matrix(text: str) -> np.ndarray:
    rows = [[float(tok) for tok in ln.split()] for ln in text.splitlines() if ln.strip()]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError("adjacency matrix file must hold a square 0/1 matrix")
    return validate_adjacency(np.array(rows))


def read_adjacency(path: str | Path) -> np.ndarray:
    """Load a 0/1 adjacency matrix from either an edge list or a matrix file."""
    text = Path(path).read_text()
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if first.strip().startswith("vertices:"):
        return parse_edge_list(text).adjacency.astype(float)
    return parse_adjacency_matrix(text)


def lattice_adjacency(rows: int, cols: int) -> np.ndarray:
    """Rook adjacency of a ``rows x cols`` grid of areas, row-major numbering."""
    n = rows * cols
    W = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            a = r * cols + c
            if c + 1 < cols:
                W[a, a + 1] = W[a + 1, a] = 1
            if r + 1 < rows:
                W[a, a + cols] = W[a + cols, a] = 1
    return W


def iter_all_graphs(n: int) -> Iterable[UndirectedGraph]:
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    for mask in range(1 << len(pairs)):
        yield UndirectedGraph(n, frozenset(p for b, p in enumerate(pairs) if mask >> b & 1))
