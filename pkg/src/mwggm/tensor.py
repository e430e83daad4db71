"""Dense multi-way arrays and the tensor algebra used by every model.

Arrays are plain :class:`numpy.ndarray` objects. The *linear layout* of an
array is first-index-fastest (Fortran order), so that ``vec(X)`` lines up
with the Kronecker ordering ``K_L kron ... kron K_1`` of a separable
precision matrix. Mode indices are 1-based throughout the public API.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


def _check_mode(X: np.ndarray, l: int) -> int:
    if not 1 <= l <= X.ndim:
        raise ValueError(f"mode {l} out of range for a {X.ndim}-dimensional array")
    return l - 1


def vec(X: np.ndarray) -> np.ndarray:
    """Stack the entries of ``X`` in linear (first-index-fastest) order."""
    return np.asarray(X, dtype=float).ravel(order="F")


def unvec(v: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(tuple(dims), order="F")


def mode_matricize(X: np.ndarray, l: int) -> np.ndarray:
    """Mode-``l`` unfolding, an ``m_l x (m / m_l)`` matrix.

    Column index runs over the remaining indices with the lowest remaining
    dimension varying fastest.
    """
    X = np.asarray(X, dtype=float)
    k = _check_mode(X, l)
    return np.moveaxis(X, k, 0).reshape(X.shape[k], -1, order="F")


def mode_fold(M: np.ndarray, l: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`mode_matricize`."""
    dims = tuple(dims)
    k = l - 1
    if not 0 <= k < len(dims):
        raise ValueError(f"mode {l} out of range for {len(dims)} dimensions")
    rest = dims[:k] + dims[k + 1:]
    return np.moveaxis(np.asarray(M, dtype=float).reshape((dims[k],) + rest, order="F"), 0, k)


def mode_product(X: np.ndarray, A: np.ndarray, l: int) -> np.ndarray:
    """``X x_l A``: multiply every mode-``l`` fibre of ``X`` by ``A``."""
    X = np.asarray(X, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k = _check_mode(X, l)
    if A.shape[1] != X.shape[k]:
        raise ValueError(
            f"matrix with {A.shape[1]} columns cannot act on mode {l} of size {X.shape[k]}"
        )
    return np.moveaxis(np.tensordot(A, X, axes=(1, k)), 0, k)


def tucker_product(X: np.ndarray, Ms: Sequence[np.ndarray | None]) -> np.ndarray:
    """Apply one matrix per mode. ``None`` in a slot stands for the identity."""
    X = np.asarray(X, dtype=float)
    if len(Ms) != X.ndim:
        raise ValueError(f"need {X.ndim} matrices, got {len(Ms)}")
    out = X
    for l, A in enumerate(Ms, start=1):
        if A is not None:
            out = mode_product(out, A, l)
    return out


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """Trace inner product; ``inner(Y, Y)`` is the array norm used throughout."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.vdot(A, B))


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def kron_chain(Ks: Sequence[np.ndarray]) -> np.ndarray:
    """``K_L kron ... kron K_1`` for ``Ks = [K_1, ..., K_L]``."""
    out = np.ones((1, 1))
    for K in Ks:
        out = np.kron(np.atleast_2d(K), out)
    return out


# -- array exchange format ---------------------------------------------------

def format_array(X: np.ndarray) -> str:
    X = np.asarray(X, dtype=float)
    dims = X.shape if X.ndim else (1,)
    lines = ["dims: " + " ".join(str(d) for d in dims)]
    lines.extend(f"{x:.17g}" for x in vec(X))
    return "\n".join(lines) + "\n"


def parse_array(text: str) -> np.ndarray:
    body = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not body or not body[0].startswith("dims:"):
        raise ValueError("array file must start with a 'dims:' header")
    try:
        dims = tuple(int(tok) for tok in body[0][len("dims:"):].split())
    except ValueError as exc:
        raise ValueError(f"bad dims header: {body[0]!r}") from exc
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"bad dims header: {body[0]!r}")
    values = np.array([float(tok) for ln in body[1:] for tok in ln.split()])
    if values.size != int(np.prod(dims)):
        raise ValueError(f"expected {int(np.prod(dims))} values for dims {dims}, found {values.size}")
    return unvec(values, dims)


def read_array(path: str | Path) -> np.ndarray:
    return parse_array(Path(path).read_text())


def write_array(path: str | Path, X: np.ndarray) -> None:
    Path(path).write_text(format_array(X))
