"""Dense tensors, CP factor sets and elementary norms.

Tensors are plain :class:`numpy.ndarray` objects. A CP factor set is a
sequence of ``d`` matrices ``V_j`` of shape ``(N_j, k)`` that all share the
column count ``k``; the tensor they represent is

    T(i_1, ..., i_d) = sum_c prod_j V_j(i_j, c).

Indices are zero-based in the Python API. Whenever a tensor is flattened
(serialization, matricization) the first index varies fastest, i.e. Fortran
order.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "check_factors",
    "factor_shape",
    "cp_expand",
    "cp_eval",
    "cp_eval_entry",
    "matricize",
    "unmatricize",
    "matricize_indices",
    "frobenius_norm",
    "infinity_norm",
    "row_norms",
    "factor_max_qnorm",
    "save_tensor",
    "load_tensor",
]


def check_factors(factors: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Validate a CP factor set and return it as a list of float arrays."""
    if len(factors) < 2:
        raise ValueError("a CP factor set needs at least two factors")
    out = [np.asarray(V, dtype=float) for V in factors]
    k = None
    for j, V in enumerate(out):
        if V.ndim != 2:
            raise ValueError(f"factor {j} must be a matrix, got ndim={V.ndim}")
        if k is None:
            k = V.shape[1]
        elif V.shape[1] != k:
            raise ValueError(
                f"factor {j} has {V.shape[1]} columns, expected {k}")
        if not np.all(np.isfinite(V)):
            raise ValueError(f"factor {j} has non-finite entries")
    if k == 0:
        raise ValueError("factors must have at least one column")
    return out


def factor_shape(factors: Sequence[np.ndarray]) -> tuple[int, ...]:
    return tuple(V.shape[0] for V in factors)


def cp_expand(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Materialize the full tensor represented by ``factors``."""
    factors = check_factors(factors)
    # Accumulate the Khatri-Rao product one mode at a time.
    acc = factors[0]
    for V in factors[1:]:
        acc = (acc[..., None, :] * V.reshape((1,) * (acc.ndim - 1) + V.shape))
    return acc.sum(axis=-1)


def _check_indices(indices: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.ndim == 1:
        idx = idx[None, :]
    if idx.shape[1] != len(shape):
        raise ValueError(
            f"indices have {idx.shape[1]} coordinates, tensor order is {len(shape)}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("indices must be integers")
    if np.any(idx < 0) or np.any(idx >= np.asarray(shape)):
        bad = np.flatnonzero(np.any((idx < 0) | (idx >= np.asarray(shape)), axis=1))[0]
        raise IndexError(f"index {tuple(idx[bad])} out of range for shape {tuple(shape)}")
    return idx


def cp_eval(factors: Sequence[np.ndarray], indices: np.ndarray) -> np.ndarray:
    """Evaluate the CP tensor at an ``(m, d)`` array of indices."""
    factors = check_factors(factors)
    idx = _check_indices(indices, factor_shape(factors))
    prod = factors[0][idx[:, 0]].copy()
    for j in range(1, len(factors)):
        prod *= factors[j][idx[:, j]]
    return prod.sum(axis=1)


def cp_eval_entry(factors: Sequence[np.ndarray], index: Sequence[int]) -> float:
    return float(cp_eval(factors, np.asarray(index, dtype=np.int64)[None, :])[0])


def _split_modes(ndim: int, row_modes: Sequence[int]) -> tuple[list[int], list[int]]:
    rows = [int(m) for m in row_modes]
    if not rows:
        raise ValueError("row_modes must be nonempty")
    if len(set(rows)) != len(rows) or any(m < 0 or m >= ndim for m in rows):
        raise ValueError(f"invalid row_modes {row_modes} for order {ndim}")
    if len(rows) == ndim:
        raise ValueError("row_modes must be a proper subset of the modes")
    cols = [m for m in range(ndim) if m not in rows]
    return rows, cols


def matricize(T: np.ndarray, row_modes: Sequence[int]) -> np.ndarray:
    """Unfold ``T`` into a matrix.

    Rows enumerate the modes in ``row_modes`` in the listed order with the
    first mode varying fastest. Columns enumerate the remaining modes in
    lexicographic order, so the last remaining mode varies fastest.
    """
    T = np.asarray(T)
    rows, cols = _split_modes(T.ndim, row_modes)
    nr = int(np.prod([T.shape[m] for m in rows]))
    nc = int(np.prod([T.shape[m] for m in cols]))
    return np.transpose(T, rows + cols[::-1]).reshape((nr, nc), order="F")


def unmatricize(M: np.ndarray, shape: Sequence[int],
                row_modes: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize`."""
    shape = tuple(int(n) for n in shape)
    rows, cols = _split_modes(len(shape), row_modes)
    perm = rows + cols[::-1]
    permuted = np.asarray(M).reshape([shape[m] for m in perm], order="F")
    return np.transpose(permuted, np.argsort(perm))


def matricize_indices(indices: np.ndarray, shape: Sequence[int],
                      row_modes: Sequence[int]) -> np.ndarray:
    """Map tensor indices to ``(row, col)`` indices of :func:`matricize`."""
    idx = _check_indices(indices, shape)
    rows, cols = _split_modes(len(shape), row_modes)
    r = np.ravel_multi_index(tuple(idx[:, rows].T), [shape[m] for m in rows], order="F")
    c = np.ravel_multi_index(tuple(idx[:, cols].T), [shape[m] for m in cols], order="C")
    return np.stack([r, c], axis=1)


def frobenius_norm(T: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(T))))


def infinity_norm(T: np.ndarray) -> float:
    return float(np.max(np.abs(T)))


def row_norms(V: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(V), axis=1))


def factor_max_qnorm(factors: Sequence[np.ndarray]) -> float:
    """Product of the factors' maximum row norms.

    This is the max-qnorm objective evaluated at the given factorization,
    hence an upper bound on the max-qnorm of the expanded tensor.
    """
    factors = check_factors(factors)
    return float(np.prod([row_norms(V).max() for V in factors]))


def save_tensor(path: str | Path, T: np.ndarray) -> None:
    """Write ``T`` as text: a ``dims:`` header then one entry per line."""
    T = np.asarray(T, dtype=float)
    with open(path, "w") as fh:
        fh.write("dims: " + ",".join(str(n) for n in T.shape) + "\n")
        for x in T.ravel(order="F"):
            fh.write(repr(float(x)) + "\n")


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("dims:"):
            raise ValueError(f"{path}: missing 'dims:' header")
        shape = tuple(int(s) for s in header[5:].split(","))
        values = np.array([float(line) for line in fh if line.strip()])
    if values.size != int(np.prod(shape)):
        raise ValueError(
            f"{path}: expected {int(np.prod(shape))} entries, found {values.size}")
    return values.reshape(shape, order="F")
