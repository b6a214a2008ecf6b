"""Negative log-likelihood of 1-bit observations and its gradients.

The objective is the total (summed, not averaged) loss

    sum_{(omega, y)} -log P(y | X_omega),   X = cp_expand(factors),

evaluated only at the sampled entries so the full tensor is never formed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import sparse

from .observations import Link, ObservationSet
from .tensor import check_factors, cp_eval

__all__ = [
    "sample_losses",
    "nll",
    "nll_grad_entry",
    "nll_grad_factor",
    "row_selector",
]


def _check_obs(factors, obs: ObservationSet):
    shape = tuple(V.shape[0] for V in factors)
    if shape != obs.shape:
        raise ValueError(f"factor shape {shape} does not match observations {obs.shape}")


def sample_losses(factors: Sequence[np.ndarray], obs: ObservationSet,
                  link: Link) -> np.ndarray:
    """Per-sample losses, in sample order."""
    factors = check_factors(factors)
    _check_obs(factors, obs)
    return link.loss(cp_eval(factors, obs.indices), obs.y)


def nll(factors: Sequence[np.ndarray], obs: ObservationSet, link: Link) -> float:
    return float(np.sum(sample_losses(factors, obs, link)))


def nll_grad_entry(x, y, link: Link):
    """Derivative of the per-sample loss with respect to the tensor entry.

    Equals ``-f'(x)/f(x)`` for ``y = +1`` and ``f'(x)/(1 - f(x))`` for ``y = -1``.
    """
    return link.loss_grad(x, y)


def row_selector(rows: np.ndarray, n_rows: int) -> sparse.csr_matrix:
    """Sparse ``(n_rows, m)`` 0/1 matrix summing sample rows into factor rows.

    Products with it reduce in a fixed (sample) order, so results do not
    depend on thread count.
    """
    m = len(rows)
    return sparse.csr_matrix((np.ones(m), (rows, np.arange(m))), shape=(n_rows, m))


def partial_products(factors: Sequence[np.ndarray], indices: np.ndarray,
                     mode: int) -> np.ndarray:
    """``prod_{l != mode} V_l[i_l, :]`` for every sample, shape ``(m, k)``."""
    out = None
    for l, V in enumerate(factors):
        if l == mode:
            continue
        rows = V[indices[:, l]]
        out = rows.copy() if out is None else out * rows
    return out


def nll_grad_factor(factors: Sequence[np.ndarray], obs: ObservationSet,
                    link: Link, mode: int) -> np.ndarray:
    """Gradient of :func:`nll` with respect to ``factors[mode]``."""
    factors = check_factors(factors)
    _check_obs(factors, obs)
    if not 0 <= mode < len(factors):
        raise ValueError(f"mode {mode} out of range")
    P = partial_products(factors, obs.indices, mode)
    V = factors[mode]
    rows = obs.indices[:, mode]
    x = np.einsum("ij,ij->i", P, V[rows])
    g = link.loss_grad(x, obs.y)
    return np.asarray(row_selector(rows, V.shape[0]) @ (g[:, None] * P))
