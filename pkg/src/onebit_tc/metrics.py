"""Recovery metrics, probability divergences and closed-form error bounds.

The bound evaluators take absolute constants that are only known to exist;
they default to 1 and the resulting values describe how a bound scales, not
a certified number.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .observations import LinkConstants, SamplingDistribution

__all__ = [
    "BoundConstants",
    "rse",
    "sign_accuracy",
    "mae",
    "pi_weighted_mse",
    "hellinger_sq",
    "kl_div",
    "rank_norm_bounds",
    "theorem1_rhs",
    "rademacher_bounds",
    "write_metrics",
]


@dataclass(frozen=True)
class BoundConstants:
    """Absolute constants appearing in the recovery bounds.

    ``c1`` and ``c2`` are the generalized Grothendieck constants
    (``c1 < 0.9``, ``c2 < sqrt(2)``) and ``K_G = c1 * c2**2``. The ``C*``
    constants are unspecified and default to 1.
    """

    c1: float = 0.89
    c2: float = 1.4142
    C_max: float = 1.0
    C_M: float = 1.0
    C0: float = 1.0
    C1: float = 1.0
    C2: float = 1.0

    @property
    def K_G(self) -> float:
        return self.c1 * self.c2 ** 2


def rse(T_hat, T_true) -> float:
    """Relative squared error ``||T_hat - T||_F^2 / ||T||_F^2``."""
    T_hat, T_true = np.asarray(T_hat, float), np.asarray(T_true, float)
    if T_hat.shape != T_true.shape:
        raise ValueError("shape mismatch")
    denom = np.sum(T_true ** 2)
    if denom == 0:
        raise ValueError("ground truth is zero")
    return float(np.sum((T_hat - T_true) ** 2) / denom)


def _signs(v, eta):
    return np.where(np.asarray(v, float) - eta >= 0, 1, -1)


def sign_accuracy(predicted, truth, eta: float = 0.0) -> float:
    """Fraction of test entries where ``sign(pred - eta) == sign(truth - eta)``.

    Values exactly at ``eta`` count as positive on both sides.
    """
    predicted, truth = np.asarray(predicted, float), np.asarray(truth, float)
    if truth.size == 0:
        raise ValueError("empty test set")
    if predicted.shape != truth.shape:
        raise ValueError("shape mismatch")
    return float(np.mean(_signs(predicted, eta) == _signs(truth, eta)))


def mae(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted, float), np.asarray(truth, float)
    if truth.size == 0:
        raise ValueError("empty test set")
    if predicted.shape != truth.shape:
        raise ValueError("shape mismatch")
    return float(np.mean(np.abs(truth - predicted)))


def pi_weighted_mse(T_hat, T_true, dist: Optional[SamplingDistribution] = None) -> float:
    """``sum_omega pi_omega (T_hat - T)^2``; uniform weights when ``dist`` is None."""
    T_hat, T_true = np.asarray(T_hat, float), np.asarray(T_true, float)
    if T_hat.shape != T_true.shape:
        raise ValueError("shape mismatch")
    if dist is None:
        dist = SamplingDistribution(T_true.shape)
    if dist.shape != T_true.shape:
        raise ValueError("sampling distribution has the wrong shape")
    return float(np.sum(dist.probabilities() * (T_hat - T_true) ** 2))


def _unit_interval(*arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, float)
        if np.any(a < 0) or np.any(a > 1) or np.any(~np.isfinite(a)):
            raise ValueError("entries must lie in [0, 1]")
        out.append(a)
    if out[0].shape != out[1].shape:
        raise ValueError("shape mismatch")
    return out


def hellinger_sq(P, Q) -> float:
    """Squared Hellinger distance between Bernoulli tensors, averaged over entries."""
    P, Q = _unit_interval(P, Q)
    h = (np.sqrt(P) - np.sqrt(Q)) ** 2 + (np.sqrt(1 - P) - np.sqrt(1 - Q)) ** 2
    return float(np.mean(h))


def kl_div(P, Q, eps: float = 1e-12) -> float:
    """Bernoulli KL divergence ``K(P || Q)`` averaged over entries.

    ``Q`` is clamped to ``[eps, 1 - eps]`` so the value stays finite.
    """
    P, Q = _unit_interval(P, Q)
    Q = np.clip(Q, eps, 1 - eps)
    k = xlogy(P, P) - xlogy(P, Q) + xlogy(1 - P, 1 - P) - xlogy(1 - P, 1 - Q)
    return float(np.mean(k))


def rank_norm_bounds(r: int, d: int, alpha: float) -> tuple[float, float]:
    """Upper bounds on (max-qnorm, M-norm) of a rank-``r`` order-``d`` tensor
    with infinity norm ``alpha``."""
    if r < 1 or d < 2 or not alpha > 0:
        raise ValueError("need r >= 1, d >= 2, alpha > 0")
    return float(r ** ((d * d - d) / 2) * alpha), float((r ** 1.5) ** (d - 1) * alpha)


def theorem1_rhs(kind: str, consts: BoundConstants, link_consts: LinkConstants,
                 R: float, d: int, N: int, m: int, delta: float) -> float:
    """Right-hand side of the Pi-weighted MSE bound for the constrained ML estimate.

    ``kind="max"`` uses the constant ``C_max * c2**d``, ``kind="M"`` uses ``C_M``.
    """
    if kind == "max":
        C = consts.C_max * consts.c2 ** d
    elif kind == "M":
        C = consts.C_M
    else:
        raise ValueError(f"kind must be 'max' or 'M', got {kind!r}")
    if not (R > 0 and d >= 1 and N >= 1 and m >= 1 and 0 < delta < 1):
        raise ValueError("invalid arguments")
    lc = link_consts
    return float(C * lc.beta * (lc.L * R * np.sqrt(d * N / m)
                                + lc.U * np.sqrt(np.log(4 / delta) / m)))


def rademacher_bounds(d: int, N: int, m: int,
                      consts: BoundConstants = BoundConstants()) -> tuple[float, float]:
    """Rademacher complexity bounds of the unit M-norm and max-qnorm balls."""
    if d < 1 or N < 1 or m < 1:
        raise ValueError("arguments must be positive")
    base = 6.0 * np.sqrt(d * N / m)
    return float(base), float(base * consts.c1 * consts.c2 ** d)


def write_metrics(path: str | Path, record: dict) -> None:
    """Write a flat key-value record as JSON."""
    def plain(v):
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        return v

    with open(path, "w") as fh:
        json.dump({k: plain(v) for k, v in record.items()}, fh, indent=2, sort_keys=True)


def constants_record(consts: BoundConstants) -> dict:
    rec = asdict(consts)
    rec["K_G"] = consts.K_G
    return rec
