"""Link functions, sampling distributions and 1-bit observations.

An entry ``x`` of the hidden tensor is observed as ``y = +1`` with
probability ``f(x)`` and ``y = -1`` otherwise, where ``f`` is the logistic
function or a scaled Gaussian CDF (probit). Both links satisfy
``f(-x) = 1 - f(x)``, which the likelihood code relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

__all__ = [
    "Link",
    "LinkConstants",
    "logistic",
    "probit",
    "link_eval",
    "link_constants",
    "SamplingDistribution",
    "ObservationSet",
    "sample_indices",
    "quantize",
    "save_observations",
    "load_observations",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Link:
    """A dithering model ``f``.

    Parameters
    ----------
    kind : {"logistic", "probit"}
    sigma : float
        Scale of the Gaussian noise for the probit link, ``f(x) = Phi(x / sigma)``.
        Ignored by the logistic link.
    eps : float
        Probabilities returned by :meth:`prob` are clamped to ``[eps, 1 - eps]``.
    """

    kind: str = "logistic"
    sigma: float = 1.0
    eps: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("logistic", "probit"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.eps < 1e-6:
            raise ValueError("eps must lie in (0, 1e-6)")

    def cdf(self, x):
        """Unclamped ``f(x)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return special.expit(x)
        return special.ndtr(x / self.sigma)

    def prob(self, x):
        """``f(x)`` clamped away from 0 and 1."""
        return np.clip(self.cdf(x), self.eps, 1.0 - self.eps)

    def deriv(self, x):
        """Exact derivative of the unclamped ``f``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            s = special.expit(x)
            return s * (1.0 - s)
        z = x / self.sigma
        return np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / self.sigma

    def log_cdf(self, x):
        """``log f(x)``, accurate far into both tails."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return -np.logaddexp(0.0, -x)
        return special.log_ndtr(x / self.sigma)

    def loss(self, x, y):
        """Per-sample negative log-likelihood ``-log P(y | x)``.

        Uses ``1 - f(x) = f(-x)``, so ``-log P(y | x) = -log f(y x)``.
        """
        return -self.log_cdf(np.asarray(y) * np.asarray(x, dtype=float))

    def loss_grad(self, x, y):
        """Derivative of :meth:`loss` with respect to ``x``."""
        y = np.asarray(y, dtype=float)
        z = y * np.asarray(x, dtype=float)
        if self.kind == "logistic":
            # f'/f = 1 - f for the logistic function
            return -y * special.expit(-z)
        t = z / self.sigma
        hazard = np.exp(-0.5 * t * t - _LOG_SQRT_2PI - special.log_ndtr(t))
        return -y * hazard / self.sigma


def logistic() -> Link:
    return Link("logistic")


def probit(sigma: float) -> Link:
    return Link("probit", sigma=sigma)


def link_eval(link: Link, x):
    """Return ``(f(x), f'(x))`` with ``f`` clamped and ``f'`` exact."""
    return link.prob(x), link.deriv(x)


@dataclass(frozen=True)
class LinkConstants:
    """Steepness ``L``, flatness ``beta`` and ``U`` of a link on ``[-alpha, alpha]``.

    ``upper_bound`` is true when the values are upper bounds on the suprema
    rather than the suprema themselves (probit).
    """

    alpha: float
    L: float
    beta: float
    U: float
    upper_bound: bool = False


def link_constants(link: Link, alpha: float) -> LinkConstants:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if link.kind == "logistic":
        return LinkConstants(
            alpha=alpha,
            L=1.0,
            beta=(1.0 + np.exp(alpha)) ** 2 / np.exp(alpha),
            U=2.0 * np.log(np.exp(alpha / 2) + np.exp(-alpha / 2)),
        )
    s = link.sigma
    return LinkConstants(
        alpha=alpha,
        L=4.0 / s * (alpha / s + 1.0),
        beta=np.pi * s ** 2 * np.exp(alpha ** 2 / (2 * s ** 2)),
        U=(alpha / s + 1.0) ** 2,
        upper_bound=True,
    )


class SamplingDistribution:
    """Distribution over the entries of a tensor of a given shape.

    ``weights=None`` means uniform. Otherwise ``weights`` is a nonnegative
    array of the tensor's shape summing to one.
    """

    def __init__(self, shape: Sequence[int], weights: Optional[np.ndarray] = None):
        self.shape = tuple(int(n) for n in shape)
        if len(self.shape) < 2 or any(n < 1 for n in self.shape):
            raise ValueError(f"invalid shape {shape}")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != self.shape:
                raise ValueError("weights must have the tensor's shape")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be nonnegative and sum to 1")
        self.weights = weights

    @property
    def is_uniform(self) -> bool:
        return self.weights is None

    def probabilities(self) -> np.ndarray:
        """Dense array of ``pi_omega``."""
        if self.weights is None:
            return np.full(self.shape, 1.0 / np.prod(self.shape))
        return self.weights

    @classmethod
    def point_mass(cls, shape, index) -> "SamplingDistribution":
        w = np.zeros(tuple(shape))
        w[tuple(index)] = 1.0
        return cls(shape, w)

    def __repr__(self):
        kind = "uniform" if self.is_uniform else "weighted"
        return f"SamplingDistribution(shape={self.shape}, {kind})"


def sample_indices(dist: SamplingDistribution, m: int, seed=None) -> np.ndarray:
    """Draw ``m`` indices i.i.d. from ``dist`` with replacement.

    Returns an ``(m, d)`` integer array of zero-based indices.
    """
    if m < 1:
        raise ValueError("m must be positive")
    rng = np.random.default_rng(seed)
    if dist.is_uniform:
        flat = rng.integers(0, int(np.prod(dist.shape)), size=m)
    else:
        p = dist.weights.ravel(order="F")
        flat = rng.choice(p.size, size=m, p=p / p.sum())
    return np.stack(np.unravel_index(flat, dist.shape, order="F"), axis=1).astype(np.int64)


@dataclass
class ObservationSet:
    """Sampled indices with their 1-bit labels.

    Duplicated indices are allowed and count once per occurrence.
    """

    shape: tuple
    indices: np.ndarray
    y: np.ndarray
    dist: Optional[SamplingDistribution] = None
    link: Optional[Link] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(self.shape))
        self.y = np.asarray(self.y).astype(np.int8).ravel()
        if len(self.y) != len(self.indices):
            raise ValueError("indices and labels differ in length")
        if not np.all(np.abs(self.y) == 1):
            raise ValueError("labels must be +1 or -1")
        if np.any(self.indices < 0) or np.any(self.indices >= np.asarray(self.shape)):
            raise IndexError("observation index out of range")
        if self.dist is None:
            self.dist = SamplingDistribution(self.shape)

    def __len__(self):
        return len(self.y)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def subset(self, selector) -> "ObservationSet":
        return ObservationSet(self.shape, self.indices[selector], self.y[selector],
                              self.dist, self.link, dict(self.meta))

    def flipped(self) -> "ObservationSet":
        return ObservationSet(self.shape, self.indices, -self.y, self.dist,
                              self.link, dict(self.meta))


def quantize(T: np.ndarray, indices: np.ndarray,
             link: Union[Link, str, None], seed=None) -> ObservationSet:
    """Take 1-bit measurements of ``T`` at ``indices``.

    With a :class:`Link`, ``y = +1`` with probability ``f(T[omega])``.
    With ``link="none"`` the measurement is undithered: ``y = sign(T[omega])``
    with ``sign(0) = +1``.
    """
    T = np.asarray(T, dtype=float)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, T.ndim)
    if np.any(idx < 0) or np.any(idx >= np.asarray(T.shape)):
        raise IndexError("index out of range")
    x = T[tuple(idx.T)]
    if link is None:
        raise ValueError("a link is required; pass 'none' for undithered signs")
    if isinstance(link, str):
        if link != "none":
            raise ValueError(f"unknown link {link!r}")
        y = np.where(x >= 0, 1, -1)
        return ObservationSet(T.shape, idx, y, link=None, meta={"dithered": False})
    rng = np.random.default_rng(seed)
    u = rng.random(len(x))
    y = np.where(u < link.cdf(x), 1, -1)
    return ObservationSet(T.shape, idx, y, link=link, meta={"dithered": True})


def save_observations(path: str | Path, obs: ObservationSet) -> None:
    """Write observations as CSV with one-based indices.

    The first line is ``dims: N_1,...,N_d``, the second the column header
    ``i1,...,id,y``.
    """
    with open(path, "w") as fh:
        fh.write("dims: " + ",".join(str(n) for n in obs.shape) + "\n")
        fh.write(",".join([f"i{j + 1}" for j in range(obs.ndim)] + ["y"]) + "\n")
        for row, y in zip(obs.indices + 1, obs.y):
            fh.write(",".join(str(int(v)) for v in row) + f",{int(y)}\n")


def load_observations(path: str | Path) -> ObservationSet:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("dims:"):
            raise ValueError(f"{path}: missing 'dims:' header")
        shape = tuple(int(s) for s in header[5:].split(","))
        cols = fh.readline().strip().split(",")
        if len(cols) != len(shape) + 1 or cols[-1] != "y":
            raise ValueError(f"{path}: bad column header {cols}")
        data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no observations")
    return ObservationSet(shape, data[:, :-1] - 1, data[:, -1])
