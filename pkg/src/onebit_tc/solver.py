"""Max-qnorm constrained maximum-likelihood fitting over CP factors.

The constrained program

    min  nll(V_1 o ... o V_d)   s.t.  ||V_i||_{2,inf} <= R ** (1/d)  for all i

is solved by block coordinate descent: factors are visited cyclically and
each one takes a few projected-gradient steps with all others fixed. Each
step uses an Armijo backtracking search along the projection arc, so the
objective never increases.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .likelihood import partial_products, row_selector
from .observations import Link, ObservationSet
from .tensor import (check_factors, cp_eval, cp_expand, infinity_norm, matricize_indices,
                     row_norms, unmatricize)

__all__ = [
    "SolverConfig",
    "FitResult",
    "project_row_norm",
    "rescale_infinity",
    "init_factors",
    "fit_max_qnorm",
    "cross_validate_radius",
    "default_radius_grid",
    "matricize_observations",
    "fit_matricized",
    "save_checkpoint",
    "load_checkpoint",
]

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "onebit-tc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class SolverConfig:
    """Parameters of :func:`fit_max_qnorm`.

    ``k_cap=None`` uses twice the largest dimension. ``step_init`` is the
    trial step of the first backtracking search on each factor; later searches
    start from ``accepted_step / shrink`` unless ``warm_start_step`` is off, in
    which case every search restarts at ``step_init``.
    """

    R_max: float = 1.0
    alpha: float = 1.0
    k_cap: Optional[int] = None
    max_outer: int = 200
    max_inner: int = 20
    tol: float = 1e-6
    step_init: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    warm_start_step: bool = True
    enforce_infinity: bool = False
    seed: Optional[int] = 0

    def validate(self):
        if not self.R_max > 0:
            raise ValueError("R_max must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.k_cap is not None and self.k_cap < 1:
            raise ValueError("k_cap must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not (self.tol > 0 and self.step_init > 0 and self.armijo > 0):
            raise ValueError("tol, step_init and armijo must be positive")


@dataclass
class FitResult:
    factors: list
    objective_trace: list
    chosen_R: float
    iterations: int
    converged: bool
    matricization: Optional[dict] = None
    cv_table: Optional[list] = None
    meta: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def tensor(self) -> np.ndarray:
        """The fitted tensor, folded back to tensor shape for matricized fits."""
        X = cp_expand(self.factors)
        if self.matricization is not None:
            X = unmatricize(X, self.matricization["tensor_shape"],
                            self.matricization["row_modes"])
        return X


def project_row_norm(V: np.ndarray, bound: float) -> np.ndarray:
    """Scale every row of ``V`` whose l2 norm exceeds ``bound`` back to ``bound``."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    V = np.asarray(V, dtype=float)
    norms = row_norms(V)
    over = norms > bound
    if not over.any():
        return V.copy()
    out = V.copy()
    scaled = V[over] * (bound / norms[over])[:, None]
    # Rounding can leave a rescaled row a few ulps above the bound; nudge it
    # inside so a second projection is an exact no-op.
    high = row_norms(scaled) > bound
    scaled[high] *= 1.0 - 4 * np.finfo(float).eps
    out[over] = scaled
    return out


def rescale_infinity(factors: Sequence[np.ndarray], alpha: float,
                     mode: int = 0) -> list[np.ndarray]:
    """Shrink ``factors[mode]`` so the expanded tensor has infinity norm ``alpha``.

    Factors are returned unchanged when the tensor is already within the bound
    (including the all-zero tensor).
    """
    factors = [V.copy() for V in check_factors(factors)]
    inf = infinity_norm(cp_expand(factors))
    if inf > alpha:
        factors[mode] *= alpha / inf
    return factors


def init_factors(shape: Sequence[int], k: int, bound: float, seed=None) -> list[np.ndarray]:
    """Uniform ``[-1, 1]`` factors projected onto the row-norm ball."""
    rng = np.random.default_rng(seed)
    return [project_row_norm(rng.uniform(-1.0, 1.0, size=(n, k)), bound) for n in shape]


def _check_inputs(obs: ObservationSet, config: SolverConfig):
    config.validate()
    if len(obs) < 1:
        raise ValueError("no observations")
    if obs.ndim < 2:
        raise ValueError("tensor order must be at least 2")


class _ModeProblem:
    """Objective restricted to one factor, the others held fixed."""

    def __init__(self, factors, obs: ObservationSet, link: Link, mode: int):
        self.P = partial_products(factors, obs.indices, mode)
        self.rows = obs.indices[:, mode]
        self.y = obs.y
        self.link = link
        self.S = row_selector(self.rows, factors[mode].shape[0])

    def entries(self, V):
        return np.einsum("ij,ij->i", self.P, V[self.rows])

    def value(self, V, x=None):
        if x is None:
            x = self.entries(V)
        return float(np.sum(self.link.loss(x, self.y))), x

    def grad(self, x):
        g = self.link.loss_grad(x, self.y)
        return np.asarray(self.S @ (g[:, None] * self.P))


def _row_step(prob: _ModeProblem, V, x, steps, bound, config: SolverConfig):
    """One projected-gradient step on a factor, with a backtracking search per row.

    Every sample touches exactly one row of the factor, so the objective is a
    sum of independent row terms and each row can take its own Armijo step.
    ``steps`` holds the last accepted step of every row and is updated in
    place. Returns ``(V_new, x_new, moved)``.
    """
    n = V.shape[0]
    rows, y, link = prob.rows, prob.y, prob.link
    G = prob.grad(x)
    base = np.bincount(rows, weights=link.loss(x, y), minlength=n)
    gamma = steps / config.shrink if config.warm_start_step else np.full(n, config.step_init)
    pending = np.flatnonzero(np.any(G != 0.0, axis=1))
    Vn, xn = V.copy(), x.copy()
    moved = False
    for _ in range(config.max_backtracks):
        if pending.size == 0:
            break
        trial = project_row_norm(V[pending] - gamma[pending, None] * G[pending], bound)
        decrease = np.sum(G[pending] * (trial - V[pending]), axis=1)
        live = decrease < 0.0
        pending, trial, decrease = pending[live], trial[live], decrease[live]
        if pending.size == 0:
            break
        # only samples that sit in a pending row need re-evaluation
        Vt = np.zeros_like(V)
        Vt[pending] = trial
        in_pending = np.zeros(n, dtype=bool)
        in_pending[pending] = True
        sel = np.flatnonzero(in_pending[rows])
        xt = np.einsum("ij,ij->i", prob.P[sel], Vt[rows[sel]])
        rl = np.bincount(rows[sel], weights=link.loss(xt, y[sel]), minlength=n)
        ok = rl[pending] <= base[pending] + config.armijo * decrease
        if ok.any():
            acc = pending[ok]
            Vn[acc] = trial[ok]
            steps[acc] = gamma[acc]
            in_acc = np.zeros(n, dtype=bool)
            in_acc[acc] = True
            hit = in_acc[rows[sel]]
            xn[sel[hit]] = xt[hit]
            moved = True
        pending = pending[~ok]
        gamma[pending] *= config.shrink
    if not moved:
        return V, x, False
    return Vn, xn, True


def fit_max_qnorm(obs: ObservationSet, link: Link, config: SolverConfig,
                  init: Optional[Sequence[np.ndarray]] = None,
                  callback: Optional[Callable] = None) -> FitResult:
    """Fit CP factors to 1-bit observations under the max-qnorm constraint.

    Parameters
    ----------
    obs : ObservationSet
    link : Link
        Link used in the likelihood (need not match the one that generated
        ``obs``).
    config : SolverConfig
    init : list of arrays, optional
        Starting factors; projected onto the feasible set before use.
    callback : callable, optional
        Called as ``callback(sweep, mode, factors, objective)`` after every
        accepted step.

    Returns
    -------
    FitResult
        ``objective_trace[0]`` is the objective at the starting point, then one
        entry per sweep over all factors.
    """
    _check_inputs(obs, config)
    d = obs.ndim
    bound = config.R_max ** (1.0 / d)
    k = config.k_cap or 2 * max(obs.shape)
    if init is None:
        factors = init_factors(obs.shape, k, bound, config.seed)
        # Rows that no sample touches have a zero gradient and would keep their
        # random start forever; zero them so unseen entries predict 0.
        for j, V in enumerate(factors):
            seen = np.zeros(V.shape[0], dtype=bool)
            seen[obs.indices[:, j]] = True
            V[~seen] = 0.0
    else:
        factors = [project_row_norm(V, bound) for V in check_factors(init)]
        if tuple(V.shape[0] for V in factors) != obs.shape:
            raise ValueError("initial factors do not match the observation shape")

    fval, _ = _ModeProblem(factors, obs, link, 0).value(factors[0])
    trace = [fval]
    steps = [np.full(n, config.step_init * config.shrink) for n in obs.shape]
    converged = False
    max_increase = 0.0
    sweep = 0
    for sweep in range(1, config.max_outer + 1):
        f_start = fval
        for mode in range(d):
            prob = _ModeProblem(factors, obs, link, mode)
            V = factors[mode]
            x = prob.entries(V)
            for _ in range(config.max_inner):
                V, x, moved = _row_step(prob, V, x, steps[mode], bound, config)
                if not moved:
                    break
                factors[mode] = V
                fnew = float(np.sum(link.loss(x, obs.y)))
                max_increase = max(max_increase, fnew - fval)
                fval = fnew
                if callback is not None:
                    callback(sweep, mode, factors, fval)
            if config.enforce_infinity:
                factors = rescale_infinity(factors, config.alpha, mode)
                fval, _ = _ModeProblem(factors, obs, link, mode).value(factors[mode])
        trace.append(fval)
        rel = (f_start - fval) / max(abs(f_start), np.finfo(float).tiny)
        if rel < config.tol:
            converged = True
            break
    logger.debug("fit R=%g: %d sweeps, objective %.6g", config.R_max, sweep, fval)
    return FitResult(factors=factors, objective_trace=trace, chosen_R=config.R_max,
                     iterations=sweep, converged=converged,
                     meta={"max_step_increase": max_increase})


def default_radius_grid(alpha: float = 1.0, n: int = 8) -> list[float]:
    """Geometric grid ``alpha * 2**j`` for ``j = 0..n-1``."""
    return [alpha * 2.0 ** j for j in range(n)]


def cross_validate_radius(obs: ObservationSet, link: Link, config: SolverConfig,
                          grid: Optional[Sequence[float]] = None,
                          holdout_fraction: float = 0.1,
                          seed=None) -> tuple[float, FitResult]:
    """Choose ``R_max`` on a held-out part of the samples, then refit on all.

    The radius with the smallest average validation loss wins; ties go to
    the first grid entry. The returned result's ``cv_table`` lists
    ``(R, validation_loss)`` for every grid point.
    """
    if grid is None:
        grid = default_radius_grid(config.alpha)
    grid = [float(R) for R in grid]
    if not grid:
        raise ValueError("radius grid is empty")
    if any(not R > 0 for R in grid):
        raise ValueError("radius grid values must be positive")
    if not 0 < holdout_fraction < 0.5:
        raise ValueError("holdout_fraction must lie in (0, 0.5)")
    if len(obs) < 1:
        raise ValueError("no observations")

    table = []
    grid_increase = 0.0
    if len(grid) == 1:
        best_R = grid[0]
    else:
        m = len(obs)
        n_val = int(round(holdout_fraction * m))
        if n_val < 1 or m - n_val < 1:
            raise ValueError(f"cannot hold out {holdout_fraction:.0%} of {m} samples")
        rng = np.random.default_rng(config.seed if seed is None else seed)
        perm = rng.permutation(m)
        val, train = obs.subset(np.sort(perm[:n_val])), obs.subset(np.sort(perm[n_val:]))
        for R in grid:
            res = fit_max_qnorm(train, link, replace(config, R_max=R))
            grid_increase = max(grid_increase, res.meta["max_step_increase"])
            losses = link.loss(cp_eval(res.factors, val.indices), val.y)
            table.append((R, float(np.mean(losses))))
        best_R = table[int(np.argmin([v for _, v in table]))][0]
    result = fit_max_qnorm(obs, link, replace(config, R_max=best_R))
    result.cv_table = table
    result.meta["cv_max_step_increase"] = grid_increase
    return best_R, result


def matricize_observations(obs: ObservationSet, row_modes: Sequence[int]) -> ObservationSet:
    """Re-index observations onto the matricized tensor (order 2)."""
    row_modes = list(row_modes)
    cols = [m for m in range(obs.ndim) if m not in row_modes]
    mshape = (int(np.prod([obs.shape[m] for m in row_modes])),
              int(np.prod([obs.shape[m] for m in cols])))
    idx = matricize_indices(obs.indices, obs.shape, row_modes)
    meta = dict(obs.meta, tensor_shape=obs.shape, row_modes=row_modes)
    return ObservationSet(mshape, idx, obs.y, link=obs.link, meta=meta)


def fit_matricized(obs: ObservationSet, link: Link, config: SolverConfig,
                   row_modes: Sequence[int]) -> FitResult:
    """Matrix max-norm baseline: unfold the observations, then fit with ``d=2``.

    The result's factors live in matrix coordinates; ``result.tensor()`` folds
    the estimate back. ``k_cap=None`` uses twice the smaller matrix dimension.
    """
    mobs = obs if obs.ndim == 2 and list(row_modes) == [0] else None
    if mobs is None:
        mobs = matricize_observations(obs, row_modes)
    if config.k_cap is None:
        config = replace(config, k_cap=2 * min(mobs.shape))
    result = fit_max_qnorm(mobs, link, config)
    result.matricization = {"tensor_shape": obs.shape, "row_modes": list(row_modes)}
    return result


def save_checkpoint(path: str | Path, result: FitResult) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "shape": [V.shape[0] for V in result.factors],
        "k": result.factors[0].shape[1],
        "chosen_R": result.chosen_R,
        "iterations": result.iterations,
        "converged": result.converged,
        "objective_trace": result.objective_trace,
        "matricization": result.matricization,
        "factors": [V.tolist() for V in result.factors],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str | Path) -> FitResult:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a fit checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    factors = check_factors([np.array(V, dtype=float).reshape(n, payload["k"])
                             for V, n in zip(payload["factors"], payload["shape"])])
    mat = payload.get("matricization")
    if mat is not None:
        mat = {"tensor_shape": tuple(mat["tensor_shape"]), "row_modes": mat["row_modes"]}
    return FitResult(factors=factors, objective_trace=payload["objective_trace"],
                     chosen_R=payload["chosen_R"], iterations=payload["iterations"],
                     converged=payload["converged"], matricization=mat)
