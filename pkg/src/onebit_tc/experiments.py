"""Synthetic experiment sweeps and the ratings-prediction recipe.

Every sweep cell (noise level, rank, sample fraction, repetition, method) is
seeded from ``(spec.seed, repetition)`` so reruns reproduce the same tables,
and all noise levels of one repetition share the same hidden tensor and
sample locations.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import mae, rse, sign_accuracy
from .observations import (Link, ObservationSet, SamplingDistribution, probit,
                           quantize, sample_indices)
from .solver import (FitResult, SolverConfig, cross_validate_radius,
                     default_radius_grid, matricize_observations)
from .tensor import cp_eval, cp_expand, infinity_norm

__all__ = [
    "ExperimentSpec",
    "SweepResult",
    "RatingsTable",
    "RecipeParams",
    "gen_synthetic",
    "balanced_row_modes",
    "fit_method",
    "run_sigma_sweep",
    "run_sample_sweep",
    "run_sigma_robustness",
    "run_sweep",
    "run_recipe",
    "ingest_csv",
    "save_ratings",
    "planted_ratings",
    "load_spec",
    "write_rows_csv",
]

logger = logging.getLogger(__name__)

FIGURE1_SIGMAS = (0.001, 0.01, 0.1, 1.0, 10.0)
SAMPLE_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))
SWEEP_RANKS = (3, 5, 10)


@dataclass
class ExperimentSpec:
    """Description of one synthetic sweep.

    ``kind`` selects the sweep: ``sigma_sweep`` varies the probit noise level
    used both to generate and to fit; ``sample_sweep`` varies rank and sample
    fraction at fixed ``sigmas[0]``; ``sigma_robustness`` generates with
    ``sigmas[0]`` and fits with every value in ``fit_sigmas``.
    """

    kind: str = "sigma_sweep"
    shape: tuple = (20, 20, 20)
    ranks: tuple = (5,)
    fractions: tuple = (0.5,)
    sigmas: tuple = FIGURE1_SIGMAS
    fit_sigmas: tuple = (0.05, 0.15, 0.5)
    repetitions: int = 5
    seed: int = 0
    methods: tuple = ("tensor", "matricized")
    validation_fraction: float = 0.1
    radius_grid: Optional[tuple] = None
    sigma_scaled_grid: Optional[bool] = None
    grid_reference_sigma: float = 0.1
    row_modes: Optional[tuple] = None
    k_cap: Optional[int] = None
    max_outer: int = 60
    max_inner: int = 3
    tol: float = 1e-5
    output: Optional[str] = None

    def validate(self):
        if self.kind not in ("sigma_sweep", "sample_sweep", "sigma_robustness"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if len(self.shape) < 2 or any(n < 1 for n in self.shape):
            raise ValueError(f"invalid shape {self.shape}")
        if any(not 0 < f <= 1 for f in self.fractions):
            raise ValueError("sample fractions must lie in (0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be positive")
        if any(not s > 0 for s in tuple(self.sigmas) + tuple(self.fit_sigmas)):
            raise ValueError("noise levels must be positive")
        bad = set(self.methods) - {"tensor", "matricized"}
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def solver_config(self, seed) -> SolverConfig:
        return SolverConfig(alpha=1.0, k_cap=self.k_cap, max_outer=self.max_outer,
                            max_inner=self.max_inner, tol=self.tol, seed=seed)

    def grid(self, link: Optional[Link] = None) -> list:
        """Radius grid for a fit with ``link``.

        With ``sigma_scaled_grid`` (default for ``sigma_robustness``) the grid
        is multiplied by ``sigma / grid_reference_sigma``: a probit likelihood
        only sees ``X / sigma``, so this keeps the candidate sets equivalent
        across noise levels.
        """
        grid = list(self.radius_grid) if self.radius_grid else default_radius_grid(1.0)
        scaled = self.sigma_scaled_grid
        if scaled is None:
            scaled = self.kind == "sigma_robustness"
        if scaled and link is not None and link.kind == "probit":
            grid = [R * link.sigma / self.grid_reference_sigma for R in grid]
        return grid


@dataclass
class SweepResult:
    """Per-fit rows and their per-cell aggregates."""

    spec: ExperimentSpec
    runs: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"spec": asdict(self.spec), "runs": self.runs, "summary": self.summary}


def _seed(*keys) -> int:
    """Deterministic 32-bit seed derived from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def gen_synthetic(shape: Sequence[int], r: int, seed=None) -> np.ndarray:
    """Rank-``r`` tensor from uniform ``[-1, 1]`` factors, scaled to unit infinity norm."""
    if r < 1:
        raise ValueError("rank must be positive")
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(100):
        rng = np.random.default_rng(child)
        T = cp_expand([rng.uniform(-1.0, 1.0, size=(n, r)) for n in shape])
        inf = infinity_norm(T)
        if inf > 0:
            return T / inf
    raise RuntimeError("could not draw a nonzero tensor")


def balanced_row_modes(shape: Sequence[int]) -> tuple:
    """Mode subset whose unfolding is closest to square.

    Ties go to fewer row modes, then to the lexicographically first subset.
    """
    d = len(shape)
    half = 0.5 * np.sum(np.log(shape))
    best, best_key = None, None
    for size in range(1, d):
        for modes in itertools.combinations(range(d), size):
            gap = abs(np.sum(np.log([shape[m] for m in modes])) - half)
            key = (round(gap, 12), size, modes)
            if best_key is None or key < best_key:
                best, best_key = modes, key
    return best


def fit_method(obs: ObservationSet, link: Link, method: str, spec: ExperimentSpec,
               seed: int) -> tuple[np.ndarray, FitResult]:
    """Cross-validated fit by ``method``; returns the estimate in tensor shape."""
    config = spec.solver_config(seed)
    if method == "tensor":
        target = obs
    elif method == "matricized":
        row_modes = list(spec.row_modes or balanced_row_modes(obs.shape))
        target = matricize_observations(obs, row_modes)
        if config.k_cap is None:
            config = replace(config, k_cap=2 * min(target.shape))
    else:
        raise ValueError(f"unknown method {method!r}")
    _, res = cross_validate_radius(target, link, config, spec.grid(link),
                                   spec.validation_fraction, seed=seed)
    if method == "matricized":
        res.matricization = {"tensor_shape": obs.shape, "row_modes": row_modes}
    return res.tensor(), res


def _max_increase(res: FitResult) -> float:
    return max(res.meta.get("max_step_increase", 0.0),
               res.meta.get("cv_max_step_increase", 0.0))


def _draw(spec: ExperimentSpec, r: int, fraction: float, rep: int):
    T = gen_synthetic(spec.shape, r, _seed(spec.seed, rep, r, 1))
    m = max(1, int(round(fraction * np.prod(spec.shape))))
    idx = sample_indices(SamplingDistribution(spec.shape), m, _seed(spec.seed, rep, r, 2))
    return T, idx


def _summarize(runs: list, keys: Sequence[str], metrics: Sequence[str]) -> list:
    groups: dict = {}
    for row in runs:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    summary = []
    for key, rows in groups.items():
        out = dict(zip(keys, key))
        out["repetitions"] = len(rows)
        out["seeds"] = [row["seed"] for row in rows]
        for name in metrics:
            vals = np.array([row[name] for row in rows], dtype=float)
            out[f"{name}_mean"] = float(vals.mean())
            out[f"{name}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            out[f"{name}_median"] = float(np.median(vals))
        out["max_step_increase"] = max(row["max_step_increase"] for row in rows)
        summary.append(out)
    return summary


def _run_row(spec, method, sigma, r, fraction, rep, seed, T, T_hat, res, **extra):
    row = {
        "kind": spec.kind, "method": method, "sigma": sigma, "rank": r,
        "fraction": fraction, "repetition": rep, "seed": seed,
        "shape": list(spec.shape), "chosen_R": res.chosen_R,
        "rse": rse(T_hat, T), "sweeps": res.iterations,
        "max_step_increase": _max_increase(res),
    }
    row.update(extra)
    return row


def run_sigma_sweep(spec: ExperimentSpec) -> SweepResult:
    """RSE against the probit noise level, fitting with the generating link."""
    spec = replace(spec, kind="sigma_sweep")
    spec.validate()
    out = SweepResult(spec)
    r, fraction = spec.ranks[0], spec.fractions[0]
    for rep in range(spec.repetitions):
        T, idx = _draw(spec, r, fraction, rep)
        qseed = _seed(spec.seed, rep, r, 3)
        for sigma in spec.sigmas:
            link = probit(sigma)
            obs = quantize(T, idx, link, qseed)
            for method in spec.methods:
                seed = _seed(spec.seed, rep, r, 4)
                T_hat, res = fit_method(obs, link, method, spec, seed)
                out.runs.append(_run_row(spec, method, sigma, r, fraction, rep, seed,
                                         T, T_hat, res))
                logger.info("sigma=%g %s rep=%d rse=%.4f", sigma, method, rep,
                            out.runs[-1]["rse"])
    out.summary = _summarize(out.runs, ("sigma", "method"), ("rse",))
    return out


def run_sample_sweep(spec: ExperimentSpec) -> SweepResult:
    """RSE against rank and sample fraction at the noise level ``spec.sigmas[0]``."""
    spec = replace(spec, kind="sample_sweep")
    spec.validate()
    out = SweepResult(spec)
    sigma = spec.sigmas[0]
    link = probit(sigma)
    for r, fraction, rep in itertools.product(spec.ranks, spec.fractions,
                                              range(spec.repetitions)):
        T, idx = _draw(spec, r, fraction, rep)
        obs = quantize(T, idx, link, _seed(spec.seed, rep, r, 3))
        for method in spec.methods:
            seed = _seed(spec.seed, rep, r, 4)
            T_hat, res = fit_method(obs, link, method, spec, seed)
            out.runs.append(_run_row(spec, method, sigma, r, fraction, rep, seed,
                                     T, T_hat, res))
    out.summary = _summarize(out.runs, ("rank", "fraction", "method"), ("rse",))
    return out


def run_sigma_robustness(spec: ExperimentSpec) -> SweepResult:
    """Generate with one noise level, fit with several; track RSE and sign accuracy."""
    spec = replace(spec, kind="sigma_robustness")
    spec.validate()
    out = SweepResult(spec)
    r, fraction, gen_sigma = spec.ranks[0], spec.fractions[0], spec.sigmas[0]
    for rep in range(spec.repetitions):
        T, idx = _draw(spec, r, fraction, rep)
        obs = quantize(T, idx, probit(gen_sigma), _seed(spec.seed, rep, r, 3))
        for fit_sigma in spec.fit_sigmas:
            seed = _seed(spec.seed, rep, r, 4)
            T_hat, res = fit_method(obs, probit(fit_sigma), "tensor", spec, seed)
            out.runs.append(_run_row(
                spec, "tensor", fit_sigma, r, fraction, rep, seed, T, T_hat, res,
                generating_sigma=gen_sigma,
                sign_accuracy=sign_accuracy(T_hat.ravel(), T.ravel(), 0.0)))
    out.summary = _summarize(out.runs, ("sigma", "method"), ("rse", "sign_accuracy"))
    return out


def run_sweep(spec: ExperimentSpec) -> SweepResult:
    runner = {"sigma_sweep": run_sigma_sweep, "sample_sweep": run_sample_sweep,
              "sigma_robustness": run_sigma_robustness}.get(spec.kind)
    if runner is None:
        raise ValueError(f"unknown experiment kind {spec.kind!r}")
    return runner(spec)


# -- spec files ---------------------------------------------------------------

_TUPLE_FIELDS = {"shape": int, "ranks": int, "fractions": float, "sigmas": float,
                 "fit_sigmas": float, "methods": str, "radius_grid": float,
                 "row_modes": int}


def load_spec(path: str | Path, **overrides) -> ExperimentSpec:
    """Read a flat ``key = value`` spec file; list values are comma separated.

    ``row_modes`` is one-based in the file, like all user-facing indices.
    """
    known = {f.name: f for f in fields(ExperimentSpec)}
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}, line {lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}, line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "row_modes" in values and values["row_modes"] is not None:
        values["row_modes"] = tuple(m - 1 for m in values["row_modes"])
    spec = ExperimentSpec(**values)
    spec.validate()
    return spec


def _parse_value(key, raw):
    if key in _TUPLE_FIELDS:
        if raw.lower() in ("", "none"):
            return None
        conv = _TUPLE_FIELDS[key]
        return tuple(conv(s.strip()) for s in raw.split(",") if s.strip())
    if key in ("repetitions", "seed", "max_outer", "max_inner"):
        return int(raw)
    if key == "k_cap":
        return None if raw.lower() == "none" else int(raw)
    if key in ("validation_fraction", "tol", "grid_reference_sigma"):
        return float(raw)
    if key == "sigma_scaled_grid":
        return None if raw.lower() == "none" else raw.lower() in ("1", "true", "yes")
    return raw


def write_rows_csv(path: str | Path, rows: list) -> None:
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0])
    for row in rows[1:]:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, (list, tuple)) else v
                             for k, v in row.items()})


# -- ratings recipe -------------------------------------------------------------

@dataclass
class RatingsTable:
    """Observed ratings of a partially known tensor; indices are zero-based."""

    shape: tuple
    indices: np.ndarray
    ratings: np.ndarray
    scale_max: Optional[float] = None
    duplicates: int = 0

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(self.shape))
        self.ratings = np.asarray(self.ratings, dtype=float).ravel()
        if len(self.ratings) != len(self.indices):
            raise ValueError("indices and ratings differ in length")
        if np.any(self.indices < 0) or np.any(self.indices >= np.asarray(self.shape)):
            raise IndexError("rating index out of range")
        if not np.all(np.isfinite(self.ratings)):
            raise ValueError("ratings must be finite")
        if self.scale_max is None and len(self.ratings):
            self.scale_max = float(np.max(np.abs(self.ratings)))

    def __len__(self):
        return len(self.ratings)


@dataclass
class RecipeParams:
    """Settings of :func:`run_recipe`.

    ``eta=None`` uses the mean training rating; ``scale=None`` uses the
    table's ``scale_max``. Fractions split the ratings into train, validation
    (for choosing the radius) and test parts.
    """

    eta: Optional[float] = None
    scale: Optional[float] = None
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    test_fraction: float = 0.1
    repetitions: int = 10
    sigma: float = 0.1
    seed: int = 0
    radius_grid: Optional[tuple] = None
    diagnostic_train_is_test: bool = False

    def validate(self):
        fr = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if any(not f > 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must be positive and sum to 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


def run_recipe(table: RatingsTable, params: RecipeParams = RecipeParams(),
               config: Optional[SolverConfig] = None) -> dict:
    """Predict whether held-out ratings are above or below the mean.

    Per repetition: rescale ratings to unit infinity norm, threshold them at
    ``eta`` to +-1 labels (no dithering), fit with a cross-validated radius,
    add ``eta`` back, undo the scaling and score the test split. Test
    predictions are pooled over repetitions.
    """
    params.validate()
    if config is None:
        config = SolverConfig(max_outer=60, max_inner=3, tol=1e-5)
    n = len(table)
    n_test = int(round(params.test_fraction * n))
    if n_test < 1 or n - n_test < 2:
        raise ValueError(f"{n} ratings are too few for a test split")
    scale = params.scale if params.scale is not None else table.scale_max
    if not scale or scale <= 0:
        raise ValueError("rating scale must be positive")
    link = probit(params.sigma)
    holdout = params.validation_fraction / (params.train_fraction + params.validation_fraction)
    grid = list(params.radius_grid) if params.radius_grid else default_radius_grid(1.0)

    preds, truths, etas = [], [], []
    degenerate = 0
    for rep in range(params.repetitions):
        rng = np.random.default_rng(_seed(params.seed, rep, 7))
        perm = rng.permutation(n)
        test, fit_part = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        if params.diagnostic_train_is_test:
            test = fit_part
        r_fit = table.ratings[fit_part]
        eta = float(np.mean(r_fit)) if params.eta is None else float(params.eta)
        if abs(eta) > scale:
            raise ValueError(f"eta={eta} lies outside the rating scale [-{scale}, {scale}]")
        y = np.where(r_fit > eta, 1, -1)
        if np.all(y == y[0]):
            degenerate += 1
        obs = ObservationSet(table.shape, table.indices[fit_part], y)
        seed = _seed(params.seed, rep, 8)
        _, res = cross_validate_radius(obs, link, replace(config, seed=seed), grid,
                                       holdout, seed=seed)
        X = cp_eval(res.factors, table.indices[test])
        preds.append((X + eta / scale) * scale)
        truths.append(table.ratings[test])
        etas.append(eta)
    if degenerate:
        warnings.warn(f"{degenerate} repetition(s) had all training labels equal; "
                      "the fit is degenerate", RuntimeWarning, stacklevel=2)

    eta_ref = float(np.mean(etas))
    hits = np.concatenate([np.where(p - e >= 0, 1, -1) == np.where(t - e >= 0, 1, -1)
                           for p, t, e in zip(preds, truths, etas)])
    pred_all, truth_all = np.concatenate(preds), np.concatenate(truths)
    acc = float(np.mean(hits))
    n_pool = len(hits)
    record = {
        "n_ratings": n,
        "n_test_pooled": n_pool,
        "repetitions": params.repetitions,
        "eta": eta_ref,
        "scale": float(scale),
        "sigma": params.sigma,
        "sign_accuracy": acc,
        "sign_accuracy_se": float(np.sqrt(acc * (1 - acc) / n_pool)),
        "chance_se": float(0.5 / np.sqrt(n_pool)),
        "mae": mae(pred_all, truth_all),
        "degenerate_repetitions": degenerate,
        "diagnostic_train_is_test": params.diagnostic_train_is_test,
    }
    record["sign_accuracy_per_rep"] = [
        sign_accuracy(p, t, e) for p, t, e in zip(preds, truths, etas)]
    for level in np.unique(truth_all):
        mask = truth_all == level
        record[f"accuracy_level_{_level_key(level)}"] = float(np.mean(hits[mask]))
        record[f"count_level_{_level_key(level)}"] = int(mask.sum())
    return record


def _level_key(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def ingest_csv(path: str | Path, shape: Sequence[int],
               scale_max: Optional[float] = None) -> RatingsTable:
    """Read ``i_1,...,i_d,rating`` rows with one-based indices.

    A non-numeric first line is treated as a header. Repeated indices keep
    the last rating; the number of overwritten rows is stored in
    ``duplicates``.
    """
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    seen: dict = {}
    dup = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}, line {lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                idx = tuple(int(c) for c in row[:d])
                rating = float(row[d])
            except ValueError:
                raise ValueError(f"{path}, line {lineno}: malformed row {row}") from None
            if any(not 1 <= i <= n for i, n in zip(idx, shape)):
                raise ValueError(f"{path}, line {lineno}: index {idx} out of range for shape "
                                 f"{shape} (indices are 1-based)")
            if not np.isfinite(rating):
                raise ValueError(f"{path}, line {lineno}: rating is not finite")
            if idx in seen:
                dup += 1
                del seen[idx]
            seen[idx] = rating
    if not seen:
        raise ValueError(f"{path}: no data rows")
    if dup:
        warnings.warn(f"{path}: {dup} duplicate index row(s); kept the last",
                      RuntimeWarning, stacklevel=2)
    idx = np.array(list(seen), dtype=np.int64) - 1
    return RatingsTable(shape, idx, np.array(list(seen.values())), scale_max, dup)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def save_ratings(path: str | Path, table: RatingsTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{j + 1}" for j in range(len(table.shape))] + ["rating"])
        for idx, r in zip(table.indices + 1, table.ratings):
            writer.writerow([int(i) for i in idx] + [_level_key(r)])


def planted_ratings(shape: Sequence[int] = (30, 20, 4), rank: int = 2,
                    fraction: float = 0.02, levels: int = 5,
                    seed=None) -> tuple[RatingsTable, np.ndarray]:
    """Integer ratings ``1..levels`` read off a planted rank-``rank`` tensor.

    Factor entries are ``1 + uniform[-1, 1]``, so each rank-one term mixes a
    shared offset with per-index effects. The tensor is mapped affinely onto
    ``[1, levels]`` and rounded; ``fraction`` of the entries are revealed
    without repetition. Returns the table and the full rating tensor.
    """
    rng = np.random.default_rng(seed)
    T = cp_expand([1.0 + rng.uniform(-1.0, 1.0, size=(n, rank)) for n in shape])
    lo, hi = T.min(), T.max()
    full = np.rint(1 + (levels - 1) * (T - lo) / (hi - lo))
    total = int(np.prod(shape))
    m = max(1, int(round(fraction * total)))
    flat = rng.choice(total, size=m, replace=False)
    idx = np.stack(np.unravel_index(flat, tuple(shape), order="F"), axis=1)
    return RatingsTable(shape, idx, full[tuple(idx.T)], float(levels)), full
