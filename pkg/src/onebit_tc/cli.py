"""Command-line front end, run as ``python -m onebit_tc``.

Subcommands
-----------
simulate   draw a synthetic tensor and quantize samples of it to files
fit        fit observations and write a checkpoint
evaluate   compare a checkpoint with the true tensor and write metrics
sweep      run a synthetic experiment sweep from a spec file and flags
recipe     run the ratings-prediction recipe on a ratings CSV

Indices in every file and flag are one-based.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .metrics import (hellinger_sq, kl_div, pi_weighted_mse, rse, sign_accuracy,
                      write_metrics)
from .observations import (Link, SamplingDistribution, load_observations, quantize,
                           sample_indices, save_observations)
from .solver import (SolverConfig, cross_validate_radius, fit_matricized,
                     load_checkpoint, matricize_observations, save_checkpoint)
from .tensor import load_tensor, save_tensor

_SWEEP_KINDS = {"sigma": "sigma_sweep", "sample": "sample_sweep",
                "robustness": "sigma_robustness"}


def _shape(text: str) -> tuple:
    parts = text.replace("x", ",").replace("X", ",").split(",")
    try:
        shape = tuple(int(p) for p in parts if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}; use e.g. 20x20x20")
    if len(shape) < 2 or any(n < 1 for n in shape):
        raise argparse.ArgumentTypeError(f"bad shape {text!r}")
    return shape


def _floats(text: str) -> tuple:
    return tuple(float(s) for s in text.split(",") if s.strip())


def _ints(text: str) -> tuple:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _link(args) -> Link:
    if args.link == "logistic":
        return Link("logistic")
    return Link("probit", sigma=args.sigma)


def _add_link_args(p, sigma_default=0.1):
    p.add_argument("--link", choices=("probit", "logistic"), default="probit")
    p.add_argument("--sigma", type=float, default=sigma_default,
                   help="probit noise level (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m onebit_tc",
                                     description="1-bit tensor completion tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a tensor and 1-bit samples")
    p.add_argument("--shape", type=_shape, default=(20, 20, 20))
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--fraction", type=float, default=0.5,
                   help="number of samples as a fraction of the entries")
    p.add_argument("--undithered", action="store_true",
                   help="record sign(T) instead of dithered labels")
    _add_link_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("fit", help="fit observations, write a checkpoint")
    p.add_argument("--obs", type=Path, required=True, help="observations CSV")
    _add_link_args(p)
    p.add_argument("--radius-grid", type=_floats, default=None,
                   help="comma-separated R_max candidates (default 1,2,...,128)")
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--row-modes", type=_ints, default=None,
                   help="fit the matricization with these modes as rows")
    p.add_argument("--rank", type=int, default=None,
                   help="factor width cap (default twice the largest dimension)")
    p.add_argument("--max-outer", type=int, default=60)
    p.add_argument("--max-inner", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="checkpoint JSON")

    p = sub.add_parser("evaluate", help="score a checkpoint against the truth")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True, help="tensor text file")
    _add_link_args(p)
    p.add_argument("--out", type=Path, required=True, help="metrics JSON")

    p = sub.add_parser("sweep", help="run a synthetic experiment sweep")
    p.add_argument("--kind", choices=sorted(_SWEEP_KINDS), required=True)
    p.add_argument("--spec", type=Path, default=None, help="key = value spec file")
    p.add_argument("--shape", type=_shape, default=None)
    p.add_argument("--rank", type=_ints, default=None, help="comma-separated ranks")
    p.add_argument("--sigma", type=_floats, default=None,
                   help="comma-separated generating noise levels")
    p.add_argument("--fraction", type=_floats, default=None,
                   help="comma-separated sample fractions")
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--row-modes", type=_ints, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True,
                   help="output prefix; writes PREFIX.json, PREFIX_runs.csv "
                        "and PREFIX_summary.csv")

    p = sub.add_parser("recipe", help="predict above/below-mean ratings")
    p.add_argument("--ratings", type=Path, required=True, help="ratings CSV")
    p.add_argument("--shape", type=_shape, required=True)
    p.add_argument("--scale", type=float, default=None,
                   help="largest rating magnitude (default: largest observed)")
    p.add_argument("--eta", type=float, default=None,
                   help="threshold (default: mean training rating)")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--radius-grid", type=_floats, default=None)
    p.add_argument("--diagnostic", action="store_true",
                   help="score on the training ratings (overfitting check)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="metrics JSON")
    return parser


def cmd_simulate(args) -> dict:
    T = ex.gen_synthetic(args.shape, args.rank, args.seed)
    m = max(1, int(round(args.fraction * T.size)))
    idx = sample_indices(SamplingDistribution(T.shape), m, seed=ex._seed(args.seed, 1))
    link = "none" if args.undithered else _link(args)
    obs = quantize(T, idx, link, seed=ex._seed(args.seed, 2))
    args.out.mkdir(parents=True, exist_ok=True)
    save_tensor(args.out / "truth.txt", T)
    save_observations(args.out / "observations.csv", obs)
    info = {"shape": list(T.shape), "rank": args.rank, "m": m, "seed": args.seed,
            "link": "none" if args.undithered else args.link, "sigma": args.sigma}
    with open(args.out / "simulation.json", "w") as fh:
        json.dump(info, fh, indent=2)
    return info


def cmd_fit(args) -> dict:
    obs = load_observations(args.obs)
    link = _link(args)
    config = SolverConfig(k_cap=args.rank, max_outer=args.max_outer,
                          max_inner=args.max_inner, seed=args.seed)
    grid = list(args.radius_grid) if args.radius_grid else None
    if args.row_modes:
        row_modes = [m - 1 for m in args.row_modes]
        mobs = matricize_observations(obs, row_modes)
        if config.k_cap is None:
            config = replace(config, k_cap=2 * min(mobs.shape))
        _, res = cross_validate_radius(mobs, link, config, grid, args.validation_fraction)
        res.matricization = {"tensor_shape": obs.shape, "row_modes": row_modes}
    else:
        _, res = cross_validate_radius(obs, link, config, grid, args.validation_fraction)
    save_checkpoint(args.out, res)
    return {"chosen_R": res.chosen_R, "objective": res.objective,
            "iterations": res.iterations, "converged": res.converged}


def cmd_evaluate(args) -> dict:
    res = load_checkpoint(args.checkpoint)
    T = load_tensor(args.truth)
    T_hat = res.tensor()
    if T_hat.shape != T.shape:
        raise ValueError(f"checkpoint shape {T_hat.shape} differs from truth {T.shape}")
    link = _link(args)
    P, Q = link.prob(T), link.prob(T_hat)
    record = {
        "rse": rse(T_hat, T),
        "pi_weighted_mse": pi_weighted_mse(T_hat, T),
        "sign_accuracy": sign_accuracy(T_hat, T, 0.0),
        "hellinger_sq": hellinger_sq(P, Q),
        "kl": kl_div(P, Q),
        "chosen_R": res.chosen_R,
        "link": args.link,
        "sigma": args.sigma,
    }
    write_metrics(args.out, record)
    return record


def cmd_sweep(args) -> dict:
    overrides = {"kind": _SWEEP_KINDS[args.kind], "shape": args.shape,
                 "ranks": args.rank, "fractions": args.fraction, "sigmas": args.sigma,
                 "repetitions": args.repetitions, "seed": args.seed}
    if args.row_modes:
        overrides["row_modes"] = args.row_modes
    if args.spec is not None:
        spec = ex.load_spec(args.spec, **overrides)
    else:
        values = {k: v for k, v in overrides.items() if v is not None}
        if "row_modes" in values:
            values["row_modes"] = tuple(m - 1 for m in values["row_modes"])
        if args.kind == "robustness" and "sigmas" not in values:
            values["sigmas"] = (0.15,)
        spec = ex.ExperimentSpec(**values)
    spec = replace(spec, kind=_SWEEP_KINDS[args.kind])
    result = ex.run_sweep(spec)
    prefix = args.out
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{prefix}.json", "w") as fh:
        json.dump(result.to_json(), fh, indent=2)
    ex.write_rows_csv(f"{prefix}_runs.csv", result.runs)
    ex.write_rows_csv(f"{prefix}_summary.csv", result.summary)
    return {"runs": len(result.runs), "summary": result.summary}


def cmd_recipe(args) -> dict:
    table = ex.ingest_csv(args.ratings, args.shape, args.scale)
    params = ex.RecipeParams(eta=args.eta, scale=args.scale, sigma=args.sigma,
                             repetitions=args.repetitions, seed=args.seed,
                             radius_grid=args.radius_grid,
                             diagnostic_train_is_test=args.diagnostic)
    record = ex.run_recipe(table, params)
    record["duplicates"] = table.duplicates
    write_metrics(args.out, record)
    return record


_COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate,
             "sweep": cmd_sweep, "recipe": cmd_recipe}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = _COMMANDS[args.command](args)
    except (ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(out, indent=2, default=_plain))
    return 0


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")
