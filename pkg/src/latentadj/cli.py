"""Command-line front end: ``adjust``, ``simulate`` and ``validate``.

Output TSV of ``adjust`` (column order is fixed)::

    feature_id
    beta_hat.<cov> ... se.<cov> ... t.<cov> ... p.<cov> ... q.<cov> ...   # bias-corrected
    <method>:beta_hat.<cov> ... <method>:q.<cov>                          # each comparator

Covariates run in design-column order inside each block.  The JSON summary
carries ``schema_version``; see README for the field list.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .design import ObservedData
from .errors import InputError, LatentAdjError
from .io import LabeledMatrix, read_config, read_matrix, write_matrix
from .pipeline import FitResult, fit
from .simulation import SimulationConfig, generate_scenario, run_experiment
from .validation import SUITES, run_suite

SCHEMA_VERSION = "1.0"
PRIMARY = "adjusted_bias_corrected"
CLI_METHODS = ("unadjusted", "adjusted_uncorrected", "adjusted_bias_corrected")
TABLE_FIELDS = (("beta_hat", "beta_hat"), ("se", "se"), ("t", "t_stat"), ("p", "p_value"), ("q", "q_value"))

log = logging.getLogger("latentadj")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# adjust
# --------------------------------------------------------------------------


def align_rows(mat: LabeledMatrix, sample_ids: list, what: str) -> np.ndarray:
    """Reorder the rows of ``mat`` to follow ``sample_ids``; any mismatch is an error."""
    index = {rid: i for i, rid in enumerate(mat.row_ids)}
    missing = [s for s in sample_ids if s not in index]
    extra = sorted(set(mat.row_ids) - set(sample_ids))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"samples missing from {what}: {missing[:5]}")
        if extra:
            parts.append(f"{what} has samples not in y: {extra[:5]}")
        raise InputError("; ".join(parts))
    return mat.values[[index[s] for s in sample_ids]]


def load_data(y_path, x_path, z_path=None, transpose: bool = False) -> ObservedData:
    ym = read_matrix(y_path, "features_by_samples")
    if transpose:
        ym = ym.transpose()
    xm = read_matrix(x_path, "samples_by_covariates")
    x = align_rows(xm, ym.col_ids, "x")
    z = None
    if z_path is not None:
        z = align_rows(read_matrix(z_path, "samples_by_covariates"), ym.col_ids, "z")
    return ObservedData(y=ym.values, x=x, z=z, feature_ids=ym.row_ids, sample_ids=ym.col_ids,
                        covariate_names=xm.col_ids)


def effect_columns(res: FitResult, methods) -> tuple:
    order = [PRIMARY] + [m for m in methods if m != PRIMARY] if PRIMARY in methods else list(methods)
    names, blocks = [], []
    covs = res.partition.covariate_names
    for m in order:
        table = res.tables[m]
        prefix = "" if m == PRIMARY else f"{m}:"
        for label, attr in TABLE_FIELDS:
            names += [f"{prefix}{label}.{c}" for c in covs]
            blocks.append(getattr(table, attr))
    return names, np.hstack(blocks)


def _floats(a) -> list:
    return [None if not math.isfinite(v) else float(v) for v in np.asarray(a, dtype=float).ravel()]


def summary_dict(res: FitResult, n_samples: int, methods, fdr_method: str) -> dict:
    part, fac, om, ct = res.partition, res.factors, res.omega, res.confounding
    covs = list(part.covariate_names)
    return {
        "schema_version": SCHEMA_VERSION,
        "n": int(n_samples),
        "n_effective": int(part.n_eff),
        "p": int(part.p),
        "d": int(part.d),
        "k": int(res.k),
        "covariates": covs,
        "methods": list(methods),
        "fdr_method": fdr_method,
        "lambda_hat": _floats(fac.lambda_hat),
        "rho_hat": float(fac.rho_hat),
        "shrink_correction": _floats(om.shrink_correction),
        "clamped": [bool(c) for c in om.clamped],
        "omega_naive": [_floats(r) for r in om.omega_naive],
        "omega_bias_corrected": [_floats(r) for r in om.omega_bc],
        "confounding_test": {
            "dof": int(ct.dof),
            "calibration": ct.calibration,
            "per_covariate": {c: {"chi2": float(ct.per_covariate_chi2[j]), "p_value": float(ct.p_values[j])}
                              for j, c in enumerate(covs)},
            "wishart_matrix": [_floats(r) for r in ct.statistic],
        },
        "degenerate_features": int(sum(int(t.degenerate.sum()) for t in res.tables.values())),
    }


def cmd_adjust(args) -> int:
    if args.ols:
        k, methods = 0, ["unadjusted"]
    else:
        k = args.k
        methods = args.methods
    data = load_data(args.y, args.x, args.z, args.transpose)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(data, k, methods=methods, clamp_eps=args.clamp_eps, fdr_method=args.fdr_method)
    for w in caught:
        log.warning("%s", w.message)
    names, values = effect_columns(res, methods)
    write_matrix(args.out, values, res.partition.feature_ids, names, corner="feature_id")
    summary = summary_dict(res, data.n, methods, args.fdr_method)
    summary["warnings"] = [str(w.message) for w in caught]
    Path(args.summary).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

RUN_KEYS = {"reps": int, "k_fit": int, "fdr_method": str, "clamp_eps": float,
            "methods": "list", "nominal_levels": "floats", "write_data": "bool"}


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {v!r}")


def _convert(key: str, value: str, kind):
    try:
        if kind == "list":
            return [s.strip() for s in value.split(",") if s.strip()]
        if kind == "floats":
            return tuple(float(s) for s in value.split(",") if s.strip())
        if kind == "bool":
            return _parse_bool(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value
    except ValueError:
        raise InputError(f"config key {key!r}: cannot parse {value!r}") from None


def simulation_settings(raw: dict) -> tuple:
    """Split a key=value mapping into a SimulationConfig and run options."""
    kinds = {}
    for f in fields(SimulationConfig):
        if f.name in ("omega_custom", "lambdas"):
            kinds[f.name] = "floats"
        elif f.name in ("n", "p", "k", "d", "seed"):
            kinds[f.name] = int
        elif f.name == "omega_scenario":
            kinds[f.name] = str
        else:
            kinds[f.name] = float
    unknown = sorted(set(raw) - set(kinds) - set(RUN_KEYS))
    if unknown:
        raise InputError(f"unknown config keys: {unknown}")
    sim = {k: _convert(k, v, kinds[k]) for k, v in raw.items() if k in kinds}
    run = {k: _convert(k, v, RUN_KEYS[k]) for k, v in raw.items() if k in RUN_KEYS}
    return sim, run


def write_dataset(out: Path, data: ObservedData, truth) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "y.tsv", data.y, data.feature_ids, data.sample_ids, corner="feature_id")
    write_matrix(out / "x.tsv", data.x, data.sample_ids, data.covariate_names, corner="sample_id")
    write_matrix(out / "z.tsv", data.z, data.sample_ids, ["intercept"], corner="sample_id")
    write_matrix(out / "beta_true.tsv", truth.b_true, data.feature_ids, data.covariate_names,
                 corner="feature_id")


def cmd_simulate(args) -> int:
    sim, run = simulation_settings(read_config(args.config))
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.reps is not None:
        run["reps"] = args.reps
    write_data = args.write_data or run.pop("write_data", False)
    cfg = SimulationConfig(**sim)
    out = Path(args.out)
    reps = run.pop("reps", 1)
    methods = run.pop("methods", ["adjusted_uncorrected", PRIMARY])
    levels = run.pop("nominal_levels", (0.05, 0.1, 0.2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_experiment(cfg, methods, reps, levels, n_jobs=args.threads or 1, out_dir=out, **run)
    if write_data:
        for rep in range(reps):
            data, truth = generate_scenario(cfg, rep)
            write_dataset(out / f"data_{rep:03d}", data, truth)
    summary = report.summary()
    for method in report.methods:
        shown = ", ".join(f"{key}={v['mean']:.4g}" for key, v in sorted(summary[method].items())
                          if v["mean"] is not None)
        print(f"{method}: {shown}")
    print(f"{len(report.per_rep)} of {reps} replicates succeeded; report in {out / 'summary.json'}")
    return 0


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    results = run_suite(args.suite, seed=args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 0 if failed == 0 else 1


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _methods(value: str) -> list:
    items = [s.strip() for s in value.split(",") if s.strip()]
    bad = [m for m in items if m not in CLI_METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"methods must be a comma list from {list(CLI_METHODS)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentadj",
                                     description="Latent-confounder adjusted effect estimation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("adjust", help="estimate adjusted effects for a data matrix")
    a.add_argument("--config", help="key=value file; flags override it")
    a.add_argument("--y", help="features x samples matrix (.tsv/.csv)")
    a.add_argument("--x", help="samples x covariates design of interest")
    a.add_argument("--z", help="samples x nuisance covariates (e.g. an intercept column)")
    a.add_argument("--k", type=int, help="number of latent factors (>= 1)")
    a.add_argument("--ols", action="store_true", help="plain OLS without latent factors")
    a.add_argument("--fdr-method", choices=("bh", "storey"), default="storey")
    a.add_argument("--clamp-eps", type=float, default=0.05)
    a.add_argument("--methods", type=_methods, default=[PRIMARY],
                   help=f"comma list from {','.join(CLI_METHODS)}")
    a.add_argument("--transpose", action="store_true", help="y is stored samples x features")
    a.add_argument("--out", help="per-feature result TSV")
    a.add_argument("--summary", help="JSON summary path")
    a.add_argument("--threads", type=int, default=None, help="cap on BLAS threads")
    a.set_defaults(func=cmd_adjust)

    s = sub.add_parser("simulate", help="run the simulation experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=None, help="parallel replicates")
    s.add_argument("--write-data", action="store_true", help="also write each dataset as TSV")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run a calibration suite")
    v.add_argument("--suite", required=True, choices=sorted(SUITES) + ["all"])
    v.add_argument("--seed", type=int, default=1)
    v.set_defaults(func=cmd_validate)
    return parser


ADJUST_CONFIG = {"y": str, "x": str, "z": str, "k": int, "fdr_method": str, "clamp_eps": float,
                 "methods": "methods", "out": str, "summary": str, "threads": int, "transpose": "bool",
                 "ols": "bool"}


def _apply_adjust_config(args, argv) -> None:
    raw = read_config(args.config)
    unknown = sorted(set(raw) - set(ADJUST_CONFIG))
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")
    given = {tok.split("=", 1)[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, value in raw.items():
        if key in given:
            continue
        kind = ADJUST_CONFIG[key]
        if kind == "methods":
            try:
                conv = _methods(value)
            except argparse.ArgumentTypeError as err:
                raise UsageError(str(err)) from None
        else:
            conv = _convert(key, value, kind)
        setattr(args, key, conv)


def _check_adjust(args) -> None:
    for name in ("y", "x", "out", "summary"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required")
    if args.fdr_method not in ("bh", "storey"):
        raise UsageError("--fdr-method must be bh or storey")
    if args.ols:
        return
    if args.k is None:
        raise UsageError("--k is required (or --ols for plain regression)")
    if args.k < 1:
        raise UsageError("--k must be at least 1; use --ols for an unadjusted fit")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "adjust":
            if args.config:
                _apply_adjust_config(args, argv)
            _check_adjust(args)
    except (UsageError, InputError) as err:
        parser.error(str(err))
    try:
        with threadpool_limits(limits=getattr(args, "threads", None) if args.command == "adjust" else None):
            return args.func(args)
    except LatentAdjError as err:
        print(json.dumps(err.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    except OSError as err:
        print(json.dumps({"error": "io_error", "message": str(err)}, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
