"""Synthetic confounded data and the comparative experiment harness.

Data follow

    Y = B X' + L_bar C_bar' + E,    C_bar = X Omega_bar + Xi,   Xi ~ N(0, I)

with an intercept treated as a nuisance covariate, sparse Gaussian effects
and loadings, Gamma-distributed residual variances and scaled Student-t
noise.  Loading sparsity is chosen per factor so that the factor's
informativeness (n-d)/p * L'L equals the requested eigenvalue ladder.

Every random component is drawn from its own Philox stream keyed by
(seed, replicate, component), so a replicate is reproducible in isolation
and independent of how replicates are scheduled.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .design import ObservedData, orthonormal_complement
from .errors import InputError, LatentAdjError
from .factors import procrustes_rotation
from .fdr import adjust, fdp
from .inference import METHODS
from .omega import DEFAULT_CLAMP_EPS

log = logging.getLogger(__name__)

OMEGA_SCENARIOS = ("omega1", "omega2", "null", "custom")
_STREAMS = {"b": 0, "l": 1, "c": 2, "sigma2": 3, "e": 4}


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 100
    p: int = 20_000
    k: int = 10
    d: int = 1
    lambda_max_frac: float = 0.2
    lambda_min: float = 1.0
    beta_nonzero_prob: float = 0.05
    beta_sd: float = 0.4
    loading_sd: float = 0.5
    sigma2_mean: float = 1.0
    sigma2_var: float = 0.25
    noise_df: float = 4.0
    mediated_frac: float = 0.2
    omega_scenario: str = "omega2"
    omega_custom: Optional[tuple] = None
    lambdas: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta_nonzero_prob <= 1.0:
            raise InputError(f"beta_nonzero_prob must be a probability, got {self.beta_nonzero_prob}")
        if not 0.0 <= self.mediated_frac < 1.0:
            raise InputError(f"mediated_frac must lie in [0, 1), got {self.mediated_frac}")
        if self.omega_scenario not in OMEGA_SCENARIOS:
            raise InputError(f"omega_scenario must be one of {OMEGA_SCENARIOS}")
        if self.omega_scenario == "custom" and self.omega_custom is None:
            raise InputError("omega_scenario='custom' needs omega_custom")
        if self.k < 1 or self.d < 1:
            raise InputError("k and d must be positive")
        if self.n - 1 - self.d - self.k < 1:
            raise InputError(f"n={self.n} too small for d={self.d}, k={self.k} plus an intercept")
        if not self.noise_df > 2:
            raise InputError("noise_df must exceed 2 (finite variance); use inf for Gaussian noise")
        if self.sigma2_mean <= 0 or self.sigma2_var < 0:
            raise InputError("sigma2_mean must be positive and sigma2_var non-negative")
        if self.lambdas is not None and len(self.lambdas) != self.k:
            raise InputError(f"lambdas has {len(self.lambdas)} entries for k={self.k}")
        if self.omega_custom is not None:
            object.__setattr__(self, "omega_custom", tuple(float(v) for v in self.omega_custom))
        if self.lambdas is not None:
            object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    @property
    def residual_dim(self) -> int:
        """n - d after the intercept is rotated out."""
        return self.n - 1 - self.d

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(self.noise_df):
            out["noise_df"] = "inf"
        return out


def lambda_ladder(cfg: SimulationConfig) -> np.ndarray:
    """Geometric ladder from lambda_max_frac * n down to lambda_min (or cfg.lambdas)."""
    if cfg.lambdas is not None:
        return np.array(cfg.lambdas, dtype=np.float64)
    top = cfg.lambda_max_frac * cfg.n
    if cfg.k == 1:
        return np.array([top])
    frac = np.arange(cfg.k) / (cfg.k - 1)
    return top ** (1 - frac) * cfg.lambda_min ** frac


def loading_nonzero_prob(cfg: SimulationConfig, lam: Optional[np.ndarray] = None) -> np.ndarray:
    """1 - pi_k so that E(l_gk^2) = lambda_k / (n - d), i.e. (n-d)/p E(L'L) = diag(lambda)."""
    lam = lambda_ladder(cfg) if lam is None else lam
    prob = lam / (cfg.residual_dim * cfg.loading_sd ** 2)
    if np.any(prob > 1):
        raise InputError(f"eigenvalue {lam.max():g} unreachable with loading_sd={cfg.loading_sd}: "
                         f"needs non-zero probability {prob.max():.3f} > 1")
    return prob


def calibrate_omega_norm(lam, n: int, mediated_frac: float, beta_sd: float, d: int = 1) -> float:
    """Solve f = w S / (beta_sd^2 + w S) for w, with
    S = sum over the weaker half of the ladder of lambda_k / (n - 1 - d).

    Since E(l_gk^2) = lambda_k / (n - 1 - d), w S is the variance mediated
    through the factors when each of the K/2 loaded entries of Omega_bar
    equals sqrt(w); the generator uses omega = sqrt(w) so the realised
    mediated share is ``mediated_frac``.
    """
    lam = np.asarray(lam, dtype=np.float64)
    k = lam.size
    s = float(np.sum(lam[k // 2:]) / (n - 1 - d))
    if s <= 0:
        raise InputError("weak-half eigenvalue sum is zero; cannot calibrate")
    return mediated_frac / (1.0 - mediated_frac) * beta_sd ** 2 / s


def omega_bar(cfg: SimulationConfig) -> np.ndarray:
    """d x K association between the covariates and the latent factors."""
    k = cfg.k
    if cfg.omega_scenario == "null":
        row = np.zeros(k)
    elif cfg.omega_scenario == "custom":
        row = np.array(cfg.omega_custom, dtype=np.float64)
        if row.size == cfg.d * k:
            return row.reshape(cfg.d, k)
        if row.size != k:
            raise InputError(f"omega_custom needs {k} or {cfg.d * k} entries, got {row.size}")
    else:
        if k % 2:
            raise InputError(f"scenario {cfg.omega_scenario} needs an even number of factors, got {k}")
        omega = math.sqrt(calibrate_omega_norm(lambda_ladder(cfg), cfg.n, cfg.mediated_frac,
                                               cfg.beta_sd, cfg.d))
        half = np.full(k // 2, omega)
        zeros = np.zeros(k // 2)
        row = np.concatenate([half, zeros] if cfg.omega_scenario == "omega1" else [zeros, half])
    return np.tile(row, (cfg.d, 1))


def design_matrix(n: int, d: int) -> np.ndarray:
    """Indicators for groups 1..d of n samples split into d+1 balanced groups."""
    group = np.arange(n) * (d + 1) // n
    return (group[:, None] == np.arange(1, d + 1)[None, :]).astype(np.float64)


def _rng(seed: int, rep: int, stream: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(rep, _STREAMS[stream]))
    return np.random.Generator(np.random.Philox(ss))


def _t4_quantile(u: np.ndarray) -> np.ndarray:
    # closed-form t_4 inverse CDF, polished with one Newton step near the median
    a = 4.0 * u * (1.0 - u)
    sa = np.sqrt(a)
    q = np.cos(np.arccos(sa) / 3.0) / sa
    x = np.sign(u - 0.5) * 2.0 * np.sqrt(np.maximum(q - 1.0, 0.0))
    s = 1.0 + 0.25 * x * x
    cdf = 0.5 + 0.375 * x / np.sqrt(s) * (1.0 - x * x / (12.0 * s))
    # the trig form loses digits near the median; the cdf cancels in the tails
    central = np.abs(u - 0.5) < 0.25
    return np.where(central, x - (cdf - u) / (0.375 * s ** -2.5), x)


def student_t_noise(rng: np.random.Generator, shape, df: float) -> np.ndarray:
    """Unit-variance Student-t draws by inverse CDF of uniforms (Gaussian for df=inf)."""
    u = rng.random(shape)
    u[u == 0.0] = 2.0 ** -54
    if math.isinf(df):
        return special.ndtri(u)
    draws = _t4_quantile(u) if df == 4 else special.stdtrit(df, u)
    return draws / math.sqrt(df / (df - 2.0))


@dataclass(frozen=True)
class StandardizedTruth:
    l: np.ndarray
    c: np.ndarray
    omega_ols: np.ndarray
    psi_hat: np.ndarray
    lambdas: np.ndarray


@dataclass(frozen=True)
class SimulationTruth:
    b_true: np.ndarray
    l_bar: np.ndarray
    c_bar: np.ndarray
    sigma2: np.ndarray
    omega_bar: np.ndarray
    standardized: StandardizedTruth
    lambdas: np.ndarray

    @property
    def nonzero(self) -> np.ndarray:
        """Flat indices (row-major over p x d) of the non-zero effects."""
        return np.flatnonzero(self.b_true.ravel() != 0)


def _sym_pow(m: np.ndarray, power: float) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w[0] <= 0:
        raise InputError("latent covariate covariance on the residual space is singular")
    return (v * w ** power) @ v.T


def standardize_truth(l_bar, c_bar, x, z=None, rotate: bool = True) -> StandardizedTruth:
    """Rescale (L_bar, C_bar) so C2'C2/(n-d) = I and rotate so L'L is diagonal decreasing.

    ``x`` and ``c_bar`` are in sample coordinates; when ``z`` is given both are
    first rotated onto ker(z').  The returned ``c`` lives in the rotated
    coordinates.  Loading columns follow the estimator's sign convention.
    ``rotate=False`` skips the diagonalising rotation (useful when the
    eigenvalues are tied and the rotation is arbitrary).
    """
    l_bar = np.asarray(l_bar, dtype=np.float64)
    c = np.asarray(c_bar, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if z is not None:
        q = orthonormal_complement(z)
        x, c = q.T @ x, q.T @ c
    n, d = x.shape
    m = n - d
    a = orthonormal_complement(x)
    c2 = a.T @ c
    psi = c2.T @ c2 / m
    l = l_bar @ _sym_pow(psi, 0.5)
    psi_is = _sym_pow(psi, -0.5)
    c_std = c @ psi_is
    xtx = x.T @ x
    omega = np.linalg.solve(xtx, x.T @ c) @ psi_is

    if rotate:
        evals, u = np.linalg.eigh(l.T @ l)
        u = u[:, np.argsort(evals)[::-1]]
        l, c_std, omega = l @ u, c_std @ u, omega @ u
        idx = np.argmax(np.abs(l), axis=0)
        signs = np.sign(l[idx, np.arange(l.shape[1])])
        signs[signs == 0] = 1.0
        l, c_std, omega = l * signs, c_std * signs, omega * signs
    lambdas = (m / l.shape[0]) * np.einsum("gk,gk->k", l, l)
    return StandardizedTruth(l=l, c=c_std, omega_ols=omega, psi_hat=psi, lambdas=lambdas)


def generate_scenario(cfg: SimulationConfig, rep: int = 0):
    """Draw one dataset; returns (ObservedData with intercept nuisance, SimulationTruth)."""
    n, p, k, d = cfg.n, cfg.p, cfg.k, cfg.d
    lam = lambda_ladder(cfg)
    x = design_matrix(n, d)
    z = np.ones((n, 1))
    om_bar = omega_bar(cfg)

    rng = _rng(cfg.seed, rep, "b")
    b_mask = rng.random((p, d)) < cfg.beta_nonzero_prob
    b_true = np.where(b_mask, rng.standard_normal((p, d)) * cfg.beta_sd, 0.0)

    rng = _rng(cfg.seed, rep, "l")
    l_mask = rng.random((p, k)) < loading_nonzero_prob(cfg, lam)[None, :]
    l_bar = np.where(l_mask, rng.standard_normal((p, k)) * cfg.loading_sd, 0.0)

    rng = _rng(cfg.seed, rep, "c")
    c_bar = x @ om_bar + rng.standard_normal((n, k))

    rng = _rng(cfg.seed, rep, "sigma2")
    if cfg.sigma2_var == 0:
        sigma2 = np.full(p, cfg.sigma2_mean)
    else:
        shape = cfg.sigma2_mean ** 2 / cfg.sigma2_var
        sigma2 = rng.gamma(shape, cfg.sigma2_var / cfg.sigma2_mean, size=p)

    rng = _rng(cfg.seed, rep, "e")
    noise = student_t_noise(rng, (p, n), cfg.noise_df)
    noise *= np.sqrt(sigma2)[:, None]

    y = b_true @ x.T + l_bar @ c_bar.T + noise
    data = ObservedData(y=y, x=x, z=z, covariate_names=[f"group{j + 1}" for j in range(d)])
    truth = SimulationTruth(
        b_true=b_true,
        l_bar=l_bar,
        c_bar=c_bar,
        sigma2=sigma2,
        omega_bar=om_bar,
        standardized=standardize_truth(l_bar, c_bar, x, z),
        lambdas=lam,
    )
    return data, truth


# --------------------------------------------------------------------------
# experiment harness
# --------------------------------------------------------------------------

class ExperimentError(LatentAdjError):
    code = "experiment_failed"


@dataclass
class ExperimentReport:
    config: dict
    methods: list
    reps: int
    nominal_levels: list
    k_fit: int
    fdr_method: str
    per_rep: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def metric(self, method: str, name: str) -> np.ndarray:
        """Per-replicate values of a method-level metric (successful reps only)."""
        return np.array([r["methods"][method][name] for r in self.per_rep], dtype=np.float64)

    def rep_metric(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.per_rep], dtype=np.float64)

    def summary(self) -> dict:
        out = {}
        for method in self.methods:
            keys = self.per_rep[0]["methods"][method].keys() if self.per_rep else ()
            out[method] = {}
            for key in keys:
                vals = self.metric(method, key)
                out[method][key] = {"mean": _mean(vals), "sd": _sd(vals)}
        scalar = [kk for kk, v in (self.per_rep[0].items() if self.per_rep else ())
                  if isinstance(v, (int, float)) and kk != "rep"]
        out["replicate"] = {kk: {"mean": _mean(self.rep_metric(kk)), "sd": _sd(self.rep_metric(kk))}
                            for kk in scalar}
        return out

    def to_dict(self) -> dict:
        return _jsonable({
            "schema_version": "1.0",
            "config": self.config,
            "methods": self.methods,
            "reps": self.reps,
            "k_fit": self.k_fit,
            "fdr_method": self.fdr_method,
            "nominal_levels": self.nominal_levels,
            "summary": self.summary(),
            "per_rep": self.per_rep,
            "failures": self.failures,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def _mean(v: np.ndarray):
    v = v[np.isfinite(v)]
    return float(np.mean(v)) if v.size else None


def _sd(v: np.ndarray):
    v = v[np.isfinite(v)]
    return float(np.std(v, ddof=1)) if v.size > 1 else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def level_key(name: str, level: float) -> str:
    return f"{name}@{level:g}"


def method_metrics(table, truth: SimulationTruth, nominal_levels, fdr_method: str,
                   ci_level: float = 0.95) -> dict:
    """FDP, discovery counts, CI coverage, RMSE and null t spread for one method."""
    b = truth.b_true
    q = np.column_stack([adjust(table.p_value[:, j], fdr_method).q_values for j in range(b.shape[1])])
    nonzero = truth.nonzero
    out = {}
    for level in nominal_levels:
        disc = np.flatnonzero(q.ravel() <= level)
        out[level_key("fdp", level)] = fdp(disc, nonzero)
        out[level_key("discoveries", level)] = int(disc.size)
    lo, hi = table.confidence_interval(ci_level)
    cover = (lo <= b) & (b <= hi)
    null = b == 0
    out["coverage"] = float(cover.mean())
    out["coverage_null"] = float(cover[null].mean()) if null.any() else float("nan")
    out["coverage_nonnull"] = float(cover[~null].mean()) if (~null).any() else float("nan")
    out["rmse"] = float(np.sqrt(np.mean((table.beta_hat - b) ** 2)))
    t_null = table.t_stat[null]
    t_null = t_null[np.isfinite(t_null)]
    out["null_t_sd"] = float(np.std(t_null, ddof=1)) if t_null.size > 1 else float("nan")
    return out


def run_replicate(cfg: SimulationConfig, rep: int, methods: Sequence[str], nominal_levels,
                  k_fit: int, fdr_method: str = "storey", clamp_eps: float = DEFAULT_CLAMP_EPS):
    """Generate replicate ``rep`` and fit every requested method.

    Returns (metrics dict, FitResult, SimulationTruth).
    """
    from .pipeline import fit

    data, truth = generate_scenario(cfg, rep)
    res = fit(data, k_fit, methods=methods, clamp_eps=clamp_eps, fdr_method=fdr_method,
              c_true=truth.c_bar if "oracle" in methods else None)
    std = truth.standardized
    rot = procrustes_rotation(res.factors.l_hat, std.l)
    err_naive = np.linalg.norm(res.omega.omega_naive @ rot - std.omega_ols)
    err_bc = np.linalg.norm(res.omega.omega_bc @ rot - std.omega_ols)
    record = {
        "rep": rep,
        "rho_hat": res.factors.rho_hat,
        "rho_realized": float(np.mean(truth.sigma2)),
        "omega_err_naive": float(err_naive),
        "omega_err_bc": float(err_bc),
        "omega_ols_norm": float(np.linalg.norm(std.omega_ols)),
        "confounding_stat": float(res.confounding.per_covariate_chi2[0]),
        "confounding_p": float(res.confounding.p_values[0]),
        "n_clamped": int(np.count_nonzero(res.omega.clamped)),
        "lambda_hat": res.factors.lambda_hat.tolist(),
        "lambda_true": std.lambdas.tolist(),
        "shrink_correction": res.omega.shrink_correction.tolist(),
        "methods": {m: method_metrics(res.tables[m], truth, nominal_levels, fdr_method)
                    for m in methods},
    }
    return record, res, truth


def write_rep_table(path: Path, res, truth: SimulationTruth, methods: Sequence[str]) -> None:
    from .io import format_float

    b = truth.b_true
    covs = list(res.partition.covariate_names)
    suffix = (lambda j: "") if len(covs) == 1 else (lambda j: f"_{covs[j]}")
    header = ["feature_id"] + [f"b_true{suffix(j)}" for j in range(len(covs))]
    cols = [[b[:, j]] for j in range(len(covs))]
    blocks = []
    for m in methods:
        t = res.tables[m]
        for j in range(len(covs)):
            header += [f"{m}_{name}{suffix(j)}" for name in ("beta", "se", "p", "q")]
            blocks.append([t.beta_hat[:, j], t.se[:, j], t.p_value[:, j], t.q_value[:, j]])
    columns = [c for group in cols for c in group] + [c for blk in blocks for c in blk]
    mat = np.column_stack(columns)
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for fid, row in zip(res.partition.feature_ids, mat):
            fh.write(fid + "\t" + "\t".join(format_float(v) for v in row) + "\n")


def run_experiment(cfg: SimulationConfig, methods: Sequence[str], reps: int,
                   nominal_levels: Sequence[float] = (0.05, 0.1, 0.2), *,
                   k_fit: Optional[int] = None, fdr_method: str = "storey",
                   clamp_eps: float = DEFAULT_CLAMP_EPS, n_jobs: int = 1,
                   out_dir: Optional[Path] = None, max_fail_frac: float = 0.2) -> ExperimentReport:
    """Run ``reps`` replicates of the full pipeline for every method.

    Replicate failures are recorded with their index; the run aborts only
    when more than ``max_fail_frac`` of replicates fail.
    """
    if reps < 1:
        raise InputError("reps must be at least 1")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InputError(f"unknown methods {sorted(unknown)}")
    k_fit = cfg.k if k_fit is None else int(k_fit)
    levels = [float(v) for v in nominal_levels]
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def one(rep):
        try:
            record, res, truth = run_replicate(cfg, rep, methods, levels, k_fit, fdr_method, clamp_eps)
        except (LatentAdjError, np.linalg.LinAlgError) as err:
            log.warning("replicate %d failed: %s", rep, err)
            return None, {"rep": rep, "error": type(err).__name__, "message": str(err)}
        if out_dir is not None:
            write_rep_table(out_dir / f"rep_{rep:03d}.tsv", res, truth, methods)
        return record, None

    if n_jobs == 1:
        results = [one(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, range(reps)))

    report = ExperimentReport(config=cfg.to_dict(), methods=list(methods), reps=reps,
                              nominal_levels=levels, k_fit=k_fit, fdr_method=fdr_method)
    for record, failure in results:
        if record is not None:
            report.per_rep.append(record)
        else:
            report.failures.append(failure)
    if len(report.failures) > max_fail_frac * reps:
        idx = [f["rep"] for f in report.failures]
        raise ExperimentError(f"{len(idx)} of {reps} replicates failed (reps {idx}); "
                              f"first error: {report.failures[0]['message']}")
    if out_dir is not None:
        (out_dir / "summary.json").write_text(report.to_json() + "\n")
    return report
