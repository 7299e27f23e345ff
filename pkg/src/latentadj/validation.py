"""Calibration suites: each runs a Monte Carlo or exhaustive check and reports
measured values against fixed thresholds.

Suites are plain functions returning :class:`CriterionResult` lists so the
CLI ``validate`` command and the test suite run the same code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .design import ObservedData, orthonormal_complement, partition, remove_nuisance
from .factors import estimate_factors, procrustes_rotation
from .fdr import bh_adjust
from .inference import confounding_test
from .omega import bias_corrected_omega, naive_omega, theoretical_shrinkage
from .simulation import SimulationConfig, generate_scenario, run_experiment, standardize_truth

DEFAULT_SEED = 1
SCENARIO_REPS = 20
LOADING_CHECK_LAMBDAS = (24.0, 16.0, 10.0)
SCENARIO_METHODS = ("adjusted_uncorrected", "adjusted_bias_corrected", "oracle")


@dataclass
class CriterionResult:
    criterion: str
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    requirement: str = ""

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.criterion}] {self.name}: {vals}  ({self.requirement})"


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        return f"{v:.4g}"
    return str(v)


def _fit_factors(data: ObservedData, k: int):
    part = partition(remove_nuisance(data))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fac = estimate_factors(part.y2, k)
    return part, fac


# -- criterion 1 -----------------------------------------------------------

def suite_prop1(seed: int = DEFAULT_SEED, reps: int = 200) -> list:
    """Attenuation of the naive Omega estimate with B = 0 and equal eigenvalues."""
    lam, rho = 5.0, 1.0
    cfg = SimulationConfig(n=100, p=5000, k=3, lambdas=(lam,) * 3, beta_nonzero_prob=0.0,
                           omega_scenario="custom", omega_custom=(1.0, 1.0, 1.0),
                           sigma2_mean=rho, seed=seed)
    ratios = []
    for rep in range(reps):
        data, truth = generate_scenario(cfg, rep)
        part, fac = _fit_factors(data, cfg.k)
        # tied eigenvalues: compare in the unrotated standardized frame
        std = standardize_truth(truth.l_bar, truth.c_bar, data.x, data.z, rotate=False)
        rot = procrustes_rotation(fac.l_hat, std.l)
        ratios.append((naive_omega(part.y1, fac.l_hat) @ rot)[0] / std.omega_ols[0])
    mean_ratio = np.mean(ratios, axis=0)
    target = float(theoretical_shrinkage(lam, rho))
    rel = np.abs(mean_ratio / target - 1)
    return [CriterionResult(
        "C1", "naive Omega shrinkage", bool(np.all(rel <= 0.05)),
        {"mean_ratio": mean_ratio, "target": target, "max_rel_err": float(rel.max()), "reps": reps},
        "each component within 5% of lambda/(lambda+rho)")]


# -- criterion 2 -----------------------------------------------------------

def suite_lemma1(seed: int = DEFAULT_SEED, reps: int = 10, features_per_rep: int = 1000) -> list:
    """Per-feature loading errors scaled by sqrt(n)/sigma_hat are standard normal.

    The eigenvalues are chosen so that n^{3/2} / (p lambda_K) is small; with a
    weak factor (lambda near 1 at p = 5000) the weakest loading column is
    visibly shrunk and the scaled error is far from unit variance.
    """
    cfg = SimulationConfig(n=100, p=5000, k=3, lambdas=LOADING_CHECK_LAMBDAS, omega_scenario="null", seed=seed)
    draws = []
    for rep in range(reps):
        data, truth = generate_scenario(cfg, rep)
        _, fac = _fit_factors(data, cfg.k)
        std = truth.standardized
        aligned = fac.l_hat @ procrustes_rotation(fac.l_hat, std.l)
        rng = np.random.default_rng([seed, rep])
        pick = rng.choice(cfg.p, size=features_per_rep, replace=False)
        z = np.sqrt(cfg.n) * (aligned[pick] - std.l[pick]) / np.sqrt(fac.sigma2_hat[pick])[:, None]
        draws.append(z)
    z = np.vstack(draws)
    means = z.mean(axis=0)
    sds = z.std(axis=0, ddof=1)
    ks = np.array([stats.kstest(z[:, k], "norm").statistic for k in range(cfg.k)])
    ok = bool(np.all(np.abs(means) <= 0.05) and np.all((sds >= 0.9) & (sds <= 1.1)) and np.all(ks <= 0.05))
    return [CriterionResult(
        "C2", "loading normality", ok,
        {"mean": means, "sd": sds, "ks": ks, "draws_per_coord": z.shape[0]},
        "|mean|<=0.05, sd in [0.9,1.1], KS<=0.05 per coordinate")]


# -- criterion 3 -----------------------------------------------------------

def suite_rho(seed: int = DEFAULT_SEED, reps: int = 50) -> list:
    cfg = SimulationConfig(seed=seed)
    rho = cfg.sigma2_mean
    errs = []
    for rep in range(reps):
        data, _ = generate_scenario(cfg, rep)
        _, fac = _fit_factors(data, cfg.k)
        errs.append(abs(fac.rho_hat - rho))
    med = float(np.median(errs))
    bound = 0.1 / np.sqrt(cfg.n)
    return [CriterionResult("C3", "rho noise level", med <= bound,
                            {"median_abs_err": med, "max_abs_err": float(np.max(errs)), "reps": reps},
                            f"median |rho_hat - rho| <= {bound:g}")]


# -- criteria 4, 5, 7, 8 (shared experiments) -----------------------------

_EXPERIMENTS: dict = {}


def scenario_experiment(scenario: str, k_fit: int = 10, seed: int = DEFAULT_SEED, reps: int = SCENARIO_REPS,
                        p: int = 20_000):
    key = (scenario, k_fit, seed, reps, p)
    if key not in _EXPERIMENTS:
        cfg = SimulationConfig(p=p, omega_scenario=scenario, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _EXPERIMENTS[key] = run_experiment(cfg, SCENARIO_METHODS, reps, (0.1,), k_fit=k_fit)
    return _EXPERIMENTS[key]


def _pooled_rmse(report, method) -> float:
    return float(np.sqrt(np.mean(report.metric(method, "rmse") ** 2)))


def suite_coverage(seed: int = DEFAULT_SEED) -> list:
    out = []
    for scenario in ("omega1", "omega2"):
        rep = scenario_experiment(scenario, seed=seed)
        cov = float(rep.metric("adjusted_bias_corrected", "coverage").mean())
        n_feat = len(rep.per_rep) * rep.config["p"]
        out.append(CriterionResult(
            "C4", f"coverage {scenario}", 0.935 <= cov <= 0.965,
            {"coverage": cov, "oracle_coverage": float(rep.metric("oracle", "coverage").mean()),
             "features": n_feat}, "95% CI coverage in [0.935, 0.965]"))
    return out


def _fdp_checks(k_fit: int, seed: int, criterion: str, include_comparator: bool) -> list:
    out = []
    for scenario in ("omega1", "omega2"):
        rep = scenario_experiment(scenario, k_fit=k_fit, seed=seed)
        f = {m: float(rep.metric(m, "fdp@0.1").mean()) for m in SCENARIO_METHODS}
        bc, orc, unc = f["adjusted_bias_corrected"], f["oracle"], f["adjusted_uncorrected"]
        tag = f"{scenario}, K={k_fit}"
        out.append(CriterionResult(criterion, f"bias-corrected FDP {tag}", bc <= 0.15,
                                   {"mean_fdp": bc}, "mean FDP at q=0.1 <= 0.15"))
        if not include_comparator:
            continue
        out.append(CriterionResult(criterion, f"oracle FDP {tag}", orc <= 0.15,
                                   {"mean_fdp": orc}, "mean FDP at q=0.1 <= 0.15"))
        need = 0.20 if scenario == "omega2" else max(0.10, 1.5 * bc)
        out.append(CriterionResult(criterion, f"uncorrected FDP {tag}", unc >= need,
                                   {"mean_fdp": unc, "required": need},
                                   "omega2: >= 0.20; omega1: >= max(0.10, 1.5 x bias-corrected)"))
    return out


def suite_fig1(seed: int = DEFAULT_SEED) -> list:
    return _fdp_checks(10, seed, "C5", include_comparator=True)


def suite_koverspec(seed: int = DEFAULT_SEED) -> list:
    return _fdp_checks(12, seed, "C7", include_comparator=False)


def suite_rmse(seed: int = DEFAULT_SEED) -> list:
    out = []
    for scenario in ("omega1", "omega2"):
        rep = scenario_experiment(scenario, seed=seed)
        bc, orc = _pooled_rmse(rep, "adjusted_bias_corrected"), _pooled_rmse(rep, "oracle")
        out.append(CriterionResult("C8", f"oracle-equivalence RMSE {scenario}", bc <= 1.25 * orc,
                                   {"rmse_bc": bc, "rmse_oracle": orc, "ratio": bc / orc},
                                   "RMSE(bias-corrected) <= 1.25 x RMSE(oracle)"))
    return out


# -- criterion 6 -----------------------------------------------------------

def chi2_null_statistics(seed: int = DEFAULT_SEED, reps: int = 1000, p: int = 20_000) -> tuple:
    """Per-replicate confounding statistics and p-values with no confounding."""
    cfg = SimulationConfig(p=p, omega_scenario="null", seed=seed)
    stat, pval = np.empty(reps), np.empty(reps)
    for rep in range(reps):
        data, _ = generate_scenario(cfg, rep)
        part, fac = _fit_factors(data, cfg.k)
        om = bias_corrected_omega(naive_omega(part.y1, fac.l_hat), fac.lambda_hat, fac.rho_hat)
        ct = confounding_test(om, part.xtx, part.n_eff - part.d)
        stat[rep], pval[rep] = ct.per_covariate_chi2[0], ct.p_values[0]
    return stat, pval


def suite_chi2null(seed: int = DEFAULT_SEED, reps: int = 1000) -> list:
    stat, pvals = chi2_null_statistics(seed, reps)
    k = SimulationConfig().k
    rate = float(np.mean(pvals <= 0.05))
    ks = float(stats.kstest(stat, "chi2", args=(k,)).statistic)
    return [
        CriterionResult("C6", "confounding test size", 0.03 <= rate <= 0.07,
                        {"rejection_rate": rate, "reps": reps}, "rate at alpha=0.05 in [0.03, 0.07]"),
        CriterionResult("C6", "confounding test null law", ks <= 0.05,
                        {"ks": ks, "mean_stat": float(stat.mean())}, f"KS to chi2_{k} <= 0.05"),
    ]


# -- criterion 9 -----------------------------------------------------------

def brute_force_bh(p: np.ndarray) -> np.ndarray:
    """q_i = min over every p-value p_j >= p_i of m p_j / rank_j, by enumeration."""
    m = p.size
    order = sorted(range(m), key=lambda i: (p[i], i))
    rank = {idx: r + 1 for r, idx in enumerate(order)}
    q = np.empty(m)
    for i in range(m):
        cands = [m * p[j] / rank[j] for j in range(m) if rank[j] >= rank[i]]
        q[i] = min(1.0, min(cands))
    return q


def suite_oracles(seed: int = DEFAULT_SEED, cases: int = 1000) -> list:
    rng = np.random.default_rng(seed)
    bh_bad = 0
    for case in range(cases):
        m = int(rng.integers(1, 13))
        p = rng.random(m)
        if case % 4 == 0:
            p = np.round(p, 1)  # exercise ties
        if not np.array_equal(bh_adjust(p).q_values, brute_force_bh(p)):
            bh_bad += 1

    gram_err = 0.0
    for _ in range(cases):
        pp = int(rng.integers(3, 51))
        m = int(rng.integers(2, 30))
        k = int(rng.integers(1, min(pp, m)))
        y2 = rng.standard_normal((pp, m))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fac = estimate_factors(y2, k)
        w, v = np.linalg.eigh(y2 @ y2.T / m)
        top = v[:, np.argsort(w)[::-1][:k]] * np.sqrt(np.sort(w)[::-1][:k])
        sign = np.sign(np.sum(top * fac.l_hat, axis=0))
        scale = max(1.0, np.abs(fac.l_hat).max())
        gram_err = max(gram_err, float(np.abs(top * sign - fac.l_hat).max() / scale))

    part_err = 0.0
    for _ in range(cases):
        n = int(rng.integers(3, 40))
        d = int(rng.integers(1, n))
        pp = int(rng.integers(1, 30))
        x = rng.standard_normal((n, d))
        y = rng.standard_normal((pp, n))
        a = orthonormal_complement(x)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                part = partition(ObservedData(y=y, x=x), a_basis=a)
            except Exception:  # ill-conditioned draw; the guard is tested elsewhere
                continue
        recon = part.y1 @ x.T + part.y2 @ a.T
        part_err = max(part_err,
                       float(np.linalg.norm(a.T @ a - np.eye(n - d), 2)),
                       float(np.linalg.norm(x.T @ a, 2) / max(1.0, np.linalg.norm(x, 2))),
                       float(np.linalg.norm(recon - y) / np.linalg.norm(y)))
    return [
        CriterionResult("C9", "BH vs brute force", bh_bad == 0, {"mismatches": bh_bad, "cases": cases},
                        "exact equality, m <= 12"),
        CriterionResult("C9", "Gram route vs direct", gram_err <= 1e-8, {"max_err": gram_err},
                        "loadings agree to 1e-8 up to sign, p <= 50"),
        CriterionResult("C9", "partition invariants", part_err <= 1e-10, {"max_err": part_err},
                        "A'A=I, X'A=0, reconstruction to 1e-10"),
    ]


SUITES = {
    "prop1": suite_prop1,
    "lemma1": suite_lemma1,
    "rho": suite_rho,
    "coverage": suite_coverage,
    "fig1": suite_fig1,
    "chi2null": suite_chi2null,
    "koverspec": suite_koverspec,
    "rmse": suite_rmse,
    "oracles": suite_oracles,
}


def run_suite(name: str, seed: int = DEFAULT_SEED) -> list:
    if name == "all":
        return [r for suite in SUITES.values() for r in suite(seed=seed)]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed=seed)
