"""Per-feature effect estimates and tests for the four estimators.

All four share the same shape: beta_g = y1_g - Omega l_g with variance

    sigma2_g * ( [(X'X)^{-1}]_jj + [Omega Omega']_jj / n )

and differ only in where Omega and l_g come from (nothing for the
unadjusted fit, the attenuated or corrected regression on L_hat for the two
adjusted fits, the true latent covariates for the oracle).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .design import ObservedData, Partition, nuisance_basis, partition, remove_nuisance
from .errors import InputError, RankDeficientError
from .factors import FactorEstimate, residual_variances
from .omega import OmegaEstimate

METHODS = ("unadjusted", "adjusted_uncorrected", "adjusted_bias_corrected", "oracle")
_PSI_COND_LIMIT = 1e12
_PSI_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class EffectTable:
    method: str
    beta_hat: np.ndarray
    se: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    dof: int
    degenerate: np.ndarray
    feature_ids: Sequence[str] = field(default=(), repr=False)
    covariate_names: Sequence[str] = field(default=(), repr=False)
    q_value: Optional[np.ndarray] = field(default=None, repr=False)

    def with_q(self, q_value: np.ndarray) -> "EffectTable":
        return replace(self, q_value=q_value)

    def confidence_interval(self, level: float = 0.95):
        half = stats.t.ppf(0.5 + level / 2, self.dof) * self.se
        return self.beta_hat - half, self.beta_hat + half


@dataclass(frozen=True)
class ConfoundingTest:
    statistic: np.ndarray
    per_covariate_chi2: np.ndarray
    dof: int
    p_values: np.ndarray
    calibration: str = "asymptotic"


def _table(method, beta, var, dof, part: Partition) -> EffectTable:
    se = np.sqrt(var)
    pos = se > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(pos, beta / np.where(pos, se, 1.0), np.nan)
    pval = np.where(pos, 2.0 * stats.t.sf(np.abs(t), dof), np.where(beta != 0, 0.0, 1.0))
    pval = np.clip(pval, 0.0, 1.0)
    return EffectTable(method=method, beta_hat=beta, se=se, t_stat=t, p_value=pval, dof=int(dof),
                       degenerate=~pos.all(axis=1), feature_ids=part.feature_ids,
                       covariate_names=part.covariate_names)


def _xtx_inv_diag(xtx: np.ndarray) -> np.ndarray:
    return np.diag(np.linalg.inv(xtx))


def _adjusted(method: str, part: Partition, fac: FactorEstimate, omega: np.ndarray) -> EffectTable:
    beta = part.y1 - fac.l_hat @ omega.T
    var = fac.sigma2_hat[:, None] * (
        _xtx_inv_diag(part.xtx)[None, :] + np.einsum("jk,jk->j", omega, omega)[None, :] / part.n_eff)
    return _table(method, beta, var, part.n_eff - part.d - fac.k, part)


def effects_bias_corrected(part: Partition, fac: FactorEstimate, om: OmegaEstimate) -> EffectTable:
    return _adjusted("adjusted_bias_corrected", part, fac, om.omega_bc)


def effects_adjusted_uncorrected(part: Partition, fac: FactorEstimate, om: OmegaEstimate) -> EffectTable:
    return _adjusted("adjusted_uncorrected", part, fac, om.omega_naive)


def unadjusted_from_partition(part: Partition) -> EffectTable:
    dof = part.n_eff - part.d
    sigma2 = np.einsum("ij,ij->i", part.y2, part.y2) / dof
    var = sigma2[:, None] * _xtx_inv_diag(part.xtx)[None, :]
    return _table("unadjusted", part.y1.copy(), var, dof, part)


def effects_unadjusted(data: ObservedData) -> EffectTable:
    """Ordinary least squares per feature, ignoring latent structure."""
    return unadjusted_from_partition(partition(data))


@dataclass(frozen=True)
class OracleFit:
    table: EffectTable
    omega_ols: np.ndarray
    l_ols: np.ndarray


def _inv_sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v / np.sqrt(w)) @ v.T


def oracle_fit(data: ObservedData, c_true, part: Optional[Partition] = None) -> OracleFit:
    """Least squares with the latent covariates observed.

    ``c_true`` is in the original sample coordinates (n x K); nuisance
    covariates are rotated out of it exactly as they are out of ``y``.
    """
    c = np.asarray(c_true, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    q = nuisance_basis(data)
    if q is not None:
        c = q.T @ c
        data = remove_nuisance(data)
    if part is None:
        part = partition(data)
    m = part.n_eff - part.d
    k = c.shape[1]
    c2 = part.a_basis.T @ c
    psi = c2.T @ c2 / m
    cond = np.linalg.cond(psi) if k else 1.0
    scale = np.max(np.einsum("ik,ik->k", c, c)) / m if k else 1.0
    if (not np.isfinite(cond) or cond > _PSI_COND_LIMIT
            or (k and np.linalg.eigvalsh(psi)[0] <= _PSI_REL_FLOOR * scale)):
        raise RankDeficientError("latent covariates are collinear with x: their projection onto "
                                 "the residual space is singular")
    psi_is = _inv_sqrt_psd(psi) if k else np.zeros((0, 0))
    c_std = c @ psi_is
    c2_std = c2 @ psi_is
    omega = np.linalg.solve(part.xtx, part.x.T @ c_std)
    l_ols = part.y2 @ c2_std / m
    beta = part.y1 - l_ols @ omega.T
    sigma2 = residual_variances(part.y2, c2_std / np.sqrt(m), m - k)
    var = sigma2[:, None] * (
        _xtx_inv_diag(part.xtx)[None, :] + np.einsum("jk,jk->j", omega, omega)[None, :] / part.n_eff)
    return OracleFit(table=_table("oracle", beta, var, m - k, part), omega_ols=omega, l_ols=l_ols)


def effects_oracle(data: ObservedData, c_true) -> EffectTable:
    return oracle_fit(data, c_true).table


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def confounding_test(om: OmegaEstimate, xtx, residual_dim: Optional[int] = None) -> ConfoundingTest:
    """Test of no association between the latent factors and x.

    Under the null (X'X)^{1/2} Omega_bc Omega_bc' (X'X)^{1/2} is approximately
    standard Wishart with K degrees of freedom, so each diagonal entry is
    compared with chi2_K.  When ``residual_dim`` (m = n - d) is given, the
    diagonal is rescaled by (m - K + 1)/m and referred to K * F(K, m - K + 1):
    with the factors standardised on m residual samples each row of
    (X'X)^{1/2} Omega is z Psi^{-1/2} with Psi ~ Wishart(K, m)/m, a Hotelling
    T^2 whose mean K m/(m - K - 1) noticeably exceeds K at moderate n.  Both
    references coincide as m grows.
    """
    s = _sqrt_psd(np.asarray(xtx, dtype=np.float64))
    so = s @ om.omega_bc
    w = so @ so.T
    w = (w + w.T) / 2
    diag = np.clip(np.diag(w), 0.0, None)
    k = om.k
    if not k:
        return ConfoundingTest(statistic=w, per_covariate_chi2=diag, dof=0, p_values=np.ones_like(diag))
    if residual_dim is None:
        return ConfoundingTest(statistic=w, per_covariate_chi2=diag, dof=k, p_values=stats.chi2.sf(diag, k))
    m = int(residual_dim)
    if m - k + 1 < 1:
        raise InputError(f"residual dimension {m} too small for K={k} latent factors")
    scaled = diag * (m - k + 1) / m
    pvals = stats.f.sf(scaled / k, k, m - k + 1)
    return ConfoundingTest(statistic=w, per_covariate_chi2=scaled, dof=k, p_values=pvals,
                           calibration="finite_sample")
