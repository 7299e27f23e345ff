"""End-to-end fit: partition, factors, Omega, effect tables, q-values."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .design import ObservedData, Partition, partition, remove_nuisance
from .errors import InputError
from .factors import FactorEstimate, estimate_factors, no_factors
from .fdr import adjust
from .inference import (
    METHODS,
    ConfoundingTest,
    EffectTable,
    confounding_test,
    effects_adjusted_uncorrected,
    effects_bias_corrected,
    oracle_fit,
    unadjusted_from_partition,
)
from .omega import DEFAULT_CLAMP_EPS, OmegaEstimate, bias_corrected_omega, naive_omega


@dataclass(frozen=True)
class FitResult:
    partition: Partition
    factors: FactorEstimate
    omega: OmegaEstimate
    confounding: ConfoundingTest
    tables: dict
    k: int

    @property
    def primary(self) -> EffectTable:
        return self.tables["adjusted_bias_corrected"]


def qvalues(table: EffectTable, method: str = "storey", lam: float = 0.5) -> np.ndarray:
    """Column-wise q-values (one multiple-testing family per covariate)."""
    return np.column_stack([adjust(table.p_value[:, j], method, lam).q_values
                            for j in range(table.p_value.shape[1])])


def fit(data: ObservedData, k: int, *, methods: Sequence[str] = ("adjusted_bias_corrected",),
        clamp_eps: float = DEFAULT_CLAMP_EPS, fdr_method: str = "storey", storey_lambda: float = 0.5,
        c_true=None, a_basis: Optional[np.ndarray] = None) -> FitResult:
    """Estimate covariate effects with ``k`` latent factors.

    ``c_true`` (n x K latent covariates in sample coordinates) is needed only
    for the ``oracle`` method.  ``k = 0`` skips factor estimation entirely.
    """
    methods = list(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise InputError(f"unknown methods {bad}; choose from {list(METHODS)}")
    if "oracle" in methods and c_true is None:
        raise InputError("the oracle method needs the true latent covariates")
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise InputError(f"k must be a non-negative integer, got {k!r}")

    rotated = remove_nuisance(data)
    part = partition(rotated, a_basis)
    fac = estimate_factors(part.y2, int(k)) if k > 0 else no_factors(part.y2)
    om = bias_corrected_omega(naive_omega(part.y1, fac.l_hat), fac.lambda_hat, fac.rho_hat, clamp_eps)

    tables = {}
    for m in methods:
        if m == "unadjusted":
            t = unadjusted_from_partition(part)
        elif m == "adjusted_uncorrected":
            t = effects_adjusted_uncorrected(part, fac, om)
        elif m == "adjusted_bias_corrected":
            t = effects_bias_corrected(part, fac, om)
        else:
            t = oracle_fit(data, c_true, part=part).table
        tables[m] = t.with_q(qvalues(t, fdr_method, storey_lambda))
    test = confounding_test(om, part.xtx, part.n_eff - part.d)
    return FitResult(partition=part, factors=fac, omega=om, confounding=test, tables=tables, k=int(k))
