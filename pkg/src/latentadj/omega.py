"""Association between the latent factors and the covariates of interest.

Regressing Y1 on the estimated loadings is an errors-in-variables regression:
the estimated loadings carry noise of the same size as the weak factors'
signal, so the naive coefficients are attenuated by lambda/(lambda + rho).
The correction multiplies each column back up by lambda_hat/(lambda_hat - rho_hat).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientError

DEFAULT_CLAMP_EPS = 0.05
_GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class OmegaEstimate:
    omega_naive: np.ndarray
    shrink_correction: np.ndarray
    omega_bc: np.ndarray
    clamped: np.ndarray

    @property
    def k(self) -> int:
        return self.omega_naive.shape[1]


def naive_omega(y1, l_hat) -> np.ndarray:
    """Least-squares coefficients of each column of ``y1`` on ``l_hat`` (d x K)."""
    y1 = np.asarray(y1, dtype=np.float64)
    l_hat = np.asarray(l_hat, dtype=np.float64)
    if l_hat.shape[1] == 0:
        return np.zeros((y1.shape[1], 0))
    gram = l_hat.T @ l_hat
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _GRAM_COND_LIMIT:
        raise RankDeficientError(f"L_hat'L_hat is singular (condition number {cond:.3g})")
    return np.linalg.solve(gram, l_hat.T @ y1).T


def theoretical_shrinkage(lam, rho: float) -> np.ndarray:
    """Asymptotic attenuation lambda/(lambda + rho) of the naive estimate."""
    lam = np.asarray(lam, dtype=np.float64)
    return lam / (lam + rho)


def correction_factors(lambda_hat, rho_hat: float, clamp_eps: float = DEFAULT_CLAMP_EPS):
    """lambda_hat / max(lambda_hat - rho_hat, clamp_eps * lambda_hat) and the clamp mask."""
    if not 0.0 < clamp_eps < 1.0:
        raise ValueError(f"clamp_eps must lie in (0, 1), got {clamp_eps}")
    lam = np.asarray(lambda_hat, dtype=np.float64)
    denom = lam - rho_hat
    floor = clamp_eps * lam
    clamped = denom < floor
    return lam / np.where(clamped, floor, denom), clamped


def bias_corrected_omega(omega_naive, lambda_hat, rho_hat: float,
                         clamp_eps: float = DEFAULT_CLAMP_EPS) -> OmegaEstimate:
    omega_naive = np.asarray(omega_naive, dtype=np.float64)
    factor, clamped = correction_factors(lambda_hat, rho_hat, clamp_eps)
    return OmegaEstimate(
        omega_naive=omega_naive,
        shrink_correction=factor,
        omega_bc=omega_naive * factor[None, :],
        clamped=clamped,
    )
