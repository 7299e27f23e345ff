"""Latent factor estimation from the residual-space data Y2.

The top-K eigenpairs of the (n-d) x (n-d) Gram matrix Y2'Y2/(n-d) give
everything needed; the p x p covariance is never formed.  With V the top-K
unit eigenvectors and gamma^2 their eigenvalues:

    L_hat   = Y2 V / sqrt(n-d)          (so L_hat'L_hat = diag(gamma^2))
    C2_hat  = sqrt(n-d) V               (so C2_hat'C2_hat/(n-d) = I)
    lambda  = (n-d)/p * gamma^2
    sigma2  = |y2_g - P_{C2_hat} y2_g|^2 / (n-d-K)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InputError

TIE_RTOL = 1e-10
MIN_RESIDUAL_DOF = 10


@dataclass(frozen=True)
class FactorEstimate:
    l_hat: np.ndarray
    lambda_hat: np.ndarray
    c2_hat: np.ndarray
    sigma2_hat: np.ndarray
    rho_hat: float
    k: int

    @property
    def gamma2(self) -> np.ndarray:
        """Eigenvalues of Y2'Y2/(n-d) for the retained factors."""
        return np.einsum("gk,gk->k", self.l_hat, self.l_hat)


def _sign_fix(l_hat: np.ndarray) -> np.ndarray:
    """+1/-1 per column so that each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(l_hat), axis=0)
    signs = np.sign(l_hat[idx, np.arange(l_hat.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def residual_variances(y2: np.ndarray, basis: np.ndarray, dof: int) -> np.ndarray:
    """Row-wise |y2_g - y2_g U U'|^2 / dof for an orthonormal-column ``basis`` U."""
    resid = y2 - (y2 @ basis) @ basis.T
    return np.einsum("ij,ij->i", resid, resid) / dof


def estimate_factors(y2, k: int) -> FactorEstimate:
    """Truncated eigendecomposition estimate of loadings, factors and noise levels."""
    y2 = np.asarray(y2, dtype=np.float64)
    p, m = y2.shape
    if not isinstance(k, (int, np.integer)) or k < 1 or m - k < 1:
        raise InputError(f"k={k} out of range: need 1 <= k <= n-d-1 = {m - 1}")
    if not np.any(y2):
        raise DegenerateDataError("Y2 is identically zero; there is no residual variation to factor")
    if m - k < MIN_RESIDUAL_DOF:
        warnings.warn(f"only n-d-k = {m - k} residual degrees of freedom; "
                      "variance estimates will be noisy", stacklevel=2)

    gram = (y2.T @ y2) / m
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]

    gamma2 = evals[:k]
    if gamma2[-1] <= TIE_RTOL * gamma2[0]:
        raise DegenerateDataError(
            f"Y2 has numerical rank below k={k}: eigenvalue {k} is {gamma2[-1]:.3g}")
    if k < m and evals[k - 1] - evals[k] < TIE_RTOL * evals[k - 1]:
        warnings.warn(f"eigenvalues {k} and {k + 1} are tied; the split of the tied block "
                      "is arbitrary (effect estimates are unaffected)", stacklevel=2)

    v = evecs[:, :k]
    l_hat = y2 @ v / np.sqrt(m)
    signs = _sign_fix(l_hat)
    l_hat = l_hat * signs
    v = v * signs

    c2_hat = np.sqrt(m) * v
    sigma2 = residual_variances(y2, v, m - k)
    return FactorEstimate(
        l_hat=l_hat,
        lambda_hat=(m / p) * gamma2,
        c2_hat=c2_hat,
        sigma2_hat=sigma2,
        rho_hat=float(np.mean(sigma2)),
        k=int(k),
    )


def no_factors(y2) -> FactorEstimate:
    """The K = 0 estimate: no loadings, plain residual variances."""
    y2 = np.asarray(y2, dtype=np.float64)
    p, m = y2.shape
    sigma2 = np.einsum("ij,ij->i", y2, y2) / m
    return FactorEstimate(l_hat=np.zeros((p, 0)), lambda_hat=np.zeros(0), c2_hat=np.zeros((m, 0)),
                          sigma2_hat=sigma2, rho_hat=float(np.mean(sigma2)), k=0)


def spike_debias(lambda_hat, rho_hat: float) -> np.ndarray:
    """Remove the noise-floor inflation from sample spike eigenvalues.

    A sample spike concentrates near lambda + rho, so lambda_hat - rho_hat
    estimates the signal eigenvalue.  Non-positive results are returned as is.
    """
    return np.asarray(lambda_hat, dtype=np.float64) - float(rho_hat)


def procrustes_rotation(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Orthogonal R (k_src x k_tgt, orthonormal columns) minimising |source R - target|_F.

    Used only to line estimated factors up with simulated truth.
    """
    u, _, vt = np.linalg.svd(source.T @ target, full_matrices=False)
    return u @ vt
