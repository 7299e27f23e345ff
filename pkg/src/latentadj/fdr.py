"""Benjamini-Hochberg and single-lambda Storey q-values, plus realised FDP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FdrResult:
    q_values: np.ndarray
    pi0_hat: float
    method: str

    def discoveries(self, level: float) -> np.ndarray:
        return np.flatnonzero(self.q_values <= level)


def _check(p_values) -> np.ndarray:
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("no p-values supplied")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must be finite and lie in [0, 1]")
    return p


def _step_up(p: np.ndarray) -> np.ndarray:
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def bh_adjust(p_values) -> FdrResult:
    return FdrResult(q_values=_step_up(_check(p_values)), pi0_hat=1.0, method="bh")


def storey_pi0(p_values, lam: float = 0.5) -> float:
    """#{p > lam} / (m (1 - lam)), clamped to [1/m, 1]."""
    p = _check(p_values)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    m = p.size
    pi0 = np.count_nonzero(p > lam) / (m * (1.0 - lam))
    return float(min(max(pi0, 1.0 / m), 1.0))


def storey_qvalue(p_values, lam: float = 0.5, pi0: float | None = None) -> FdrResult:
    p = _check(p_values)
    if pi0 is None:
        pi0 = storey_pi0(p, lam)
    return FdrResult(q_values=pi0 * _step_up(p), pi0_hat=float(pi0), method="storey")


def adjust(p_values, method: str = "storey", lam: float = 0.5) -> FdrResult:
    if method == "bh":
        return bh_adjust(p_values)
    if method == "storey":
        return storey_qvalue(p_values, lam)
    raise ValueError(f"unknown FDR method {method!r}")


def fdp(discoveries, true_nonzero) -> float:
    """False discovery proportion |D \\ T| / max(|D|, 1) over index sets."""
    disc = np.unique(np.fromiter(discoveries, dtype=np.int64))
    if disc.size == 0:
        return 0.0
    truth = np.fromiter(true_nonzero, dtype=np.int64)
    return np.setdiff1d(disc, truth).size / disc.size
