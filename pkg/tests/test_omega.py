from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latentadj.errors import RankDeficientError
from latentadj.omega import bias_corrected_omega, correction_factors, naive_omega, theoretical_shrinkage


def test_naive_exact_fit(rng):
    l_hat = rng.standard_normal((50, 1))
    np.testing.assert_allclose(naive_omega(l_hat * 0.5, l_hat), [[0.5]], rtol=1e-12)


def test_naive_orthogonal_is_zero(rng):
    l_hat = rng.standard_normal((50, 2))
    q, _ = np.linalg.qr(l_hat, mode="complete")
    y1 = q[:, 2:4]
    np.testing.assert_allclose(naive_omega(y1, l_hat), 0.0, atol=1e-12)


def test_naive_singular():
    l_hat = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(RankDeficientError):
        naive_omega(np.ones((5, 1)), l_hat)


def test_naive_no_factors():
    assert naive_omega(np.ones((5, 2)), np.zeros((5, 0))).shape == (2, 0)


def test_theoretical_shrinkage():
    assert theoretical_shrinkage(2.0, 2.0) == pytest.approx(0.5)
    np.testing.assert_allclose(theoretical_shrinkage([3.0, 7.0], 0.0), [1.0, 1.0])
    np.testing.assert_allclose(theoretical_shrinkage([20.0, 1.0], 1.0), [20 / 21, 0.5])


def test_zero_noise_is_identity(rng):
    om = rng.standard_normal((2, 3))
    est = bias_corrected_omega(om, [9.0, 4.0, 1.0], 0.0)
    np.testing.assert_array_equal(est.omega_bc, om)
    assert not est.clamped.any()


def test_scalar_example():
    est = bias_corrected_omega([[0.3]], [2.0], 1.0)
    assert est.shrink_correction[0] == pytest.approx(2.0)
    assert est.omega_bc[0, 0] == pytest.approx(0.6)


def test_clamp():
    est = bias_corrected_omega([[1.0, 1.0]], [10.0, 1.0], 1.0, clamp_eps=0.05)
    assert est.clamped.tolist() == [False, True]
    assert est.shrink_correction[1] == pytest.approx(20.0)
    assert est.shrink_correction[0] == pytest.approx(10 / 9)


def test_clamp_eps_range():
    with pytest.raises(ValueError):
        correction_factors([2.0], 1.0, clamp_eps=0.0)


@given(seed=st.integers(0, 2**32 - 1), rho=st.floats(0.0, 5.0))
def test_identity_exact(seed, rho):
    g = np.random.default_rng(seed)
    om = g.standard_normal((3, 4))
    lam = np.sort(g.uniform(0.1, 50, 4))[::-1]
    est = bias_corrected_omega(om, lam, rho)
    np.testing.assert_array_equal(est.omega_bc, om * est.shrink_correction[None, :])
    assert np.all(est.shrink_correction[(lam > rho) & ~est.clamped] >= 1.0)


@given(a=st.floats(1.5, 100.0), gap=st.floats(0.01, 50.0), rho=st.floats(0.01, 1.0))
def test_monotone_in_lambda(a, gap, rho):
    lam_b = max(a, rho / 0.95 * 1.001)
    lam_a = lam_b + gap
    fa, fb = correction_factors([lam_a, lam_b], rho)[0]
    assert fa < fb


@pytest.mark.parametrize("lam", [0.5, 1.0, 4.0, 20.0, 300.0])
@pytest.mark.parametrize("rho", [0.1, 1.0, 2.5])
def test_correction_inverts_shrinkage(lam, rho):
    # plugging the inflated eigenvalue lambda + rho back in undoes the attenuation
    fac, clamped = correction_factors([lam + rho], rho, clamp_eps=1e-6)
    assert not clamped[0]
    assert theoretical_shrinkage(lam, rho) * fac[0] == pytest.approx(1.0, abs=1e-12)
