from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latentadj.errors import DegenerateDataError, InputError
from latentadj.factors import estimate_factors, no_factors, procrustes_rotation, spike_debias
from latentadj.simulation import SimulationConfig, generate_scenario
from latentadj.design import partition, remove_nuisance


def _quiet(y2, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return estimate_factors(y2, k)


def test_rank_one_noiseless():
    ell = np.array([1.0, 2.0, 2.0])
    c2 = np.array([1.0, -1.0])
    fac = _quiet(np.outer(ell, c2), 1)
    assert fac.gamma2[0] == pytest.approx(9.0)
    np.testing.assert_allclose(np.abs(fac.l_hat[:, 0]), ell, atol=1e-12)
    assert fac.lambda_hat[0] == pytest.approx(6.0)
    np.testing.assert_allclose(np.abs(fac.c2_hat[:, 0]), np.abs(c2), atol=1e-12)
    np.testing.assert_allclose(fac.sigma2_hat, 0.0, atol=1e-24)
    assert fac.rho_hat == pytest.approx(0.0, abs=1e-24)


def test_sign_convention():
    fac = _quiet(np.outer([1.0, -2.0, -3.0], [1.0, -1.0]), 1)
    assert fac.l_hat[2, 0] == pytest.approx(3.0)


def test_zero_matrix_is_error():
    with pytest.raises(DegenerateDataError):
        estimate_factors(np.zeros((5, 4)), 1)


@pytest.mark.parametrize("k", [0, -1, 4, 5])
def test_k_out_of_range(k):
    with pytest.raises(InputError):
        estimate_factors(np.random.default_rng(0).standard_normal((20, 4)), k)


def test_rank_below_k():
    y2 = np.outer(np.arange(1.0, 21.0), [1.0, 2.0, 0.5, 1.0, -1.0])
    with pytest.raises(DegenerateDataError):
        _quiet(y2, 2)


def test_few_residual_dof_warns(rng):
    with pytest.warns(UserWarning, match="residual degrees"):
        estimate_factors(rng.standard_normal((50, 8)), 2)


def test_tie_warns():
    y2 = np.zeros((4, 12))
    y2[0, 0] = y2[1, 1] = y2[2, 2] = 1.0
    with pytest.warns(UserWarning, match="tied"):
        estimate_factors(y2, 1)


@given(p=st.integers(15, 60), m=st.integers(12, 25), k=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_structural_invariants(p, m, k, seed):
    y2 = np.random.default_rng(seed).standard_normal((p, m))
    fac = _quiet(y2, k)
    ltl = fac.l_hat.T @ fac.l_hat
    diag = np.diag(ltl)
    np.testing.assert_allclose(diag, p * fac.lambda_hat / m, rtol=1e-8)
    off = ltl - np.diag(diag)
    assert np.abs(off).max() <= 1e-8 * diag.max()
    assert np.all(np.diff(fac.lambda_hat) < 0)
    np.testing.assert_allclose(fac.c2_hat.T @ fac.c2_hat / m, np.eye(k), atol=1e-8)
    assert fac.rho_hat == np.mean(fac.sigma2_hat)
    np.testing.assert_allclose(fac.c2_hat, y2.T @ fac.l_hat @ np.linalg.inv(ltl), atol=1e-8)


@given(scale=st.floats(0.01, 100.0), seed=st.integers(0, 2**32 - 1))
def test_scale_equivariance(scale, seed):
    y2 = np.random.default_rng(seed).standard_normal((40, 15))
    a, b = _quiet(y2, 2), _quiet(scale * y2, 2)
    np.testing.assert_allclose(b.l_hat, scale * a.l_hat, rtol=1e-8, atol=1e-10 * scale)
    np.testing.assert_allclose(b.lambda_hat, scale ** 2 * a.lambda_hat, rtol=1e-8)
    np.testing.assert_allclose(b.sigma2_hat, scale ** 2 * a.sigma2_hat, rtol=1e-8)
    assert b.rho_hat == pytest.approx(scale ** 2 * a.rho_hat, rel=1e-8)
    np.testing.assert_allclose(b.c2_hat, a.c2_hat, atol=1e-8)


@given(p=st.integers(3, 50), m=st.integers(2, 20), seed=st.integers(0, 2**32 - 1))
def test_gram_route_matches_direct(p, m, seed):
    y2 = np.random.default_rng(seed).standard_normal((p, m))
    k = max(1, min(p, m) - 1)
    fac = _quiet(y2, k)
    w, v = np.linalg.eigh(y2 @ y2.T / m)
    order = np.argsort(w)[::-1][:k]
    direct = v[:, order] * np.sqrt(w[order])
    sign = np.sign(np.sum(direct * fac.l_hat, axis=0))
    np.testing.assert_allclose(direct * sign, fac.l_hat, atol=1e-8 * max(1.0, np.abs(fac.l_hat).max()))


def test_no_factors():
    y2 = np.arange(12.0).reshape(3, 4)
    fac = no_factors(y2)
    assert fac.k == 0 and fac.l_hat.shape == (3, 0)
    np.testing.assert_allclose(fac.sigma2_hat, (y2 ** 2).sum(axis=1) / 4)


def test_spike_debias():
    np.testing.assert_allclose(spike_debias([6.0, 3.0], 1.0), [5.0, 2.0])
    np.testing.assert_allclose(spike_debias([6.0, 3.0], 0.0), [6.0, 3.0])
    np.testing.assert_allclose(spike_debias([0.5], 1.0), [-0.5])


def test_procrustes_recovers_rotation(rng):
    target = rng.standard_normal((30, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    r = procrustes_rotation(target @ q.T, target)
    np.testing.assert_allclose(r, q, atol=1e-10)


def test_sample_spike_near_lambda_plus_rho():
    # equal spikes: the sample eigenvalue concentrates near lambda + rho
    cfg = SimulationConfig(n=100, p=5000, k=3, lambdas=(5.0, 5.0, 5.0), beta_nonzero_prob=0.0,
                           omega_scenario="null", seed=3)
    ratios = []
    for rep in range(200):
        data, truth = generate_scenario(cfg, rep)
        part = partition(remove_nuisance(data))
        fac = _quiet(part.y2, 3)
        ratios.append(fac.lambda_hat / (truth.standardized.lambdas + truth.sigma2.mean()))
    np.testing.assert_allclose(np.mean(ratios, axis=0), 1.0, atol=0.05)
