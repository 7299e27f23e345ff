from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latentadj.fdr import adjust, bh_adjust, fdp, storey_pi0, storey_qvalue
from latentadj.validation import brute_force_bh

pvals = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).map(np.array)


def test_bh_small():
    np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.03]).q_values, [0.03, 0.03, 0.03])
    assert bh_adjust([1.0]).q_values.tolist() == [1.0]
    assert bh_adjust([0.2]).pi0_hat == 1.0


def test_rejects_bad_input():
    for bad in ([], [0.5, np.nan], [1.2], [-0.1]):
        with pytest.raises(ValueError):
            bh_adjust(bad)
    with pytest.raises(ValueError):
        adjust([0.5], method="holm")


@given(pvals)
def test_bh_matches_brute_force(p):
    np.testing.assert_array_equal(bh_adjust(p).q_values, brute_force_bh(p))


@given(pvals, st.randoms(use_true_random=False))
def test_bh_permutation_invariant(p, r):
    perm = list(range(p.size))
    r.shuffle(perm)
    np.testing.assert_array_equal(bh_adjust(p[perm]).q_values, bh_adjust(p).q_values[perm])


@given(pvals)
def test_q_monotone_in_p(p):
    q = bh_adjust(p).q_values
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(q[order]) >= 0)
    assert np.all(q >= p * (1 - 1e-15))  # m p / m may round one ulp low


@given(pvals, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_discoveries_nested(p, a, b):
    lo, hi = sorted((a, b))
    res = storey_qvalue(p)
    assert set(res.discoveries(lo)) <= set(res.discoveries(hi))


def test_storey_uniform_grid():
    m = 1000
    p = (np.arange(1, m + 1) - 0.5) / m
    assert storey_pi0(p, 0.5) == 1.0


def test_storey_clamps_low():
    p = np.full(100, 1e-6)
    res = storey_qvalue(p)
    assert res.pi0_hat == pytest.approx(0.01)
    np.testing.assert_allclose(res.q_values, 0.01 * bh_adjust(p).q_values)


@given(pvals)
def test_storey_with_unit_pi0_is_bh(p):
    np.testing.assert_array_equal(storey_qvalue(p, pi0=1.0).q_values, bh_adjust(p).q_values)


def test_storey_mixture(rng):
    p = np.concatenate([rng.random(9000), rng.random(1000) * 1e-4])
    assert 0.85 <= storey_pi0(p) <= 0.95


def test_storey_lambda_range():
    with pytest.raises(ValueError):
        storey_pi0([0.3], lam=1.0)


def test_fdp():
    assert fdp([], [1, 2]) == 0.0
    assert fdp([1, 2], [1, 2, 3]) == 0.0
    assert fdp([1, 2, 3, 4], [1, 2]) == 0.5
    assert fdp(np.array([5]), np.array([], dtype=int)) == 1.0
