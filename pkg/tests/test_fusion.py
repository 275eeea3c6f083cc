import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from histfuse import fusion
from histfuse import linalg as la
from histfuse.asymvar import variance_C
from histfuse.errors import DimMismatch, GammaOutOfRange, NotPD, RangeError
from histfuse.fusion import Estimate, HistoricalSet, JointEstimate
from oracles import likelihood_fusion, random_pd, stacked_gls

seeds = st.integers(0, 2**32 - 1)


def test_weights_symmetric_case():
    w1, w2 = fusion.fusion_weights(np.eye(3), np.eye(3), 0.5)
    np.testing.assert_allclose(w1, 0.5 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(w2, 0.5 * np.eye(3), atol=1e-15)


def test_weights_history_dominates():
    w1, w2 = fusion.fusion_weights(np.diag([1.0, 2.0]), np.eye(2), 1e-9)
    np.testing.assert_allclose(w1, 0.0, atol=1e-8)
    np.testing.assert_allclose(w2, np.eye(2), atol=1e-8)


@given(seeds, st.integers(1, 5), st.floats(0.01, 0.99))
def test_weights_match_direct_formula(s, q, gamma):
    rng = np.random.default_rng(s)
    U, S = random_pd(rng, q), random_pd(rng, q)
    w1, w2 = fusion.fusion_weights(U, S, gamma)
    a = gamma * np.linalg.inv(U)
    b = (1 - gamma) * np.linalg.inv(S)
    np.testing.assert_allclose(w1, np.linalg.inv(a + b) @ a, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(w2, np.linalg.inv(a + b) @ b, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(w1 + w2, np.eye(q), atol=1e-10)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1, 1.5])
def test_weights_gamma_range(gamma):
    with pytest.raises(GammaOutOfRange):
        fusion.fusion_weights(np.eye(2), np.eye(2), gamma)


def test_weights_reject_non_pd():
    with pytest.raises(NotPD):
        fusion.fusion_weights(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2), 0.5)


def test_combine_eta_equal_precision_average():
    out = fusion.combine_eta(Estimate([0.0], [[1.0]], 1), HistoricalSet((Estimate([2.0], [[1.0]], 1),)))
    assert out.value[0] == pytest.approx(1.0, abs=1e-15)
    assert out.scaled_var[0, 0] == pytest.approx(0.5)


def test_combine_eta_huge_history():
    rng = np.random.default_rng(3)
    cur = Estimate(rng.standard_normal(3), random_pd(rng, 3), 1)
    hist = Estimate(rng.standard_normal(3), random_pd(rng, 3), 10**9)
    out = fusion.combine_eta(cur, hist)
    np.testing.assert_allclose(out.value, hist.value, atol=1e-6)


@given(seeds, st.integers(1, 4), st.integers(1, 3))
def test_combine_eta_matches_stacked_gls(s, q_each, k):
    rng = np.random.default_rng(s)
    hists = [Estimate(rng.standard_normal(q_each), random_pd(rng, q_each), int(rng.integers(5, 5000)))
             for _ in range(k)]
    q = q_each * k
    cur = Estimate(rng.standard_normal(q), random_pd(rng, q), int(rng.integers(5, 5000)))
    out = fusion.combine_eta(cur, HistoricalSet(tuple(hists)))
    value, var = stacked_gls(cur.value, cur.scaled_var, cur.n,
                             [(h.value, h.scaled_var, h.n) for h in hists])
    np.testing.assert_allclose(out.value, value, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(out.scaled_var, var, rtol=1e-9, atol=1e-9)


def test_combine_eta_duplication_is_idempotent():
    rng = np.random.default_rng(11)
    v = random_pd(rng, 3)
    x = rng.standard_normal(3)
    out = fusion.combine_eta(Estimate(x, v, 50), Estimate(x, v, 50))
    np.testing.assert_allclose(out.value, x, rtol=1e-12, atol=1e-12)


@given(seeds)
def test_combine_eta_precision_only_increases(s):
    rng = np.random.default_rng(s)
    n, m = int(rng.integers(10, 1000)), int(rng.integers(10, 1000))
    U, S = random_pd(rng, 3), random_pd(rng, 3)
    out = fusion.combine_eta(Estimate(np.zeros(3), U, n), Estimate(np.ones(3), S, m))
    assert la.loewner_leq(out.scaled_var, U)
    assert la.loewner_leq(out.scaled_var, (n / m) * S)


def test_combine_eta_scalar_weights():
    n, m, u, s2 = 120, 300, 2.5, 1.7
    w1, w2 = fusion.scalar_weights(n, u, m, s2)
    out = fusion.combine_eta(Estimate([1.0], [[u]], n), Estimate([3.0], [[s2]], m))
    assert out.value[0] == pytest.approx(w1 * 1.0 + w2 * 3.0, abs=1e-12)
    assert w1 == pytest.approx((n / u) / (n / u + m / s2), abs=1e-12)


def test_combine_eta_dim_mismatch():
    with pytest.raises(DimMismatch):
        fusion.combine_eta(Estimate([0.0, 1.0], np.eye(2), 3), Estimate([1.0], [[1.0]], 3))


def test_historical_set_sigma_blocks():
    a = Estimate([0.0], [[2.0]], 100)
    b = Estimate([0.0, 0.0], np.eye(2), 300)
    hs = HistoricalSet((a, b))
    assert hs.total_m == 400
    assert hs.kappas() == [4.0, 400 / 300]
    np.testing.assert_allclose(hs.sigma(), np.diag([8.0, 4 / 3, 4 / 3]))


def test_theta_c_uncorrelated_is_bit_identical():
    theta = np.array([0.1234567890123, -7.5])
    ups = la.VarianceBlocks(np.diag([1.0, 2.0]), np.zeros((2, 2)), np.diag([3.0, 4.0]))
    joint = JointEstimate(theta, [0.3, 0.4], ups, 77)
    out = fusion.combine_theta_C(joint, Estimate([1.0, 2.0], np.eye(2), 99))
    assert out.theta.tobytes() == theta.tobytes()


def test_theta_c_scalar_reduction():
    ut, ute, ue, n = 2.0, 0.7, 1.5, 200
    s2, m = 1.1, 500
    joint = JointEstimate([0.4], [1.2], la.VarianceBlocks([[ut]], [[ute]], [[ue]]), n)
    out = fusion.combine_theta_C(joint, Estimate([0.9], [[s2]], m))
    w1, w2 = fusion.scalar_weights(n, ue, m, s2)
    eta_bar = w1 * 1.2 + w2 * 0.9
    assert out.eta[0] == pytest.approx(eta_bar, abs=1e-14)
    assert out.theta[0] == pytest.approx(0.4 - ute / ue * (1.2 - eta_bar), abs=1e-14)


@pytest.mark.parametrize("case", range(50))
def test_theta_c_is_likelihood_maximiser(case):
    rng = np.random.default_rng(1000 + case)
    p, q = 1, 2
    U = random_pd(rng, p + q)
    S = random_pd(rng, q)
    n, m = int(rng.integers(20, 2000)), int(rng.integers(20, 2000))
    theta_t, eta_t, eta_h = rng.standard_normal(p), rng.standard_normal(q), rng.standard_normal(q)
    joint = JointEstimate(theta_t, eta_t, U, n)
    out = fusion.combine_theta_C(joint, Estimate(eta_h, S, m))
    th, et = likelihood_fusion(theta_t, eta_t, U, n, eta_h, S, m)
    np.testing.assert_allclose(out.theta, th, atol=1e-6)
    np.testing.assert_allclose(out.eta, et, atol=1e-6)


def test_theta_c_carries_variance_c():
    rng = np.random.default_rng(5)
    U = la.VarianceBlocks.from_full(random_pd(rng, 4), 2)
    S = random_pd(rng, 2)
    out = fusion.combine_theta_C(JointEstimate(np.zeros(2), np.zeros(2), U, 300),
                                 Estimate(np.zeros(2), S, 600))
    np.testing.assert_allclose(out.upsilon.full(), variance_C(U, S, 0.5).full(), rtol=1e-12)


@pytest.mark.parametrize("r,w2,expected", [(0.0, 0.37, 1.0), (0.6, 1.0, 0.64), (1.0, 0.5, 0.5)])
def test_scalar_efficiency(r, w2, expected):
    assert fusion.scalar_efficiency(r, w2) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("r,w2", [(1.1, 0.5), (-1.01, 0.5), (0.5, -0.1), (0.5, 1.2)])
def test_scalar_efficiency_range(r, w2):
    with pytest.raises(RangeError):
        fusion.scalar_efficiency(r, w2)


@given(st.floats(-1, 1), st.floats(0, 1))
def test_scalar_efficiency_bounds(r, w2):
    e = fusion.scalar_efficiency(r, w2)
    assert 1 - r * r - 1e-15 <= e <= 1.0
