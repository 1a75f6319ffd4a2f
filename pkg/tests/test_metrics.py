import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from stabprop import metrics as mt
from stabprop.distributions import FullGaussian, MarginalCauchy, MarginalGaussian
from stabprop.errors import DimMismatch, EmptyInput, TooFewSamples
from stabprop.losses import pairwise_gaussian_prob
from stabprop.numerics import make_rng


# --- binned TV ------------------------------------------------------------------------


def test_tv_identical_and_disjoint():
    rng = make_rng(0)
    a = rng.standard_normal((2000, 2))
    assert mt.tv_binned(a, a) == 0.0
    assert mt.tv_binned(a, a + 100.0) == 1.0


def test_tv_errors():
    rng = make_rng(1)
    with pytest.raises(TooFewSamples):
        mt.tv_binned(rng.standard_normal(999), rng.standard_normal(2000))
    with pytest.raises(DimMismatch):
        mt.tv_binned(rng.standard_normal((2000, 2)), rng.standard_normal((2000, 3)))


def test_tv_matches_quadrature_binned_oracle():
    rng = make_rng(2)
    n = 10**6
    a = rng.standard_normal(n)
    b = 1.0 + rng.standard_normal(n)
    (edges,) = mt.pooled_edges(a, b, bins_per_dim=10)
    # the outer bins hold every sample, so they extend to infinity for the oracle
    e = edges.copy()
    e[0], e[-1] = -np.inf, np.inf
    pa = np.diff(special.ndtr(e))
    pb = np.diff(special.ndtr(e - 1.0))
    oracle = 0.5 * np.abs(pa - pb).sum()
    assert abs(mt.tv_binned(a, b) - oracle) < 5e-3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_tv_symmetric_and_permutation_invariant(seed):
    rng = make_rng(seed)
    a = rng.standard_normal((1500, 3))
    b = rng.standard_normal((1200, 3)) * [1.0, 2.0, 0.5] + 0.3
    t = mt.tv_binned(a, b)
    assert 0.0 <= t <= 1.0
    assert t == mt.tv_binned(b, a)
    perm = rng.permutation(3)
    assert abs(mt.tv_binned(a[:, perm], b[:, perm]) - t) < 1e-12


def test_histogram_counts_sum_to_total():
    rng = make_rng(3)
    x = rng.standard_normal((5000, 2))
    edges = mt.pooled_edges(x, bins_per_dim=7)
    h = mt.histogram(x, edges)
    assert h.counts.shape == (7, 7)
    assert h.counts.sum() == h.total == 5000
    assert all(np.all(np.diff(e) > 0) for e in h.edges)


# --- Wasserstein ----------------------------------------------------------------------


def test_w1_examples():
    rng = make_rng(4)
    a = rng.standard_normal(30_000)
    assert mt.wasserstein1_1d(a, a) == 0.0
    assert abs(mt.wasserstein1_1d(a, a + 2.5) - 2.5) < 1e-12
    b = 1.0 + rng.standard_normal(30_000)
    assert abs(mt.wasserstein1_1d(a, b) - 1.0) < 0.02
    with pytest.raises(EmptyInput):
        mt.wasserstein1_1d([], [1.0])


def test_w1_subsamples_larger_set():
    a = np.arange(10.0)
    b = np.full(4, 3.0)
    w = mt.wasserstein1_1d(a, b, make_rng(0))
    assert w >= 0 and np.isfinite(w)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_w1_triangle_inequality(seed):
    rng = make_rng(seed)
    a, b, c = (rng.standard_normal(200) * rng.uniform(0.1, 3) + rng.normal() for _ in range(3))
    assert mt.wasserstein1_1d(a, c) <= mt.wasserstein1_1d(a, b) + mt.wasserstein1_1d(b, c) + 1e-9


def test_sliced_w1():
    rng = make_rng(5)
    a = rng.standard_normal((5000, 3))
    assert mt.sliced_w1(a, a) == 0.0
    v = np.array([1.0, -2.0, 0.5])
    got = mt.sliced_w1(a, a + v, n_projections=256, rng=make_rng(1))
    # E|<v,u>| for u uniform on the sphere in 3-D is |v| / 2
    assert abs(got - np.linalg.norm(v) / 2) < 0.1 * np.linalg.norm(v) / 2
    small = mt.sliced_w1(a, 1.5 * a, rng=make_rng(2))
    large = mt.sliced_w1(a, 3.0 * a, rng=make_rng(2))
    assert large > small
    with pytest.raises(DimMismatch):
        mt.sliced_w1(a[:, 0], a[:, 0])


# --- intervals --------------------------------------------------------------------------


def test_picp_mpiw_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert mt.picp_mpiw(y, np.zeros(3), y) == (1.0, 0.0)
    p, w = mt.picp_mpiw(np.zeros(4), np.full(4, 0.5), np.zeros(4), y_range=2.0)
    assert p == 1.0
    assert abs(w - 2 * mt.interval_z(0.95) * 0.5 / 2.0) < 1e-15
    assert abs(mt.interval_z(0.95) - 1.959963984540054) < 1e-12
    with pytest.raises(ValueError):
        mt.picp_mpiw([0.0], [-1.0], [0.0])
    with pytest.raises(ValueError):
        mt.picp_mpiw([0.0], [1.0], [0.0], y_range=0.0)


def test_picp_nominal_coverage():
    rng = make_rng(6)
    mu = rng.normal(0, 3, 10**5)
    sig = rng.uniform(0.1, 2, 10**5)
    y = mu + sig * rng.standard_normal(10**5)
    p, _ = mt.picp_mpiw(mu, sig, y)
    assert abs(p - 0.95) < 0.01


# --- risk-coverage ---------------------------------------------------------------------------


def test_risk_coverage_all_correct():
    c = mt.risk_coverage([0.3, 0.1, 0.9], [True, True, True])
    assert c.auc == 0.0
    np.testing.assert_array_equal(c.coverage, [1 / 3, 2 / 3, 1.0])


def test_risk_coverage_hand_case():
    c = mt.risk_coverage([4.0, 3.0, 2.0, 1.0], [True, True, False, False])
    np.testing.assert_allclose(c.selective_risk, [0, 0, 1 / 3, 1 / 2])
    np.testing.assert_allclose(c.risk, [0, 0, 0.25, 0.5])
    assert abs(c.auc - 0.125) < 1e-15


def test_risk_coverage_perfect_predictor_half_ood():
    for n in (4, 20, 2000):
        correct = np.arange(n) < n // 2
        scores = correct.astype(float)
        assert mt.risk_coverage(scores, correct).auc == 0.125


def test_risk_coverage_random_scores():
    rng = make_rng(7)
    n = 20_000
    correct = rng.random(n) < 0.48
    e = 1 - correct.mean()
    aucs = [mt.risk_coverage(rng.random(n), correct).auc for _ in range(5)]
    # with risk counted against all N, a random ranking traces risk = e * coverage
    assert abs(np.mean(aucs) - e / 2) < 0.02


def test_risk_coverage_ties_keep_input_order():
    c = mt.risk_coverage([1.0, 1.0], [False, True])
    np.testing.assert_array_equal(c.risk, [0.5, 0.5])
    with pytest.raises(EmptyInput):
        mt.risk_coverage([], [])
    with pytest.raises(DimMismatch):
        mt.risk_coverage([1.0], [True, False])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_risk_coverage_monotone_invariance(seed):
    rng = make_rng(seed)
    s = rng.standard_normal(300)
    correct = rng.random(300) < 0.6
    a = mt.risk_coverage(s, correct)
    b = mt.risk_coverage(np.exp(2 * s) + 3, correct)
    assert a.auc == b.auc
    assert np.all(np.diff(a.coverage) > 0) and np.all((a.risk >= 0) & (a.risk <= 1))


# --- uncertainty scores ------------------------------------------------------------------------


def test_uncertainty_uniform_is_minimal():
    n = 5
    for out, kind in [
        (MarginalGaussian(np.zeros(n), np.ones(n)), "softmax_entropy"),
        (MarginalGaussian(np.zeros(n), np.ones(n)), "pairwise_gauss_entropy"),
        (MarginalCauchy(np.zeros(n), np.ones(n)), "pairwise_cauchy_entropy"),
    ]:
        assert abs(mt.uncertainty_scores(out, kind) + np.log(n)) < 1e-12


def test_uncertainty_dominant_is_near_maximal():
    loc = np.array([50.0, 0.0, 0.0])
    assert mt.uncertainty_scores(MarginalGaussian(loc, np.zeros(3)), "softmax_entropy") > -1e-12
    # mean win probabilities (1, 1/4, 1/4): the two tied losers still beat each
    # other half the time, so the pairwise rule cannot reach zero entropy
    ranks = np.array([2 / 3, 1 / 6, 1 / 6])
    top = (ranks * np.log(ranks)).sum()
    got = mt.uncertainty_scores(MarginalGaussian(loc, np.full(3, 1e-3)), "pairwise_gauss_entropy")
    assert abs(got - top) < 1e-9


def test_uncertainty_three_class_hand_case():
    loc = np.array([1.0, 0.0, -1.0])
    var = np.array([1.0, 0.5, 2.0])
    P = lambda i, j: pairwise_gaussian_prob(loc[i], loc[j], var[i], var[j], 0.0)
    pt = np.array([(P(0, 1) + P(0, 2)) / 2, (P(1, 0) + P(1, 2)) / 2, (P(2, 0) + P(2, 1)) / 2])
    pt /= pt.sum()
    got = mt.uncertainty_scores(MarginalGaussian(loc, np.sqrt(var)), "pairwise_gauss_entropy")
    assert abs(got - (pt * np.log(pt)).sum()) < 1e-12
    full = FullGaussian(loc, np.diag(var))
    assert abs(mt.uncertainty_scores(full, "pairwise_gauss_entropy") - got) < 1e-12


def test_uncertainty_score_errors():
    with pytest.raises(DimMismatch):
        mt.uncertainty_scores(MarginalGaussian([0.0], [1.0]), "softmax_entropy")
    with pytest.raises(TypeError):
        mt.uncertainty_scores(MarginalGaussian([0.0, 1.0], [1.0, 1.0]), "pairwise_cauchy_entropy")
    with pytest.raises(ValueError):
        mt.uncertainty_scores(MarginalGaussian([0.0, 1.0], [1.0, 1.0]), "max_prob")
