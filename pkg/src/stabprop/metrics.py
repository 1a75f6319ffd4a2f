"""Sample-based distances, interval calibration, and selective prediction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import FullGaussian, MarginalCauchy, MarginalGaussian
from .errors import DimMismatch, EmptyInput, TooFewSamples
from .losses import pairwise_cauchy_prob, pairwise_gaussian_prob
from .numerics import make_rng

MIN_TV_SAMPLES = 1000


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


@dataclass(frozen=True)
class BinnedHistogram:
    edges: tuple  # one strictly increasing edge array per dimension
    counts: np.ndarray
    total: int

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total


def pooled_edges(*sample_sets, bins_per_dim: int = 10) -> tuple:
    """Equal-width edges spanning the pooled min/max of every dimension."""
    pooled = np.concatenate([_as_2d(s) for s in sample_sets], axis=0)
    lo, hi = pooled.min(axis=0), pooled.max(axis=0)
    edges = []
    for a, b in zip(lo, hi):
        if not b > a:
            a, b = a - 0.5, b + 0.5
        edges.append(np.linspace(a, b, bins_per_dim + 1))
    return tuple(edges)


def histogram(samples, edges) -> BinnedHistogram:
    x = _as_2d(samples)
    if x.shape[1] != len(edges):
        raise DimMismatch("edges do not match sample dimension")
    flat = np.zeros(len(x), dtype=np.int64)
    shape = []
    for d, e in enumerate(edges):
        nb = len(e) - 1
        # last bin is closed on the right
        idx = np.clip(np.searchsorted(e, x[:, d], side="right") - 1, 0, nb - 1)
        flat = flat * nb + idx
        shape.append(nb)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return BinnedHistogram(tuple(edges), counts, len(x))


def tv_binned(samples_a, samples_b, bins_per_dim: int = 10) -> float:
    """Total variation between two sample sets on a shared grid.

    The grid has ``bins_per_dim`` equal bins per dimension between the pooled
    minimum and maximum.  Returns ``0.5 * sum |p_a - p_b|`` over cells; the
    experiment reports use ``1 - TV``.
    """
    a, b = _as_2d(samples_a), _as_2d(samples_b)
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"dimension {a.shape[1]} != {b.shape[1]}")
    if len(a) < MIN_TV_SAMPLES or len(b) < MIN_TV_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_TV_SAMPLES} samples per set")
    edges = pooled_edges(a, b, bins_per_dim=bins_per_dim)
    pa = histogram(a, edges).probabilities
    pb = histogram(b, edges).probabilities
    return float(0.5 * np.abs(pa - pb).sum())


def wasserstein1_1d(samples_a, samples_b, rng=None) -> float:
    """Exact W1 between two equal-size 1-D empirical measures.

    The larger set is subsampled without replacement to the smaller size.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("W1 needs non-empty sample sets")
    if a.size != b.size:
        rng = make_rng(0) if rng is None else rng
        if a.size > b.size:
            a = rng.choice(a, b.size, replace=False)
        else:
            b = rng.choice(b, a.size, replace=False)
    return float(np.abs(np.sort(a) - np.sort(b)).mean())


def sliced_w1(samples_a, samples_b, n_projections: int = 64, rng=None) -> float:
    """Mean 1-D W1 over seeded uniformly random unit directions."""
    a, b = _as_2d(samples_a), _as_2d(samples_b)
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"dimension {a.shape[1]} != {b.shape[1]}")
    if a.shape[1] < 2:
        raise DimMismatch("sliced W1 needs dimension >= 2; use wasserstein1_1d")
    rng = make_rng(0) if rng is None else rng
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return float(np.mean([wasserstein1_1d(a @ u, b @ u, rng) for u in dirs]))


def interval_z(level: float) -> float:
    """Half-width in standard deviations of the central ``level`` interval (1.96 at 95%)."""
    return float(special.ndtri(0.5 * (1.0 + level)))


def picp_mpiw(mu, sigma, targets, level: float = 0.95, y_range: float = 1.0):
    """Coverage of ``mu +- z sigma`` and its mean width divided by ``y_range``."""
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    if not y_range > 0:
        raise ValueError("y_range must be > 0")
    half = interval_z(level) * sigma
    inside = np.abs(y - mu) <= half
    return float(inside.mean()), float((2.0 * half).mean() / y_range)


@dataclass(frozen=True)
class RiskCoverageCurve:
    coverage: np.ndarray  # k / N for k = 1..N
    risk: np.ndarray  # errors among the k most certain, divided by N
    selective_risk: np.ndarray  # errors among the k most certain, divided by k
    auc: float


def risk_coverage(scores, correct) -> RiskCoverageCurve:
    """Risk-coverage curve and its area.

    Predictions are ranked by decreasing certainty (stable on ties).  The
    risk at coverage ``k/N`` counts the errors among the ``k`` most certain
    predictions relative to all ``N``; the area is the trapezoid rule over
    ``(0, 0), (1/N, r_1), ..., (1, r_N)``.  A perfect ranking on a 50% OOD mix
    scores exactly 0.125.
    """
    s = np.asarray(scores, dtype=float).ravel()
    c = np.asarray(correct, dtype=bool).ravel()
    if s.size == 0:
        raise EmptyInput("risk-coverage needs at least one prediction")
    if s.size != c.size:
        raise DimMismatch("scores and correctness flags differ in length")
    order = np.argsort(-s, kind="stable")
    errors = np.cumsum(~c[order])
    n = s.size
    k = np.arange(1, n + 1)
    risk = errors / n
    cov = k / n
    auc = float(np.trapezoid(np.concatenate([[0.0], risk]), np.concatenate([[0.0], cov])))
    return RiskCoverageCurve(cov, risk, errors / k, auc)


def _entropy_certainty(p):
    p = np.clip(p, 1e-300, None)
    return (p * np.log(p)).sum(axis=-1)


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def pairwise_win_matrix(output) -> np.ndarray:
    """``W[..., i, j] = P(X_i > X_j)`` for every pair of output components."""
    loc = output.loc
    li, lj = loc[..., :, None], loc[..., None, :]
    if isinstance(output, FullGaussian):
        cov = output.cov
        var = np.diagonal(cov, axis1=-2, axis2=-1)
        return pairwise_gaussian_prob(li, lj, var[..., :, None], var[..., None, :], cov)
    if isinstance(output, MarginalGaussian):
        var = output.scale**2
        return pairwise_gaussian_prob(li, lj, var[..., :, None], var[..., None, :], 0.0)
    if isinstance(output, MarginalCauchy):
        g = output.scale
        return pairwise_cauchy_prob(li, g[..., :, None], lj, g[..., None, :])
    raise TypeError(f"unsupported output {type(output).__name__}")


def pairwise_class_probs(output) -> np.ndarray:
    """Mean pairwise win probability per class, normalized to sum to 1."""
    w = np.asarray(pairwise_win_matrix(output), dtype=float)
    n = w.shape[-1]
    off = ~np.eye(n, dtype=bool)
    p = (w * off).sum(axis=-1) / (n - 1)
    return p / p.sum(axis=-1, keepdims=True)


def uncertainty_scores(output, kind: str) -> np.ndarray:
    """Certainty (negative entropy; higher is more certain) per prediction.

    ``kind`` is ``"softmax_entropy"``, ``"pairwise_gauss_entropy"`` or
    ``"pairwise_cauchy_entropy"``.  The pairwise kinds require an output of
    the matching family.
    """
    if output.dim < 2:
        raise DimMismatch("need at least two classes")
    if kind == "softmax_entropy":
        return _entropy_certainty(softmax(output.loc))
    if kind == "pairwise_gauss_entropy":
        if not isinstance(output, (FullGaussian, MarginalGaussian)):
            raise TypeError("pairwise Gaussian scores need a Gaussian output")
        return _entropy_certainty(pairwise_class_probs(output))
    if kind == "pairwise_cauchy_entropy":
        if not isinstance(output, MarginalCauchy):
            raise TypeError("pairwise Cauchy scores need a Cauchy output")
        return _entropy_certainty(pairwise_class_probs(output))
    raise ValueError(f"unknown score kind {kind!r}")
