"""Training objectives for propagated output distributions.

Classification uses the pairwise distribution loss: for each false class
``j`` the probability that the true-class score exceeds score ``j`` is
evaluated in closed form and the negative log-probabilities are averaged
over the ``n - 1`` false classes.  Regression uses negative
log-likelihoods.

All kernels accept ndarrays or autodiff tensors with a leading batch axis
and average over it.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .distributions import FullGaussian, MarginalCauchy, MarginalGaussian
from .errors import DimMismatch, InvalidCovariance, NonpositiveScale
from .numerics import psd_factor

PROB_CLAMP = 1e-12
COV_TOL = 1e-12


def _step(diff):
    d = ad.value(diff)
    return np.where(d > 0, 1.0, np.where(d < 0, 0.0, 0.5))


def pairwise_gaussian_prob(mu_x, mu_y, var_x, var_y, cov_xy=0.0):
    """P(X > Y) for jointly Gaussian (X, Y).

    A zero variance of ``X - Y`` gives the step function of ``mu_x - mu_y``
    with value 0.5 at equality.
    """
    d = var_x + var_y - 2.0 * cov_xy
    dv = ad.value(d)
    tol = COV_TOL * np.maximum(1.0, np.abs(ad.value(var_x)) + np.abs(ad.value(var_y)))
    if np.any(dv < -tol):
        raise InvalidCovariance(f"variance of the difference is negative ({dv.min():.3g})")
    live = dv > tol * 1e-3
    diff = mu_x - mu_y
    denom = ad.sqrt(2.0 * ad.where(live, d, 1.0))
    p = 0.5 * (1.0 + ad.erf(diff / denom))
    out = ad.where(live, p, _step(diff))
    return float(out) if np.ndim(out) == 0 and not ad.is_tensor(out) else out


def pairwise_cauchy_prob(x_x, gamma_x, x_y, gamma_y):
    """P(X > Y) for independent Cauchy X and Y."""
    s = gamma_x + gamma_y
    sv = ad.value(s)
    if np.any(ad.value(gamma_x) < 0) or np.any(ad.value(gamma_y) < 0):
        raise NonpositiveScale("Cauchy scales must be >= 0")
    live = sv > 0
    diff = x_x - x_y
    p = ad.arctan(diff / ad.where(live, s, 1.0)) / np.pi + 0.5
    out = ad.where(live, p, _step(diff))
    return float(out) if np.ndim(out) == 0 and not ad.is_tensor(out) else out


def pairwise_probs(loc, spread, labels, family: str):
    """P(true score > score j) for every class ``j``; shape ``(B, n)``.

    ``spread`` is a covariance ``(B, n, n)`` for ``family="gaussian_full"``,
    variances ``(B, n)`` for ``"gaussian"`` and scales for ``"cauchy"``.
    The entry at the true class itself is 0.5.
    """
    labels = np.asarray(labels, dtype=int)
    idx = labels[:, None]
    true_loc = ad.take_along_axis(loc, idx, -1)
    if family == "gaussian_full":
        cov = spread
        n = ad.value(loc).shape[-1]
        diag = ad.diagonal(cov)
        row_idx = np.broadcast_to(idx[:, :, None], (len(labels), 1, n))
        row = ad.reshape(ad.take_along_axis(cov, row_idx, 1), (-1, n))
        true_var = ad.take_along_axis(diag, idx, -1)
        return pairwise_gaussian_prob(true_loc, loc, true_var, diag, row)
    if family == "gaussian":
        true_var = ad.take_along_axis(spread, idx, -1)
        return pairwise_gaussian_prob(true_loc, loc, true_var, spread, 0.0)
    if family == "cauchy":
        true_gamma = ad.take_along_axis(spread, idx, -1)
        return pairwise_cauchy_prob(true_loc, true_gamma, loc, spread)
    raise ValueError(f"unknown family {family!r}")


def pairwise_loss(loc, spread, labels, family: str):
    """Batch mean of the per-sample pairwise distribution loss."""
    n = ad.value(loc).shape[-1]
    if n < 2:
        raise DimMismatch("pairwise loss needs at least two classes")
    labels = np.asarray(labels, dtype=int)
    p = ad.clip(pairwise_probs(loc, spread, labels, family), PROB_CLAMP, 1.0 - PROB_CLAMP)
    mask = np.ones((len(labels), n))
    mask[np.arange(len(labels)), labels] = 0.0
    per_sample = ad.sum_(-ad.log(p) * mask, axis=-1) / (n - 1)
    return ad.mean(per_sample)


def _batch(loc, labels):
    loc = np.asarray(loc, dtype=float)
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    return loc.reshape(-1, loc.shape[-1]), labels


def pairwise_distribution_loss(output, target) -> float:
    """Pairwise loss of a distribution object against class index ``target``."""
    loc, labels = _batch(output.loc, target)
    n = loc.shape[-1]
    if np.any(labels < 0) or np.any(labels >= n):
        raise ValueError("class label out of range")
    if isinstance(output, FullGaussian):
        return float(pairwise_loss(loc, output.cov.reshape(-1, n, n), labels, "gaussian_full"))
    if isinstance(output, MarginalGaussian):
        return float(pairwise_loss(loc, output.scale.reshape(-1, n) ** 2, labels, "gaussian"))
    if isinstance(output, MarginalCauchy):
        return float(pairwise_loss(loc, output.scale.reshape(-1, n), labels, "cauchy"))
    raise TypeError(f"unsupported output {type(output).__name__}")


def gaussian_nll_marginal(mu, var, y):
    """Sum over dimensions, mean over batch, of the diagonal Gaussian NLL."""
    r = y - mu
    per = 0.5 * (np.log(2.0 * np.pi) + ad.log(var)) + ad.square(r) / (2.0 * var)
    per = ad.sum_(per, axis=-1)
    return ad.mean(per)


def gaussian_nll(pred, y) -> float:
    y = np.asarray(y, dtype=float)
    if isinstance(pred, MarginalGaussian):
        if np.any(pred.scale <= 0):
            raise NonpositiveScale("Gaussian NLL needs positive scales")
        return float(gaussian_nll_marginal(pred.loc, pred.scale**2, y))
    if isinstance(pred, FullGaussian):
        if pred.mean.ndim != 1:
            raise ValueError("full Gaussian NLL expects a single distribution")
        L = psd_factor(pred.cov)
        r = y - pred.mean
        z = np.linalg.solve(L, r)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        n = pred.dim
        return float(0.5 * (n * np.log(2.0 * np.pi) + logdet + z @ z))
    raise TypeError(f"unsupported prediction {type(pred).__name__}")


def cauchy_nll_marginal(loc, gamma, y):
    if np.any(ad.value(gamma) <= 0):
        raise NonpositiveScale("Cauchy NLL needs gamma > 0")
    z = (y - loc) / gamma
    per = ad.log(np.pi * gamma) + ad.log(1.0 + ad.square(z))
    return ad.mean(ad.sum_(per, axis=-1))


def cauchy_nll(pred: MarginalCauchy, y) -> float:
    return float(cauchy_nll_marginal(pred.loc, pred.scale, np.asarray(y, dtype=float)))


def softmax_ce(logits, target):
    """Softmax cross-entropy, max-subtracted; batch mean for 2-D logits."""
    single = np.ndim(ad.value(logits)) == 1
    if single:
        logits = ad.reshape(logits, (1, -1))
    labels = np.atleast_1d(np.asarray(target, dtype=int))
    m = ad.value(logits).max(axis=-1, keepdims=True)
    shifted = logits - m
    lse = ad.log(ad.sum_(ad.exp(shifted), axis=-1))
    picked = ad.reshape(ad.take_along_axis(shifted, labels[:, None], -1), (-1,))
    out = ad.mean(lse - picked)
    return float(out) if not ad.is_tensor(out) else out
