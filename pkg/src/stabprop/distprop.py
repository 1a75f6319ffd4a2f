"""Propagating Gaussian, Cauchy and alpha-stable inputs through networks.

Affine layers are handled exactly.  Non-linearities use local
linearization, ``(mu, sigma) -> (f(mu), |f'(mu)| sigma)``, which for ReLU
keeps ``(mu, sigma)`` when ``mu >= 0`` and collapses to the point mass
``(0, 0)`` otherwise.  The full-covariance route evaluates one Jacobian of
the whole network instead of materializing per-layer covariances.

Baselines: marginal moment matching (assumed density filtering) and a
Monte-Carlo estimate that refits the family to ``k`` propagated samples.

The ``_marginal_*`` kernels work on ndarrays and on autodiff tensors, so the
same code path is used for evaluation and for training.  Gaussian kernels
carry variances; Cauchy kernels carry scales.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import autodiff as ad
from .distributions import FullGaussian, MarginalCauchy, MarginalGaussian, MarginalStable
from .errors import DimMismatch, IncompatibleMethod, NegativeWeight
from .network import Activation, Dense, MaxPool, Network, PnnNetwork, activation_slope, activation_value
from .network import forward, jacobian
from .numerics import sample


class Method(str, enum.Enum):
    SDP_FULL = "sdp_full"
    SDP_MARGINAL_GAUSSIAN = "sdp_marginal_gaussian"
    SDP_MARGINAL_CAUCHY = "sdp_marginal_cauchy"
    MARGINAL_MOMENT_MATCH = "marginal_moment_match"


@dataclass(frozen=True)
class McEstimate:
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("McEstimate needs k >= 2")

    @property
    def value(self) -> str:
        return f"mc_{self.k}"


PropagationMethod = Union[Method, McEstimate]


def parse_method(text: str) -> PropagationMethod:
    """Parse ``"sdp_full"``, ``"mc_100"`` and friends."""
    if isinstance(text, (Method, McEstimate)):
        return text
    t = text.strip().lower()
    if t.startswith("mc"):
        return McEstimate(int(t.lstrip("mc_:= ") or 100))
    return Method(t)


def _check_affine(dim, W, b):
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    if W.ndim != 2 or W.shape[1] != dim or b.shape != (W.shape[0],):
        raise DimMismatch(f"W {W.shape} / b {b.shape} do not fit input dimension {dim}")
    return W, b


# --- array kernels ---------------------------------------------------------


def _affine_loc(loc, W, b):
    return loc @ ad.swapaxes(W, -1, -2) + b


def _marginal_dense(layer, loc, s, family):
    W = layer.weights
    new_loc = _affine_loc(loc, W, layer.bias)
    if family == "gaussian":
        new_s = s @ ad.swapaxes(ad.square(W), -1, -2)
    else:
        new_s = s @ ad.swapaxes(ad.abs_(W), -1, -2)
    return new_loc, new_s


def _marginal_linearize(layer, loc, s, family):
    slope = activation_slope(layer.kind, loc, layer.slope)
    new_loc = activation_value(layer.kind, loc, layer.slope)
    if family == "gaussian":
        return new_loc, s * ad.square(slope)
    return new_loc, s * ad.abs_(slope)


def _marginal_maxpool(layer, loc, s):
    idx = ad.group_max_index(loc, layer.group_size)
    return ad.group_take(loc, idx, layer.group_size), ad.group_take(s, idx, layer.group_size)


def relu_moments(mu, var):
    """Mean and variance of ``ReLU(N(mu, var))``; zero-variance inputs pass through."""
    mu_v = ad.value(mu)
    var_v = ad.value(var)
    live = var_v > 0
    sigma = ad.sqrt(ad.where(live, var, 1.0))
    z = mu / sigma
    cdf = ad.normal_cdf(z)
    pdf = ad.normal_pdf(z)
    m = mu * cdf + sigma * pdf
    second = (ad.square(mu) + ad.square(sigma)) * cdf + mu * sigma * pdf
    v = ad.maximum(second - ad.square(m), 0.0)
    dead_mean = np.where(mu_v >= 0, mu_v, 0.0)
    return ad.where(live, m, dead_mean), ad.where(live, v, 0.0)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(64)


def sigmoid_moments_quadrature(mu, var):
    """Mean and variance of ``sigmoid(N(mu, var))`` by 64-node Gauss-Hermite quadrature."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.sqrt(np.asarray(var, dtype=float))
    x = mu[..., None] + np.sqrt(2.0) * sigma[..., None] * _GH_NODES
    s = 1.0 / (1.0 + np.exp(-x))
    w = _GH_WEIGHTS / np.sqrt(np.pi)
    m = (s * w).sum(-1)
    m2 = (s * s * w).sum(-1)
    return m, np.maximum(m2 - m * m, 0.0)


def propagate_marginal(net: Network, loc, s, family: str = "gaussian", rule: str = "sdp", sigmoid_quadrature=False):
    """Layer-by-layer marginal propagation.

    ``s`` is the variance for ``family="gaussian"`` and the scale for
    ``"cauchy"``.  ``rule="mm"`` uses moment matching at ReLUs (Gaussian only)
    and, with ``sigmoid_quadrature``, at logistic sigmoids.
    """
    for layer in net.layers:
        if isinstance(layer, Dense):
            loc, s = _marginal_dense(layer, loc, s, family)
        elif isinstance(layer, MaxPool):
            loc, s = _marginal_maxpool(layer, loc, s)
        elif rule == "mm" and layer.kind == "relu":
            loc, s = relu_moments(loc, s)
        elif rule == "mm" and layer.kind == "sigmoid" and sigmoid_quadrature:
            loc, s = sigmoid_moments_quadrature(ad.value(loc), ad.value(s))
        else:
            loc, s = _marginal_linearize(layer, loc, s, family)
    return loc, s


# --- public single-layer operations ---------------------------------------


def push_affine(dist, W, b):
    """Exact pushforward through ``x -> x @ W.T + b``."""
    W, b = _check_affine(dist.dim, W, b)
    loc = _affine_loc(dist.loc, W, b)
    if isinstance(dist, FullGaussian):
        cov = W @ dist.cov @ W.T
        return FullGaussian(loc, 0.5 * (cov + np.swapaxes(cov, -1, -2)))
    if isinstance(dist, MarginalGaussian):
        return MarginalGaussian(loc, np.sqrt(dist.scale**2 @ (W**2).T))
    if isinstance(dist, MarginalCauchy):
        return MarginalCauchy(loc, dist.scale @ np.abs(W).T)
    raise TypeError(f"push_affine does not handle {type(dist).__name__}")


def push_affine_stable(dist: MarginalStable, W, b, mode: str = "exact") -> MarginalStable:
    """Affine map of a marginal alpha-stable vector.

    ``mode="exact"`` requires non-negative weights unless the distribution
    is symmetric (``beta == 0``).  ``mode="upper_bound"`` accepts any weights
    and returns a stable law whose spread is at least the true one.
    """
    W, b = _check_affine(dist.dim, W, b)
    if mode not in ("exact", "upper_bound"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exact" and np.any(W < 0) and dist.beta != 0.0:
        raise NegativeWeight("exact alpha-stable propagation needs W >= 0 or beta == 0")
    a = dist.alpha
    scale = (dist.scale**a @ (np.abs(W) ** a).T) ** (1.0 / a)
    return MarginalStable(_affine_loc(dist.loc, W, b), scale, a, dist.beta)


def push_activation(dist, kind: str, slope: float = 0.01):
    """Local linearization of an elementwise activation."""
    layer = Activation(kind, slope)
    d = activation_slope(kind, dist.loc, slope)
    loc = activation_value(kind, dist.loc, slope)
    if isinstance(dist, FullGaussian):
        cov = d[..., :, None] * dist.cov * d[..., None, :]
        return FullGaussian(loc, cov)
    if isinstance(dist, MarginalGaussian):
        _, var = _marginal_linearize(layer, dist.loc, dist.scale**2, "gaussian")
        return MarginalGaussian(loc, np.sqrt(var))
    if isinstance(dist, (MarginalCauchy, MarginalStable)):
        scale = dist.scale * np.abs(d)
        if isinstance(dist, MarginalStable):
            return MarginalStable(loc, scale, dist.alpha, dist.beta)
        return MarginalCauchy(loc, scale)
    raise TypeError(f"push_activation does not handle {type(dist).__name__}")


def push_maxpool(dist, group_size: int):
    """Max over consecutive groups; the scale follows the arg-max location."""
    if dist.dim % group_size:
        raise DimMismatch(f"group size {group_size} does not divide width {dist.dim}")
    loc, scale = _marginal_maxpool(MaxPool(group_size), dist.loc, dist.scale)
    if isinstance(dist, MarginalGaussian):
        return MarginalGaussian(loc, scale)
    if isinstance(dist, MarginalCauchy):
        return MarginalCauchy(loc, scale)
    raise TypeError(f"push_maxpool does not handle {type(dist).__name__}")


def moment_match_relu(dist: MarginalGaussian) -> MarginalGaussian:
    m, v = relu_moments(dist.loc, dist.scale**2)
    return MarginalGaussian(m, np.sqrt(v))


# --- whole-network propagation ---------------------------------------------


def _sdp_full(net, dist):
    if isinstance(dist, MarginalGaussian):
        J = jacobian(net, dist.loc)
        cov = (J * (dist.scale**2)[..., None, :]) @ np.swapaxes(J, -1, -2)
    elif isinstance(dist, FullGaussian):
        J = jacobian(net, dist.mean)
        cov = J @ dist.cov @ np.swapaxes(J, -1, -2)
    else:
        raise IncompatibleMethod("SdpFull needs a Gaussian input")
    mean = forward(net, dist.loc)
    return FullGaussian(mean, 0.5 * (cov + np.swapaxes(cov, -1, -2)))


def fit_gaussian(samples: np.ndarray) -> FullGaussian:
    """Sample mean and unbiased covariance of an ``(k, ..., n)`` sample array."""
    mean = samples.mean(axis=0)
    c = samples - mean
    cov = np.einsum("k...i,k...j->...ij", c, c) / (samples.shape[0] - 1)
    return FullGaussian(mean, 0.5 * (cov + np.swapaxes(cov, -1, -2)))


def fit_cauchy(samples: np.ndarray) -> MarginalCauchy:
    """Componentwise median and half the interquartile range."""
    q1, med, q3 = np.percentile(samples, [25.0, 50.0, 75.0], axis=0)
    return MarginalCauchy(med, np.maximum(q3 - q1, 0.0) / 2.0)


def _mc_estimate(net, dist, k, rng):
    if rng is None:
        raise ValueError("McEstimate needs an rng")
    if isinstance(dist, (MarginalGaussian, MarginalCauchy)) and dist.loc.ndim == 1:
        xs = sample(dist, k, rng)
    else:
        # batched input: draw (k, ..., n) directly
        z = rng.standard_normal((k,) + dist.loc.shape)
        if isinstance(dist, MarginalGaussian):
            xs = dist.loc + z * dist.scale
        elif isinstance(dist, MarginalCauchy):
            xs = dist.loc + np.tan(np.pi * (rng.random((k,) + dist.loc.shape) - 0.5)) * dist.scale
        else:
            from .numerics import psd_factor

            if dist.mean.ndim != 1:
                raise IncompatibleMethod("batched FullGaussian is not supported by McEstimate")
            xs = dist.mean + z @ psd_factor(dist.cov).T
    ys = forward(net, xs)
    if isinstance(dist, MarginalCauchy):
        return fit_cauchy(ys)
    return fit_gaussian(ys)


def propagate(net: Network, dist, method, rng=None, *, cauchy_correlated=False, sigmoid_quadrature=False):
    """Push ``dist`` through ``net`` with the given propagation method.

    ``cauchy_correlated`` switches marginal Cauchy SDP to the whole-network
    rule ``gamma_y = gamma @ |J|.T`` which keeps input correlations.  Moment
    matching linearizes activations other than ReLU unless
    ``sigmoid_quadrature`` asks for quadrature moments at sigmoids.
    """
    method = parse_method(method)
    if dist.dim != net.input_dim:
        raise DimMismatch(f"input dimension {dist.dim} != network input {net.input_dim}")
    if isinstance(method, McEstimate):
        return _mc_estimate(net, dist, method.k, rng)
    if method is Method.SDP_FULL:
        return _sdp_full(net, dist)
    if method is Method.SDP_MARGINAL_GAUSSIAN:
        if not isinstance(dist, MarginalGaussian):
            raise IncompatibleMethod("marginal Gaussian SDP needs a MarginalGaussian input")
        loc, var = propagate_marginal(net, dist.loc, dist.scale**2, "gaussian", "sdp")
        return MarginalGaussian(loc, np.sqrt(var))
    if method is Method.SDP_MARGINAL_CAUCHY:
        if not isinstance(dist, MarginalCauchy):
            raise IncompatibleMethod("marginal Cauchy SDP needs a MarginalCauchy input")
        if cauchy_correlated:
            J = jacobian(net, dist.loc)
            gamma = (np.abs(J) @ dist.scale[..., None])[..., 0]
            return MarginalCauchy(forward(net, dist.loc), gamma)
        loc, gamma = propagate_marginal(net, dist.loc, dist.scale, "cauchy", "sdp")
        return MarginalCauchy(loc, gamma)
    if method is Method.MARGINAL_MOMENT_MATCH:
        if not isinstance(dist, MarginalGaussian):
            raise IncompatibleMethod("moment matching needs a MarginalGaussian input")
        loc, var = propagate_marginal(
            net, dist.loc, dist.scale**2, "gaussian", "mm", sigmoid_quadrature=sigmoid_quadrature
        )
        return MarginalGaussian(loc, np.sqrt(var))
    raise IncompatibleMethod(f"unknown method {method!r}")


def pnn_sdp_combine(pnn: PnnNetwork, x, input_cov) -> FullGaussian:
    """Output law of a PNN under Gaussian input noise.

    Mean is the mean head; covariance adds the predicted variance to
    ``J Sigma_x J.T`` with ``J`` the Jacobian of the mean path only.
    """
    x = np.asarray(x, dtype=float)
    input_cov = np.asarray(input_cov, dtype=float)
    n = pnn.input_dim
    if x.shape[-1] != n or input_cov.shape[-2:] != (n, n):
        raise DimMismatch("input or covariance does not match PNN input dimension")
    mu, var = pnn.predict(x)
    J = jacobian(pnn.mean_network(), x)
    cov = J @ input_cov @ np.swapaxes(J, -1, -2)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    cov = cov + var[..., :, None] * np.eye(pnn.output_dim)
    return FullGaussian(mu, cov)
