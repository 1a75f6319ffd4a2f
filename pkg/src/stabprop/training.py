"""Adam training loops for plain, propagation-aware, and PNN models.

Gradients flow through marginal propagation only; the full-covariance
Jacobian route is used for evaluation, never on the training tape.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .distprop import propagate_marginal
from .errors import NonFiniteLoss
from .losses import cauchy_nll_marginal, gaussian_nll_marginal, pairwise_loss, softmax_ce
from .network import PnnNetwork, forward

log = logging.getLogger(__name__)

LOSS_KINDS = (
    "softmax_ce",
    "pairwise_gaussian",
    "pairwise_cauchy",
    "gaussian_nll",
    "cauchy_nll",
    "sdp_nll",
    "pnn_nll",
    "sdp_pnn_nll",
)
VAR_FLOOR = 1e-10


@dataclass(frozen=True)
class LossSpec:
    kind: str
    input_scale: float = 0.0  # sigma (Gaussian) or gamma (Cauchy) of the input noise

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.input_scale < 0:
            raise ValueError("input_scale must be >= 0")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 128
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)


class Adam:
    """Adam with L2 weight decay added to the gradient."""

    def __init__(self, params, cfg: AdamConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if c.weight_decay:
                g = g + c.weight_decay * p
            self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
            mhat = self.m[i] / (1 - c.beta1**self.t)
            vhat = self.v[i] / (1 - c.beta2**self.t)
            out.append(p - c.lr * mhat / (np.sqrt(vhat) + c.eps))
        return out


def _mean_net(model):
    return model.mean_network() if isinstance(model, PnnNetwork) else model


def regression_moments(model, x, spec: LossSpec):
    """Predicted mean and variance (1-D outputs keep their last axis)."""
    var_in = spec.input_scale**2
    if spec.kind in ("pnn_nll", "sdp_pnn_nll"):
        mu_pnn, var_pnn = model.predict(x)
        if spec.kind == "pnn_nll":
            return mu_pnn, var_pnn
        mu, var_sdp = propagate_marginal(_mean_net(model), x, np.full(ad.value(x).shape, var_in), "gaussian")
        return mu, var_pnn + var_sdp + VAR_FLOOR
    mu, var = propagate_marginal(model, x, np.full(ad.value(x).shape, var_in), "gaussian")
    return mu, var + VAR_FLOOR


def batch_loss(model, x, y, spec: LossSpec):
    if spec.kind == "softmax_ce":
        return softmax_ce(forward(model, x), y)
    if spec.kind == "pairwise_gaussian":
        loc, var = propagate_marginal(model, x, np.full(ad.value(x).shape, spec.input_scale**2), "gaussian")
        return pairwise_loss(loc, var, y, "gaussian")
    if spec.kind == "pairwise_cauchy":
        loc, gamma = propagate_marginal(model, x, np.full(ad.value(x).shape, spec.input_scale), "cauchy")
        return pairwise_loss(loc, gamma, y, "cauchy")
    if spec.kind == "cauchy_nll":
        loc, gamma = propagate_marginal(model, x, np.full(ad.value(x).shape, spec.input_scale), "cauchy")
        return cauchy_nll_marginal(loc, gamma + VAR_FLOOR, y.reshape(ad.value(loc).shape))
    mu, var = regression_moments(model, x, spec)
    return gaussian_nll_marginal(mu, var, y.reshape(ad.value(mu).shape))


def evaluate_loss(model, x, y, spec: LossSpec) -> float:
    return float(ad.value(batch_loss(model, x, y, spec)))


def train(model, x, y, spec: LossSpec, cfg: AdamConfig, rng, val=None):
    """Mini-batch Adam; returns ``(trained_model, History)``.

    ``val`` is an optional ``(x_val, y_val)`` pair whose loss is logged per epoch.
    Raises NonFiniteLoss on a NaN/inf batch loss.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    params = [np.array(p, dtype=float) for p in model.params()]
    opt = Adam(params, cfg)
    hist = History()
    n = len(x)
    bs = min(cfg.batch_size, n) if cfg.batch_size > 0 else n
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n) if bs < n else np.arange(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            tensors = [ad.Tensor(p, requires_grad=True) for p in params]
            with ad.GradTape() as tape:
                loss = batch_loss(model.with_params(tensors), x[idx], y[idx], spec)
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise NonFiniteLoss(f"loss {lv} at epoch {epoch}, batch starting {start} ({spec.kind})")
            grads = tape.gradient(loss, tensors)
            params = opt.step(params, grads)
            total += lv * len(idx)
        hist.train_loss.append(total / n)
        if val is not None:
            hist.val_loss.append(evaluate_loss(model.with_params(params), val[0], val[1], spec))
        if epoch % max(1, cfg.epochs // 10) == 0:
            log.debug("epoch %d loss %.6g", epoch, hist.train_loss[-1])
    return model.with_params(params), hist


def accuracy(model, x, y) -> float:
    return float((np.argmax(forward(_mean_net(model), x), axis=-1) == np.asarray(y)).mean())
