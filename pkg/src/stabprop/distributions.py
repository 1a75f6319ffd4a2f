"""Parametric location/scale families carried through networks.

Every family accepts leading batch dimensions: ``loc`` has shape
``(..., n)``; a full covariance has shape ``(..., n, n)``.  A scale of 0 is
the Dirac delta at the location.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NotPsd
from .numerics import PSD_EIG_RTOL, PSD_SYM_RTOL


def _vec(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _loc_scale(loc, scale, kind):
    loc = _vec(loc, "loc")
    scale = _vec(scale, "scale")
    if loc.shape != scale.shape:
        raise DimMismatch(f"{kind}: loc shape {loc.shape} != scale shape {scale.shape}")
    if np.any(scale < 0):
        raise ValueError(f"{kind}: scale entries must be >= 0")
    return loc, scale


@dataclass(frozen=True)
class MarginalGaussian:
    """Independent normals with per-dimension standard deviation ``scale``."""

    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc, scale = _loc_scale(self.loc, self.scale, "MarginalGaussian")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.loc.shape[-1]

    def to_full(self) -> "FullGaussian":
        var = self.scale**2
        cov = var[..., :, None] * np.eye(self.dim)
        return FullGaussian(self.loc, cov)


@dataclass(frozen=True)
class FullGaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _vec(self.mean, "mean")
        cov = np.asarray(self.cov, dtype=float)
        n = mean.shape[-1]
        if cov.shape != mean.shape + (n,):
            raise DimMismatch(f"FullGaussian: cov shape {cov.shape} does not match mean {mean.shape}")
        if not np.all(np.isfinite(cov)):
            raise NotPsd("covariance has non-finite entries")
        scale = np.maximum(np.abs(cov).max(axis=(-2, -1), initial=0.0), 1.0)
        asym = np.abs(cov - np.swapaxes(cov, -1, -2)).max(axis=(-2, -1), initial=0.0)
        if np.any(asym > PSD_SYM_RTOL * scale):
            raise NotPsd("covariance is not symmetric")
        eig = np.linalg.eigvalsh(0.5 * (cov + np.swapaxes(cov, -1, -2)))
        if np.any(eig[..., 0] < -PSD_EIG_RTOL * np.maximum(eig[..., -1], 1.0)):
            raise NotPsd("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def loc(self) -> np.ndarray:
        return self.mean

    @property
    def scale(self) -> np.ndarray:
        """Marginal standard deviations."""
        return np.sqrt(np.clip(np.diagonal(self.cov, axis1=-2, axis2=-1), 0.0, None))


@dataclass(frozen=True)
class MarginalCauchy:
    """Independent Cauchy components with median ``loc`` and scale ``gamma``."""

    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc, scale = _loc_scale(self.loc, self.scale, "MarginalCauchy")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.loc.shape[-1]


@dataclass(frozen=True)
class MarginalStable:
    loc: np.ndarray
    scale: np.ndarray
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        loc, scale = _loc_scale(self.loc, self.scale, "MarginalStable")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not -1.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [-1, 1], got {self.beta}")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def dim(self) -> int:
        return self.loc.shape[-1]


def same_family(dist, loc, scale_or_cov):
    """Rebuild a distribution of ``dist``'s family with new parameters."""
    if isinstance(dist, FullGaussian):
        return FullGaussian(loc, scale_or_cov)
    if isinstance(dist, MarginalStable):
        return MarginalStable(loc, scale_or_cov, dist.alpha, dist.beta)
    return type(dist)(loc, scale_or_cov)
