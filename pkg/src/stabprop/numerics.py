"""Linear algebra, special functions, and seeded sampling.

Random numbers come from numpy's ``Philox`` bit generator (a counter-based
generator) wrapped in a ``numpy.random.Generator``.  Gaussian variates use
numpy's ziggurat sampler; Cauchy variates use the inverse CDF
``x0 + gamma * tan(pi * (u - 1/2))``.
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy import special

from .errors import NotPsd

SeededRng = np.random.Generator

PSD_SYM_RTOL = 1e-9
PSD_EIG_RTOL = 1e-9
JITTER_START = 1e-9
JITTER_RETRIES = 3


def make_rng(seed: int) -> SeededRng:
    """Return a deterministic generator for a 64-bit ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(base_seed: int, *cell_id) -> int:
    """Stable 64-bit seed for an experiment cell, independent of ``PYTHONHASHSEED``."""
    key = repr((int(base_seed),) + tuple(cell_id)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def derive_rng(base_seed: int, *cell_id) -> SeededRng:
    return make_rng(derive_seed(base_seed, *cell_id))


def check_psd(m) -> np.ndarray:
    """Validate the PsdMatrix invariants and return ``m`` as a float array."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotPsd(f"covariance must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPsd("covariance has non-finite entries")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if np.abs(m - m.T).max(initial=0.0) > PSD_SYM_RTOL * scale:
        raise NotPsd("covariance is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (m + m.T))
    if eig.size and eig[0] < -PSD_EIG_RTOL * max(eig[-1], 1.0):
        raise NotPsd(f"covariance has negative eigenvalue {eig[0]:.3g}")
    return m


def psd_factor(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T`` approximately ``m``.

    Plain Cholesky is tried first.  Rank-deficient inputs (common after
    ReLU masking) get a diagonal jitter of ``1e-9 * trace / n`` that grows
    tenfold per retry, for at most three retries.
    """
    m = check_psd(m)
    n = m.shape[0]
    sym = 0.5 * (m + m.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    trace = float(np.trace(sym))
    if trace <= 0.0:
        # PSD with zero trace is the zero matrix
        return np.zeros_like(sym)
    jitter = JITTER_START * trace / n
    for _ in range(JITTER_RETRIES):
        try:
            return np.linalg.cholesky(sym + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPsd("Cholesky factorization failed after jitter retries")


def erf(x):
    """Error function; scipy wraps the Cephes rational approximations (abs. error < 1e-15)."""
    return special.erf(x)


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def standard_cauchy(rng: SeededRng, size) -> np.ndarray:
    u = rng.random(size)
    return np.tan(np.pi * (u - 0.5))


def sample(dist, n: int, rng: SeededRng) -> np.ndarray:
    """Draw ``n`` i.i.d. samples, returned as an ``(n, dim)`` array.

    Dimensions with scale 0 reproduce the location exactly.
    """
    # local import: distributions imports this module for validation
    from .distributions import FullGaussian, MarginalCauchy, MarginalGaussian

    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(dist, MarginalGaussian):
        z = rng.standard_normal((n, dist.dim))
        return dist.loc + z * dist.scale
    if isinstance(dist, MarginalCauchy):
        z = standard_cauchy(rng, (n, dist.dim))
        return dist.loc + z * dist.scale
    if isinstance(dist, FullGaussian):
        L = psd_factor(dist.cov)
        z = rng.standard_normal((n, dist.dim))
        return dist.mean + z @ L.T
    raise TypeError(f"cannot sample from {type(dist).__name__}")
