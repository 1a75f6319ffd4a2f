"""Propagating stable distributions (Gaussian, Cauchy) through neural networks."""

__version__ = "0.1.0"

from .distributions import FullGaussian, MarginalCauchy, MarginalGaussian, MarginalStable
from .distprop import McEstimate, Method, propagate, pnn_sdp_combine
from .network import Network, PnnNetwork, forward, jacobian

__all__ = [
    "FullGaussian",
    "MarginalCauchy",
    "MarginalGaussian",
    "MarginalStable",
    "McEstimate",
    "Method",
    "Network",
    "PnnNetwork",
    "forward",
    "jacobian",
    "pnn_sdp_combine",
    "propagate",
]
