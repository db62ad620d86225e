"""Gaussian free field on metric graphs.

Modules
-------
network     exact electrical-network computations
laws        closed-form one-dimensional laws and inverse-CDF samplers
fieldsim    exact field sampling, refinement, log-density
metric      local-time pseudo-metric and infimum field at vertices
fps         first passage sets, metric balls and resistance observables
stats       counter-based random streams and statistical tests
cli         command-line interface (``gffm``)
"""

from .network import (
    BoundarySpec,
    Edge,
    GreenMatrix,
    KernelMatrix,
    Network,
    NetworkError,
    effective_kernel,
    load_network,
    two_point_resistance,
)
from .stats import RandomStream

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "Edge",
    "GreenMatrix",
    "KernelMatrix",
    "Network",
    "NetworkError",
    "RandomStream",
    "effective_kernel",
    "load_network",
    "two_point_resistance",
]
