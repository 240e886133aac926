"""hardypot: kernel estimates, capacities, barriers and fixed-point solvers
for elliptic operators with a Hardy potential singular on a boundary subsphere.
"""
from .backend import BACKEND
from .geometry import (
    DomainError,
    DomainModel,
    SpectralParams,
    alpha_pm,
    critical_exponents,
    spectral_params,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DomainError",
    "DomainModel",
    "SpectralParams",
    "alpha_pm",
    "critical_exponents",
    "spectral_params",
]
