"""Deterministic IEC 61850 substation network simulator with SDN-based attack mitigation."""

from scsim.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
