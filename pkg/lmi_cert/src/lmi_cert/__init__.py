"""Delay-dependent LMI certification of compensated estimation loops."""

from .certify import Certificate, certify, certify_at, sweep_hbar, verify
from .problem import LmiProblem, SchemaError, block_matrix, build_lmi

__all__ = ["Certificate", "LmiProblem", "SchemaError", "block_matrix",
           "build_lmi", "certify", "certify_at", "sweep_hbar", "verify"]
__version__ = "0.1.0"
