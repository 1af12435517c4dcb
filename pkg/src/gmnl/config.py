"""Numerical tolerances and enumeration caps shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    probability: float = 1e-12      # entries of a behavior lie in [-tol, 1 + tol]
    normalization: float = 1e-10    # sum_a p(a|x) = 1
    nonsignaling: float = 1e-10     # marginal discrepancy
    state_norm: float = 1e-12
    hermitian: float = 1e-12
    trace: float = 1e-12
    eigenvalue: float = -1e-10      # smallest admissible eigenvalue of a state
    completeness: float = 1e-10     # sum of effects = identity
    bound: float = 1e-9             # margin slack for classical bound checks
    canonical_residual: float = 1e-8
    alpha_root: float = 1e-12


@dataclass(frozen=True)
class Caps:
    hilbert_dimension: int = 3**10
    gamma_parties: int = 12
    local_strategies: int = 10**7


TOL = Tolerances()
CAPS = Caps()
