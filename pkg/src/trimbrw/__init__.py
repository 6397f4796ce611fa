"""Trimmed branching random walks on a grid, their mean-field limit and stationary profiles."""
from __future__ import annotations

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .drift import DriftModel, MollifierSpec, RateTable, build_q_from_b, compute_h, validate_assumption1
from .grid import GridSpec
from .meanfield import SchemeConfig, solve, water_level_cap
from .operators import DiscreteGenerator, GridFunction, Semigroup, duality_residual, duhamel_residual
from .particle import ParticleConfiguration, SimSeed, simulate_coupled_pair, simulate_trimmed
from .coupling import contraction_report, simulate_coupled_walkers
from .stationary import example1, example2_critical, example2_flat, example2_sharp, weak_form_residual

__all__ = [
    "BACKEND",
    "DiscreteGenerator",
    "DriftModel",
    "GridFunction",
    "GridSpec",
    "MollifierSpec",
    "ParticleConfiguration",
    "RateTable",
    "SchemeConfig",
    "Semigroup",
    "SimSeed",
    "build_q_from_b",
    "compute_h",
    "contraction_report",
    "duality_residual",
    "duhamel_residual",
    "example1",
    "example2_critical",
    "example2_flat",
    "example2_sharp",
    "simulate_coupled_pair",
    "simulate_coupled_walkers",
    "simulate_trimmed",
    "solve",
    "validate_assumption1",
    "water_level_cap",
    "weak_form_residual",
]
