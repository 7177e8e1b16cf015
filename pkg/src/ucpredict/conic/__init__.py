"""Continuous conic programs (linear + second-order cones) and their solver."""

from .presolve import FixedProgram, fix_variables
from .program import (
    ConeBlock,
    ConeKind,
    ConeSpec,
    ConicProgram,
    ProgramBuilder,
    ResidualReport,
    dump,
    validate,
)
from .solver import ConicSolution, Residuals, SolverSettings, Status, solve

__all__ = [
    "ConeBlock",
    "ConeKind",
    "ConeSpec",
    "ConicProgram",
    "ConicSolution",
    "FixedProgram",
    "ProgramBuilder",
    "ResidualReport",
    "Residuals",
    "SolverSettings",
    "Status",
    "dump",
    "fix_variables",
    "solve",
    "validate",
]
