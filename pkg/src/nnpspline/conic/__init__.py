"""Second-order cone programming: cones, programs and an interior-point solver."""

from .cones import (
    CONE_KINDS,
    Cone,
    ConeProgram,
    dump_program,
    load_program,
    membership,
    rotate_to_standard,
)
from .solver import STATUSES, Solution, SolverSettings, kkt_residuals, solve

__all__ = [
    "CONE_KINDS",
    "Cone",
    "ConeProgram",
    "dump_program",
    "load_program",
    "membership",
    "rotate_to_standard",
    "STATUSES",
    "Solution",
    "SolverSettings",
    "kkt_residuals",
    "solve",
]
