from .solve import (
    RoundingResult,
    SolveResult,
    SolverConfig,
    compute_epsilon_gap,
    enumerate_exact_kkt,
    projected_gradient_solve,
    round_to_exact,
)
from .hull import GradientHull, KKT2DVerdict, check_2dlinear_kkt, circuit_gradient_hull

__all__ = [
    "SolverConfig",
    "SolveResult",
    "RoundingResult",
    "projected_gradient_solve",
    "enumerate_exact_kkt",
    "compute_epsilon_gap",
    "round_to_exact",
    "GradientHull",
    "KKT2DVerdict",
    "circuit_gradient_hull",
    "check_2dlinear_kkt",
]
