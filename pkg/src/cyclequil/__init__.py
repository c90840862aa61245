"""User equilibrium of skiers over cycles in a closed capacitated network."""

__version__ = "0.1.0"

from .network_model import (
    Cycle,
    CycleSet,
    Lift,
    ResortNetwork,
    Slope,
    build_theta,
    enumerate_cycles,
    load_network,
)
from .queue_steady_state import (
    QueueProblem,
    QueueSolution,
    solve,
    solve_parallel_slopes_analytic,
    solve_two_lift_analytic,
    verify_kkt,
)
from .equilibrium_solver import (
    EquilibriumRun,
    UtilityOracle,
    evaluate_utilities,
    extragradient_step,
    gap,
    project_simplex,
    solve_equilibrium,
)
from .des_validator import SimConfig, SimStats, simulate

__all__ = [
    "Cycle", "CycleSet", "Lift", "ResortNetwork", "Slope", "build_theta", "enumerate_cycles",
    "load_network", "QueueProblem", "QueueSolution", "solve", "solve_parallel_slopes_analytic",
    "solve_two_lift_analytic", "verify_kkt", "EquilibriumRun", "UtilityOracle", "evaluate_utilities",
    "extragradient_step", "gap", "project_simplex", "solve_equilibrium", "SimConfig", "SimStats",
    "simulate",
]
