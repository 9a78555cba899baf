"""Decentralized optimal control of automated vehicles at a signal-free
intersection: closed-form control-zone and merging-zone trajectory solvers,
the FIFO coordination protocol that decouples them, brute-force verification
oracles, and an event-driven traffic simulator."""

from .config import (
    RunConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from .coordinator import (
    ConflictRelation,
    Coordinator,
    RelativeSets,
    build_conflict_table,
    conflict_relation,
    gap_transit_time,
    turn_time,
)
from .cz_solver import (
    CzProblem,
    SolveReport,
    cz_cost,
    solve_cz,
    solve_safety_no_exit,
    solve_safety_with_exit,
    solve_umax_arc,
    solve_unconstrained_fixed,
    solve_unconstrained_free,
    solve_vmax_arc,
)
from .errors import (
    CaseInapplicable,
    ConditioningError,
    ConfigError,
    CrossflowError,
    DomainError,
    InfeasibleError,
    SolverError,
    UnsupportedCaseError,
)
from .model import (
    ALL_MOVEMENTS,
    CostWeights,
    CzTrajectory,
    IntersectionConfig,
    Movement,
    MzTrajectory,
    Origin,
    Turn,
    VehicleRecord,
    eval_cz,
    eval_mz,
    path_length,
)
from .mz_solver import MzProblem, mz_objective, mz_residuals, solve_mz
from .oracle import GridSpec, brute_force_cz, brute_force_mz
from .sim import (
    ArrivalModel,
    FuelModelCoefficients,
    SimLog,
    Verdict,
    VehicleLog,
    fuel_rate,
    generate_arrivals,
    monitor,
    pareto_sweep_cz,
    pareto_sweep_mz,
    run,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
