from msoqn.solvers.base import (
    EvaluationRequest,
    Finished,
    InvalidBounds,
    NeedEvaluation,
    Phase,
    SolverConfig,
    Termination,
    Variant,
    projected_gradient,
)
from msoqn.solvers.qn import (
    ClampWarning,
    DenseBfgsSolver,
    LbfgsbSolver,
    QuasiNewtonSolver,
    approx_inverse_hessian,
    minimize,
    solver_new,
    solver_step,
)

__all__ = [
    "ClampWarning", "DenseBfgsSolver", "EvaluationRequest", "Finished", "InvalidBounds",
    "LbfgsbSolver", "NeedEvaluation", "Phase", "QuasiNewtonSolver",
    "SolverConfig", "Termination", "Variant", "approx_inverse_hessian", "minimize",
    "projected_gradient", "solver_new", "solver_step",
]
