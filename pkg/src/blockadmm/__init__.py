"""Multi-block splitting solvers for linearly coupled convex programs.

The package provides six iteration schemes behind one interface
(:func:`blockadmm.solve`), the proximal toolkit they build on, seeded
problem generators for smart-grid workloads, and a scenario CLI that emits
convergence traces.
"""

from .problem import (
    BlockSpec,
    Diagnostics,
    DimensionMismatchError,
    EmptyProblemError,
    IterateState,
    ProblemSpec,
    assemble_problem,
    compute_diagnostics,
    coupling_residual,
    eval_augmented_lagrangian,
    eval_finite_objective,
    eval_objective,
)
from .prox import (
    BlockSubproblemSolver,
    IllPosedSubproblemError,
    LocalSet,
    ObjectiveHandle,
    SubproblemRequest,
    project_box,
    project_zero_sum,
    prox_l1,
    solve_block_subproblem,
)
from .solvers import (
    CONVERGED,
    DIVERGED,
    ILL_POSED,
    MAX_ITER,
    SCHEMES,
    ConfigurationError,
    GbsOperators,
    IterationEvent,
    SolveReport,
    SolverConfig,
    StoppingScale,
    TraceRecord,
    build_gbs_operators,
    default_prox_matrices,
    solve,
    solve_gauss_seidel,
    solve_gbs,
    solve_jacobi,
    solve_prox_jacobi,
    solve_two_block,
    solve_variable_splitting,
    stopping_and_divergence_check,
)

__version__ = "0.1.0"
