"""The six block-splitting iteration engines behind one solve interface.

Schemes
-------
``two_block``
    Classic alternating minimization for exactly two blocks.
``gauss_seidel``
    Direct sequential extension to N blocks. Not necessarily convergent;
    the divergence test is active.
``jacobi``
    Direct simultaneous extension. Not necessarily convergent either, but
    block updates run concurrently.
``variable_splitting``
    Auxiliary per-block variables ``z_i`` with ``A_i x_i + z_i = c/N`` and a
    zero-sum constraint on ``z``; recovers the two-group structure with
    per-block multipliers.
``gbs``
    Gauss-Seidel prediction sweep followed by a backward block correction
    solving ``M'(v+ - v) = alpha * H (v~ - v)``.
``prox_jacobi``
    Jacobi updates with an added proximal term ``0.5 ||x_i - x_i^k||^2_{P_i}``
    and a damped multiplier step ``lam -= gamma * rho * residual``.

All engines share the subproblem machinery of :mod:`blockadmm.prox`, a
combined absolute/relative stopping rule, and a divergence test that fires
when the residual exceeds one million times its initial value (or turns
non-finite). Traces carry one record per iteration, starting with the
initial point at ``k = 0``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .problem import (
    IterateState,
    ProblemSpec,
    coupling_residual,
    eval_finite_objective,
)
from .prox import BlockSubproblemSolver, IllPosedSubproblemError, project_zero_sum

__all__ = [
    "ConfigurationError",
    "SolverConfig",
    "TraceRecord",
    "SolveReport",
    "IterationEvent",
    "StoppingScale",
    "GbsOperators",
    "build_gbs_operators",
    "stopping_and_divergence_check",
    "default_prox_matrices",
    "solve",
    "solve_two_block",
    "solve_gauss_seidel",
    "solve_jacobi",
    "solve_variable_splitting",
    "solve_gbs",
    "solve_prox_jacobi",
    "SCHEMES",
    "CONVERGED",
    "MAX_ITER",
    "DIVERGED",
    "ILL_POSED",
    "CONTINUE",
]

SCHEMES = (
    "two_block",
    "gauss_seidel",
    "jacobi",
    "variable_splitting",
    "gbs",
    "prox_jacobi",
)

CONVERGED = "converged"
MAX_ITER = "max_iter"
DIVERGED = "diverged"
ILL_POSED = "ill_posed"
CONTINUE = "continue"

DIVERGENCE_FACTOR = 1e6


class ConfigurationError(ValueError):
    """Solver configuration is inconsistent with the scheme or the problem."""


@dataclass
class SolverConfig:
    """Scheme selection plus the shared iteration parameters.

    ``alpha`` applies to ``gbs`` only and must lie in (0, 1). ``gamma`` and
    ``prox_policy`` apply to ``prox_jacobi`` only; the policy is either
    ``"standard"`` (``P_i = tau_i I - rho A_i'A_i`` with
    ``tau_i = 1.01 rho N smax(A_i)^2``), ``"zero"``, or a callable
    ``(problem, block_index, rho) -> matrix`` returning a symmetric PSD
    matrix.
    """

    scheme: str = "two_block"
    rho: float = 1.0
    alpha: float = 0.9
    gamma: float = 1.0
    prox_policy: object = "standard"
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iter: int = 100_000
    parallel_workers: int = 1

    def validate(self, scheme: str | None = None) -> None:
        scheme = self.scheme if scheme is None else scheme
        if scheme not in SCHEMES:
            raise ConfigurationError(
                f"unknown scheme {scheme!r}; valid schemes: {', '.join(SCHEMES)}"
            )
        if self.rho <= 0:
            raise ConfigurationError("rho must be positive")
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if self.parallel_workers < 1:
            raise ConfigurationError("parallel_workers must be at least 1")
        if scheme == "gbs" and not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1) for gbs")
        if scheme == "prox_jacobi":
            if self.gamma <= 0:
                raise ConfigurationError("gamma must be positive for prox_jacobi")
            if not callable(self.prox_policy) and self.prox_policy not in (
                "standard",
                "zero",
            ):
                raise ConfigurationError(
                    "prox_policy must be 'standard', 'zero', or a callable"
                )


@dataclass(frozen=True)
class TraceRecord:
    """One trace row: iteration counter and its diagnostics."""

    k: int
    objective: float
    primal_residual_norm: float
    iterate_change: float
    wall_ms: float


@dataclass(eq=False)
class SolveReport:
    """Outcome of a solve: status, final iterate, full trace."""

    status: str
    final_state: IterateState
    trace: list[TraceRecord]
    iterations: int


@dataclass(eq=False)
class IterationEvent:
    """Per-iteration observer payload: states plus scheme-specific vectors.

    ``extras`` always includes ``"residual"``, the exact residual vector the
    engine used for its trace entry; scheme-specific keys are documented on
    each engine.
    """

    k: int
    prev: IterateState
    state: IterateState
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StoppingScale:
    """Scales entering the stopping rule at the current iterate."""

    residual_scale: float
    sqrt_m: float
    iterate_scale: float


def _residual_ok(r: float, config: SolverConfig, scale: StoppingScale) -> bool:
    return r <= config.eps_abs * scale.sqrt_m + config.eps_rel * scale.residual_scale


def stopping_and_divergence_check(
    trace: list[TraceRecord], config: SolverConfig, scale: StoppingScale
) -> str:
    """Decide continue/converged/diverged/max_iter from the latest record.

    Converged requires both the combined absolute/relative residual test and
    a small iterate change; diverged fires on a non-finite residual or one
    exceeding ``1e6 * (1 + initial residual)``. The record at ``k = 0``
    carries no step, so it never certifies convergence by itself; engines
    confirm a feasible start with one probe iteration instead.
    """
    if not trace:
        raise ValueError("trace must be nonempty")
    last = trace[-1]
    r = last.primal_residual_norm
    if not math.isfinite(r) or not math.isfinite(last.iterate_change):
        return DIVERGED
    if r > DIVERGENCE_FACTOR * (1.0 + trace[0].primal_residual_norm):
        return DIVERGED
    if (
        last.k >= 1
        and _residual_ok(r, config, scale)
        and last.iterate_change <= config.eps_abs * scale.iterate_scale
    ):
        return CONVERGED
    if last.k >= config.max_iter:
        return MAX_ITER
    return CONTINUE


# ---------------------------------------------------------------------------
# shared engine plumbing
# ---------------------------------------------------------------------------


def _residual_excluding(problem: ProblemSpec, xs, skip: int) -> np.ndarray:
    """``sum_{j != skip} A_j x_j - c`` accumulated left to right."""
    acc = np.zeros(problem.m)
    for j, b in enumerate(problem.blocks):
        if j != skip:
            acc += b.coupling @ xs[j]
    acc -= problem.rhs
    return acc


def _linear_coeff(problem, i, xs, lam, rho):
    """Linear coefficient of block ``i``'s subproblem: ``A_i'(rho r_i - lam)``."""
    r = _residual_excluding(problem, xs, i)
    return problem.blocks[i].coupling.T @ (rho * r - lam)


def _block_solvers(problem, rho, extra=None):
    solvers = []
    for i, b in enumerate(problem.blocks):
        quad = rho * (b.coupling.T @ b.coupling)
        if extra is not None:
            quad = quad + extra[i]
        solvers.append(BlockSubproblemSolver(b.objective, quad, b.local_set))
    return solvers


def _prepare_state(problem, x0, splitting=False):
    n_blocks = problem.num_blocks
    m = problem.m
    if x0 is None:
        xs = tuple(b.local_set.project(np.zeros(b.n)) for b in problem.blocks)
        lam = np.zeros(n_blocks * m if splitting else m)
        z = tuple(np.zeros(m) for _ in range(n_blocks)) if splitting else None
        return IterateState(x=xs, lam=lam, z=z, k=0)
    xs = tuple(np.asarray(v, dtype=float) for v in x0.x)
    if len(xs) != n_blocks:
        raise ConfigurationError("initial state has the wrong number of blocks")
    for v, b in zip(xs, problem.blocks):
        if v.shape != (b.n,):
            raise ConfigurationError("initial block vector has the wrong length")
    lam = np.asarray(x0.lam, dtype=float)
    if splitting:
        if lam.shape == (m,):
            lam = np.tile(lam, n_blocks)
        elif lam.shape != (n_blocks * m,):
            raise ConfigurationError(
                "variable splitting needs a multiplier of length m or N*m"
            )
        if x0.z is not None:
            z = tuple(np.asarray(v, dtype=float) for v in x0.z)
            if len(z) != n_blocks or any(v.shape != (m,) for v in z):
                raise ConfigurationError("initial z has the wrong shape")
        else:
            z = tuple(np.zeros(m) for _ in range(n_blocks))
        return IterateState(x=xs, lam=lam, z=z, k=0)
    if lam.shape != (m,):
        raise ConfigurationError("initial multiplier has the wrong length")
    return IterateState(x=xs, lam=lam, z=None, k=0)


def _stopping_scale(problem, xs, residual) -> StoppingScale:
    ax_norm = float(np.linalg.norm(residual + problem.rhs))
    c_norm = float(np.linalg.norm(problem.rhs))
    x_max = 0.0
    for v in xs:
        x_max = max(x_max, float(np.linalg.norm(v)))
    return StoppingScale(
        residual_scale=max(ax_norm, c_norm),
        sqrt_m=math.sqrt(problem.m),
        iterate_scale=1.0 + x_max,
    )


def _iterate_change(prev_xs, new_xs) -> float:
    change = 0.0
    for a, b in zip(prev_xs, new_xs):
        change = max(change, float(np.linalg.norm(b - a)))
    return change


def _serial_map(fn, indices):
    return [fn(i) for i in indices]


def _drive(problem, config, state0, step, clock, callback, parallel=False):
    """Run ``step`` until the stopping rule fires; collect the trace.

    ``step(state, mapper) -> (new_state, residual_vector, extras)``. The
    mapper distributes a per-block function over block indices, on a worker
    pool for Jacobi-family schemes when ``parallel_workers > 1``.

    A start that already satisfies the residual test is confirmed with one
    probe iteration: if the probe does not move, the run reports converged
    at ``k = 0`` with a single-record trace.
    """
    t0 = clock()
    r0 = coupling_residual(problem, state0.x)
    trace = [
        TraceRecord(
            k=0,
            objective=eval_finite_objective(problem, state0.x),
            primal_residual_norm=float(np.linalg.norm(r0)),
            iterate_change=0.0,
            wall_ms=(clock() - t0) * 1_000.0,
        )
    ]
    scale0 = _stopping_scale(problem, state0.x, r0)
    status = stopping_and_divergence_check(trace, config, scale0)
    state = state0
    pool = None
    if parallel and config.parallel_workers > 1:
        pool = ThreadPoolExecutor(max_workers=config.parallel_workers)
        mapper = lambda fn, idxs: list(pool.map(fn, idxs))  # noqa: E731
    else:
        mapper = _serial_map
    try:
        feasible_start = status == CONTINUE and _residual_ok(
            trace[0].primal_residual_norm, config, scale0
        )
        while status == CONTINUE:
            prev = state
            try:
                state, residual, extras = step(prev, mapper)
            except IllPosedSubproblemError:
                status = ILL_POSED
                state = prev
                break
            scale = _stopping_scale(problem, state.x, residual)
            change = _iterate_change(prev.x, state.x)
            if (
                feasible_start
                and state.k == 1
                and change <= config.eps_abs * scale.iterate_scale
                and _residual_ok(float(np.linalg.norm(residual)), config, scale)
            ):
                # the probe confirmed a fixed point: already optimal at k = 0
                status = CONVERGED
                state = prev
                break
            trace.append(
                TraceRecord(
                    k=state.k,
                    objective=eval_finite_objective(problem, state.x),
                    primal_residual_norm=float(np.linalg.norm(residual)),
                    iterate_change=change,
                    wall_ms=(clock() - t0) * 1_000.0,
                )
            )
            if callback is not None:
                callback(IterationEvent(k=state.k, prev=prev, state=state, extras=extras))
            status = stopping_and_divergence_check(trace, config, scale)
    finally:
        if pool is not None:
            pool.shutdown()
    return SolveReport(
        status=status, final_state=state, trace=trace, iterations=trace[-1].k
    )


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


def solve_two_block(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Alternating two-block scheme: x1-min, x2-min, multiplier step.

    Extras: ``residual``.
    """
    config.validate("two_block")
    if problem.num_blocks != 2:
        raise ConfigurationError(
            f"two_block requires exactly 2 blocks, problem has {problem.num_blocks}"
        )
    rho = config.rho
    solvers = _block_solvers(problem, rho)
    state0 = _prepare_state(problem, x0)

    def step(state, mapper):
        xs = list(state.x)
        for i in range(2):
            lin = _linear_coeff(problem, i, xs, state.lam, rho)
            xs[i] = solvers[i].solve(lin, warm_start=state.x[i])
        r = coupling_residual(problem, xs)
        lam = state.lam - rho * r
        new = IterateState(x=tuple(xs), lam=lam, z=None, k=state.k + 1)
        return new, r, {"residual": r}

    return _drive(problem, config, state0, step, clock, callback)


def solve_gauss_seidel(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Sequential sweep over all blocks, then one multiplier step.

    Blocks before ``i`` enter at their new values, blocks after at the old
    ones. Not necessarily convergent for more than two blocks; the
    divergence test is active. Extras: ``residual``.
    """
    config.validate("gauss_seidel")
    if problem.num_blocks < 2:
        raise ConfigurationError("gauss_seidel requires at least 2 blocks")
    rho = config.rho
    solvers = _block_solvers(problem, rho)
    state0 = _prepare_state(problem, x0)

    def step(state, mapper):
        xs = list(state.x)
        for i in range(problem.num_blocks):
            lin = _linear_coeff(problem, i, xs, state.lam, rho)
            xs[i] = solvers[i].solve(lin, warm_start=state.x[i])
        r = coupling_residual(problem, xs)
        lam = state.lam - rho * r
        new = IterateState(x=tuple(xs), lam=lam, z=None, k=state.k + 1)
        return new, r, {"residual": r}

    return _drive(problem, config, state0, step, clock, callback)


def solve_jacobi(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Simultaneous block updates from the previous iterate, then multiplier step.

    All blocks read the same snapshot, so updates run on the worker pool;
    write-back order is fixed by block index. Not necessarily convergent,
    even for two blocks; the divergence test is active. Extras: ``residual``.
    """
    config.validate("jacobi")
    if problem.num_blocks < 2:
        raise ConfigurationError("jacobi requires at least 2 blocks")
    rho = config.rho
    solvers = _block_solvers(problem, rho)
    state0 = _prepare_state(problem, x0)

    def step(state, mapper):
        snapshot = state.x
        lam = state.lam

        def update(i):
            lin = _linear_coeff(problem, i, snapshot, lam, rho)
            return solvers[i].solve(lin, warm_start=snapshot[i])

        xs = mapper(update, range(problem.num_blocks))
        r = coupling_residual(problem, xs)
        lam_new = lam - rho * r
        new = IterateState(x=tuple(xs), lam=lam_new, z=None, k=state.k + 1)
        return new, r, {"residual": r}

    return _drive(problem, config, state0, step, clock, callback, parallel=True)


def solve_variable_splitting(
    problem, config, x0=None, *, clock=time.perf_counter, callback=None
):
    """Two-group scheme on the splitting ``A_i x_i + z_i = c/N``, ``sum z_i = 0``.

    The x-group updates concurrently, the z-group is the zero-sum projection
    of ``w_i = c/N - A_i x_i + lam_i / rho``, and each block keeps its own
    multiplier (stored stacked in ``state.lam``). The trace reports the
    residual of the original coupling constraint.

    Extras: ``residual`` (original), ``block_residuals`` (per-block vectors
    used in the multiplier update), ``w``, ``z``.
    """
    config.validate("variable_splitting")
    n_blocks = problem.num_blocks
    m = problem.m
    rho = config.rho
    c_split = problem.rhs / n_blocks
    solvers = _block_solvers(problem, rho)
    state0 = _prepare_state(problem, x0, splitting=True)

    def step(state, mapper):
        lam = state.lam.reshape(n_blocks, m)
        z = state.z
        snapshot = state.x

        def update(i):
            lin = problem.blocks[i].coupling.T @ (rho * (z[i] - c_split) - lam[i])
            return solvers[i].solve(lin, warm_start=snapshot[i])

        xs = mapper(update, range(n_blocks))
        ax = [problem.blocks[i].coupling @ xs[i] for i in range(n_blocks)]
        w = [c_split - ax[i] + lam[i] / rho for i in range(n_blocks)]
        zn = project_zero_sum(w)
        block_res = [ax[i] + zn[i] - c_split for i in range(n_blocks)]
        lam_new = np.concatenate([lam[i] - rho * block_res[i] for i in range(n_blocks)])
        r = np.zeros(m)
        for a in ax:
            r += a
        r -= problem.rhs
        new = IterateState(x=tuple(xs), lam=lam_new, z=tuple(zn), k=state.k + 1)
        extras = {"residual": r, "block_residuals": block_res, "w": w, "z": zn}
        return new, r, extras

    return _drive(problem, config, state0, step, clock, callback, parallel=True)


# ---------------------------------------------------------------------------
# Gaussian back substitution
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GbsOperators:
    """Correction-step operators: cached ``A_i'A_i`` factorizations and the
    cross products defining the lower-block-triangular ``M``.

    Indexing is 0-based over blocks; block 0 is never corrected, so entries
    exist for blocks 1..N-1 only. ``dense_h``/``dense_m`` materialize the
    operators on the correction variable ``v = (x_2, ..., x_N, lam)`` for
    inspection and testing.
    """

    rho: float
    ata: list  # ata[i] = A_i' A_i, None for i = 0
    factors: list  # cho_factor(rho * ata[i]), None for i = 0
    cross: dict  # (i, j) -> A_i' A_j for 1 <= i < j

    def dense_h(self, problem: ProblemSpec) -> np.ndarray:
        sizes = [problem.blocks[i].n for i in range(1, problem.num_blocks)]
        dim = sum(sizes) + problem.m
        H = np.zeros((dim, dim))
        pos = 0
        for i in range(1, problem.num_blocks):
            n = problem.blocks[i].n
            H[pos : pos + n, pos : pos + n] = self.rho * self.ata[i]
            pos += n
        H[pos:, pos:] = np.eye(problem.m) / self.rho
        return H

    def dense_m(self, problem: ProblemSpec) -> np.ndarray:
        sizes = [problem.blocks[i].n for i in range(1, problem.num_blocks)]
        dim = sum(sizes) + problem.m
        M = np.zeros((dim, dim))
        offs = np.concatenate(([0], np.cumsum(sizes))).astype(int)
        for bi, i in enumerate(range(1, problem.num_blocks)):
            for bj, j in enumerate(range(1, i + 1)):
                blk = self.ata[i] if i == j else self.cross[(j, i)].T
                M[offs[bi] : offs[bi + 1], offs[bj] : offs[bj + 1]] = self.rho * blk
        M[offs[-1] :, offs[-1] :] = np.eye(problem.m) / self.rho
        return M


def build_gbs_operators(problem: ProblemSpec, rho: float) -> GbsOperators:
    """Precompute and factor the GBS correction operators.

    Raises :class:`ConfigurationError` when some ``A_i'A_i`` (i >= 2) is
    numerically singular (condition estimate at or above 1e12).
    """
    n_blocks = problem.num_blocks
    ata = [None] * n_blocks
    factors = [None] * n_blocks
    for i in range(1, n_blocks):
        A = problem.blocks[i].coupling
        g = A.T @ A
        if not np.all(np.isfinite(g)) or np.linalg.cond(g) >= 1e12:
            raise ConfigurationError(
                f"block {i}: A'A is numerically singular; gbs requires "
                "nonsingular Gram matrices for all corrected blocks"
            )
        ata[i] = g
        factors[i] = cho_factor(rho * g)
    cross = {}
    for i in range(1, n_blocks):
        for j in range(i + 1, n_blocks):
            cross[(i, j)] = problem.blocks[i].coupling.T @ problem.blocks[j].coupling
    return GbsOperators(rho=rho, ata=ata, factors=factors, cross=cross)


def solve_gbs(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Gauss-Seidel prediction plus backward Gaussian back substitution.

    The prediction sweep produces ``(x~, lam~)`` exactly like one
    Gauss-Seidel iteration. The correction solves
    ``M'(v+ - v) = alpha * H (v~ - v)`` backward: multiplier first, then
    blocks N-1 down to 1, each via the cached ``rho A_i'A_i`` factorization.
    Block 0 is an intermediate variable and takes its predicted value.

    Extras: ``residual`` (corrected iterate), ``x_tilde``, ``lam_tilde``,
    ``prediction_residual``.
    """
    config.validate("gbs")
    if problem.num_blocks < 2:
        raise ConfigurationError("gbs requires at least 2 blocks")
    rho = config.rho
    alpha = config.alpha
    ops = build_gbs_operators(problem, rho)
    solvers = _block_solvers(problem, rho)
    state0 = _prepare_state(problem, x0)
    n_blocks = problem.num_blocks

    def step(state, mapper):
        xs = list(state.x)
        lam = state.lam
        for i in range(n_blocks):
            lin = _linear_coeff(problem, i, xs, lam, rho)
            xs[i] = solvers[i].solve(lin, warm_start=state.x[i])
        pred_r = coupling_residual(problem, xs)
        lam_t = lam - rho * pred_r
        d_lam = alpha * (lam_t - lam)
        d = [None] * n_blocks
        for i in range(n_blocks - 1, 0, -1):
            rhs = alpha * (rho * (ops.ata[i] @ (xs[i] - state.x[i])))
            for j in range(i + 1, n_blocks):
                rhs -= rho * (ops.cross[(i, j)] @ d[j])
            d[i] = cho_solve(ops.factors[i], rhs)
        new_x = [xs[0]]
        for i in range(1, n_blocks):
            new_x.append(state.x[i] + d[i])
        lam_new = lam + d_lam
        r = coupling_residual(problem, new_x)
        new = IterateState(x=tuple(new_x), lam=lam_new, z=None, k=state.k + 1)
        extras = {
            "residual": r,
            "x_tilde": xs,
            "lam_tilde": lam_t,
            "prediction_residual": pred_r,
        }
        return new, r, extras

    return _drive(problem, config, state0, step, clock, callback)


# ---------------------------------------------------------------------------
# proximal Jacobi
# ---------------------------------------------------------------------------


def default_prox_matrices(problem: ProblemSpec, rho: float) -> list[np.ndarray]:
    """Standard proximal matrices ``P_i = tau_i I - rho A_i'A_i``.

    ``tau_i = 1.01 rho N smax(A_i)^2`` keeps ``P_i`` positive definite and
    makes each block's total curvature diagonal, so updates stay closed-form.
    """
    n_blocks = problem.num_blocks
    out = []
    for b in problem.blocks:
        smax = float(np.linalg.norm(b.coupling, 2))
        tau = 1.01 * rho * n_blocks * smax**2
        out.append(tau * np.eye(b.n) - rho * (b.coupling.T @ b.coupling))
    return out


def _prox_matrices(problem, config):
    if config.prox_policy == "standard":
        return default_prox_matrices(problem, config.rho)
    if config.prox_policy == "zero":
        return [np.zeros((b.n, b.n)) for b in problem.blocks]
    mats = []
    for i, b in enumerate(problem.blocks):
        P = np.asarray(config.prox_policy(problem, i, config.rho), dtype=float)
        if P.shape != (b.n, b.n):
            raise ConfigurationError(f"prox_policy returned a wrong-shaped P for block {i}")
        scale = max(1.0, float(np.max(np.abs(P))) if P.size else 1.0)
        if np.max(np.abs(P - P.T)) > 1e-10 * scale:
            raise ConfigurationError(f"prox_policy returned a non-symmetric P for block {i}")
        if P.size and float(np.linalg.eigvalsh(P)[0]) < -1e-10 * scale:
            raise ConfigurationError(f"prox_policy returned a non-PSD P for block {i}")
        mats.append(P)
    return mats


def solve_prox_jacobi(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Jacobi updates with proximal regularization and damped multiplier step.

    Block ``i`` minimizes the augmented Lagrangian at the snapshot plus
    ``0.5 ||x_i - x_i^k||^2_{P_i}``; afterwards
    ``lam -= gamma * rho * (sum A_i x_i - c)``. With ``P_i = 0`` and
    ``gamma = 1`` the iteration coincides with plain Jacobi.

    Extras: ``residual``.
    """
    config.validate("prox_jacobi")
    if problem.num_blocks < 1:
        raise ConfigurationError("prox_jacobi requires at least 1 block")
    rho = config.rho
    prox_mats = _prox_matrices(problem, config)
    solvers = _block_solvers(problem, rho, extra=prox_mats)
    state0 = _prepare_state(problem, x0)
    damped = config.gamma * rho

    def step(state, mapper):
        snapshot = state.x
        lam = state.lam

        def update(i):
            lin = _linear_coeff(problem, i, snapshot, lam, rho)
            lin = lin - prox_mats[i] @ snapshot[i]
            return solvers[i].solve(lin, warm_start=snapshot[i])

        xs = mapper(update, range(problem.num_blocks))
        r = coupling_residual(problem, xs)
        lam_new = lam - damped * r
        new = IterateState(x=tuple(xs), lam=lam_new, z=None, k=state.k + 1)
        return new, r, {"residual": r}

    return _drive(problem, config, state0, step, clock, callback, parallel=True)


_ENGINES = {
    "two_block": solve_two_block,
    "gauss_seidel": solve_gauss_seidel,
    "jacobi": solve_jacobi,
    "variable_splitting": solve_variable_splitting,
    "gbs": solve_gbs,
    "prox_jacobi": solve_prox_jacobi,
}


def solve(problem, config, x0=None, *, clock=time.perf_counter, callback=None):
    """Dispatch to the engine selected by ``config.scheme``."""
    config.validate()
    engine = _ENGINES[config.scheme]
    return engine(problem, config, x0, clock=clock, callback=callback)
