"""Canonical block-separable problem model and iteration diagnostics.

A problem couples ``N`` blocks through one linear equality::

    minimize   sum_i f_i(x_i)
    subject to sum_i A_i x_i = c,    x_i in X_i,

with closed convex ``f_i`` and local sets ``X_i``. Matrices are dense
double-precision; instances at desk scale do not need sparsity.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .prox import LocalSet, ObjectiveHandle

__all__ = [
    "DimensionMismatchError",
    "EmptyProblemError",
    "BlockSpec",
    "ProblemSpec",
    "IterateState",
    "Diagnostics",
    "assemble_problem",
    "coupling_residual",
    "eval_objective",
    "eval_finite_objective",
    "eval_augmented_lagrangian",
    "compute_diagnostics",
]


class DimensionMismatchError(ValueError):
    """Array shapes are inconsistent with the problem's dimensions."""


class EmptyProblemError(ValueError):
    """A problem needs at least one block."""


@dataclass(frozen=True, eq=False)
class BlockSpec:
    """One block: objective handle, coupling matrix ``A_i``, local set ``X_i``."""

    objective: ObjectiveHandle
    coupling: np.ndarray
    local_set: LocalSet

    @property
    def n(self) -> int:
        return self.coupling.shape[1]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Validated immutable problem: ordered blocks plus shared right-hand side."""

    blocks: tuple[BlockSpec, ...]
    rhs: np.ndarray

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return self.rhs.shape[0]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(b.n for b in self.blocks)


@dataclass(frozen=True, eq=False)
class IterateState:
    """Solver iterate: block variables, multiplier, optional splitting variables.

    ``lam`` has length ``m`` for all schemes except variable splitting, which
    keeps one multiplier per block and stores them stacked (length ``N * m``).
    ``z`` is present only for variable splitting.
    """

    x: tuple[np.ndarray, ...]
    lam: np.ndarray
    z: tuple[np.ndarray, ...] | None = None
    k: int = 0


@dataclass(frozen=True)
class Diagnostics:
    """Per-iteration measurements attached to a trace record."""

    objective: float
    primal_residual_norm: float
    iterate_change: float
    wall_ms: float


def _as_matrix(a, index: int) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"block {index}: coupling must be a 2-d matrix")
    return arr


def assemble_problem(blocks, rhs) -> ProblemSpec:
    """Validate blocks against the shared right-hand side and freeze the problem.

    Raises :class:`EmptyProblemError` for an empty block list and
    :class:`DimensionMismatchError` naming the offending block index when a
    coupling matrix disagrees with ``len(rhs)``.
    """
    blocks = list(blocks)
    if not blocks:
        raise EmptyProblemError("a problem needs at least one block")
    c = np.array(rhs, dtype=float)
    if c.ndim != 1:
        raise DimensionMismatchError("right-hand side must be a vector")
    m = c.shape[0]
    frozen = []
    for i, b in enumerate(blocks):
        A = _as_matrix(b.coupling, i)
        if A.shape[0] != m:
            raise DimensionMismatchError(
                f"block {i}: coupling has {A.shape[0]} rows, expected {m}"
            )
        if A.shape[1] < 1:
            raise DimensionMismatchError(f"block {i}: needs at least one column")
        n = A.shape[1]
        # force early failure on malformed bounds or objective data
        b.local_set.bounds(n)
        b.objective.finite_value(np.zeros(n))
        A = np.ascontiguousarray(A)
        A.setflags(write=False)
        frozen.append(BlockSpec(objective=b.objective, coupling=A, local_set=b.local_set))
    c.setflags(write=False)
    return ProblemSpec(blocks=tuple(frozen), rhs=c)


def _check_conformable(problem: ProblemSpec, x) -> list[np.ndarray]:
    xs = [np.asarray(v, dtype=float) for v in x]
    if len(xs) != problem.num_blocks:
        raise DimensionMismatchError(
            f"expected {problem.num_blocks} block vectors, got {len(xs)}"
        )
    for i, (v, b) in enumerate(zip(xs, problem.blocks)):
        if v.shape != (b.n,):
            raise DimensionMismatchError(
                f"block {i}: vector has shape {v.shape}, expected ({b.n},)"
            )
    return xs


def coupling_residual(problem: ProblemSpec, x) -> np.ndarray:
    """``sum_i A_i x_i - c`` accumulated left to right for reproducibility."""
    xs = _check_conformable(problem, x)
    acc = np.zeros(problem.m)
    for b, v in zip(problem.blocks, xs):
        acc += b.coupling @ v
    acc -= problem.rhs
    return acc


def eval_objective(problem: ProblemSpec, x) -> float:
    """``sum_i f_i(x_i)``, +inf when any ``x_i`` leaves its local set."""
    xs = _check_conformable(problem, x)
    for v, b in zip(xs, problem.blocks):
        if not b.local_set.contains(v):
            return math.inf
        if b.objective.value(v) == math.inf:
            return math.inf
    return eval_finite_objective(problem, xs)


def eval_finite_objective(problem: ProblemSpec, x) -> float:
    """Objective with indicator terms ignored; used for trace records."""
    xs = _check_conformable(problem, x)
    total = 0.0
    for v, b in zip(xs, problem.blocks):
        total += b.objective.finite_value(v)
    return total


def eval_augmented_lagrangian(problem: ProblemSpec, state: IterateState, rho: float) -> float:
    """``f(x) - lam'(sum A_i x_i - c) + rho/2 ||sum A_i x_i - c||^2``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    lam = np.asarray(state.lam, dtype=float)
    if lam.shape != (problem.m,):
        raise DimensionMismatchError(
            f"multiplier has shape {lam.shape}, expected ({problem.m},)"
        )
    f = eval_objective(problem, state.x)
    if f == math.inf:
        return math.inf
    r = coupling_residual(problem, state.x)
    return f - float(lam @ r) + 0.5 * rho * float(r @ r)


def compute_diagnostics(
    problem: ProblemSpec,
    prev: IterateState,
    curr: IterateState,
    t0: float,
    clock=time.perf_counter,
) -> Diagnostics:
    """Measurements for the step ``prev -> curr``: objective (finite part),
    primal residual norm, largest blockwise iterate change, elapsed wall time.
    """
    prev_x = _check_conformable(problem, prev.x)
    curr_x = _check_conformable(problem, curr.x)
    r = coupling_residual(problem, curr_x)
    change = 0.0
    for a, b in zip(prev_x, curr_x):
        change = max(change, float(np.linalg.norm(b - a)))
    return Diagnostics(
        objective=eval_finite_objective(problem, curr_x),
        primal_residual_norm=float(np.linalg.norm(r)),
        iterate_change=change,
        wall_ms=(clock() - t0) * 1_000.0,
    )
