"""Seeded strongly convex quadratic instances with a closed-form reference.

These are the benchmark workhorses: every scheme should drive them to the
oracle optimum, and reduction/divergence experiments start from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import BlockSpec, ProblemSpec, assemble_problem
from ..prox import LocalSet, ObjectiveHandle
from .oracle import OracleSolution, oracle_solve

__all__ = ["QuadraticInstance", "gen_random_qp", "standard_quadratic_instance"]


@dataclass(eq=False)
class QuadraticInstance:
    """Ground truth for a random coupled quadratic program."""

    num_blocks: int
    block_size: int
    coupling_rows: int
    seed: int
    oracle: OracleSolution | None

    def ground_truth(self) -> dict:
        doc = {
            "kind": "random_qp",
            "num_blocks": self.num_blocks,
            "block_size": self.block_size,
            "coupling_rows": self.coupling_rows,
            "seed": self.seed,
        }
        if self.oracle is not None:
            doc["oracle_objective"] = self.oracle.objective_star
        return doc


def gen_random_qp(
    num_blocks: int = 3,
    block_size: int = 4,
    coupling_rows: int = 6,
    seed: int = 0,
    condition: float = 4.0,
    with_oracle: bool = True,
) -> tuple[QuadraticInstance, ProblemSpec]:
    """Random strongly convex QP with unbounded blocks and a consistent rhs.

    Each block objective is ``0.5 x'Q_i x + q_i'x`` with eigenvalues of
    ``Q_i`` in ``[1, condition]``; couplings are dense Gaussian. The total
    variable count must reach ``coupling_rows`` so the constraint is
    feasible.
    """
    if num_blocks < 1 or block_size < 1 or coupling_rows < 1:
        raise ValueError("instance dimensions must be positive")
    if num_blocks * block_size < coupling_rows:
        raise ValueError("coupling_rows exceeds the total variable count")
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(num_blocks):
        basis, _ = np.linalg.qr(rng.normal(size=(block_size, block_size)))
        eigs = rng.uniform(1.0, condition, size=block_size)
        Q = basis @ np.diag(eigs) @ basis.T
        Q = 0.5 * (Q + Q.T)
        q = rng.normal(size=block_size)
        A = rng.normal(size=(coupling_rows, block_size)) / np.sqrt(block_size)
        blocks.append(
            BlockSpec(
                objective=ObjectiveHandle.quadratic(Q, q),
                coupling=A,
                local_set=LocalSet.unbounded(),
            )
        )
    c = rng.normal(size=coupling_rows)
    problem = assemble_problem(blocks, c)
    oracle = oracle_solve(problem) if with_oracle else None
    instance = QuadraticInstance(
        num_blocks=num_blocks,
        block_size=block_size,
        coupling_rows=coupling_rows,
        seed=seed,
        oracle=oracle,
    )
    return instance, problem


def standard_quadratic_instance() -> tuple[QuadraticInstance, ProblemSpec]:
    """The fixed three-block quadratic instance used by rate and regression tests."""
    return gen_random_qp(num_blocks=3, block_size=4, coupling_rows=6, seed=1234)
