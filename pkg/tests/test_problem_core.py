import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blockadmm import (
    BlockSpec,
    DimensionMismatchError,
    EmptyProblemError,
    IterateState,
    LocalSet,
    ObjectiveHandle,
    assemble_problem,
    compute_diagnostics,
    coupling_residual,
    eval_augmented_lagrangian,
    eval_objective,
)


def _zero_block(m, n):
    return BlockSpec(ObjectiveHandle.zero(), np.zeros((m, n)), LocalSet.unbounded())


def _random_problem(seed, n_blocks=3, n=3, m=4, boxed=False):
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n_blocks):
        basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
        Q = basis @ np.diag(rng.uniform(0.5, 3.0, n)) @ basis.T
        Q = 0.5 * (Q + Q.T)
        local = LocalSet.box(-np.ones(n), np.ones(n)) if boxed else LocalSet.unbounded()
        blocks.append(
            BlockSpec(
                ObjectiveHandle.quadratic(Q, rng.normal(size=n)),
                rng.normal(size=(m, n)),
                local,
            )
        )
    return assemble_problem(blocks, rng.normal(size=m))


class TestAssemble:
    def test_dimension_bookkeeping(self):
        blocks = [_zero_block(3, 2), _zero_block(3, 1)]
        p = assemble_problem(blocks, np.zeros(3))
        assert p.num_blocks == 2
        assert p.m == 3
        assert p.block_sizes == (2, 1)

    def test_row_mismatch_names_block(self):
        blocks = [_zero_block(3, 2), _zero_block(4, 1)]
        with pytest.raises(DimensionMismatchError, match="block 1"):
            assemble_problem(blocks, np.zeros(3))

    def test_empty_blocks(self):
        with pytest.raises(EmptyProblemError):
            assemble_problem([], np.zeros(3))

    def test_problem_is_frozen(self):
        p = _random_problem(0)
        with pytest.raises(ValueError):
            p.blocks[0].coupling[0, 0] = 1.0
        with pytest.raises(ValueError):
            p.rhs[0] = 1.0


class TestEvalObjective:
    def test_all_zero(self):
        p = assemble_problem([_zero_block(2, 2), _zero_block(2, 3)], np.zeros(2))
        assert eval_objective(p, [np.ones(2), np.ones(3)]) == 0.0

    def test_hand_evaluable(self):
        b1 = BlockSpec(
            ObjectiveHandle.quadratic(np.eye(2)), np.zeros((1, 2)), LocalSet.unbounded()
        )
        b2 = BlockSpec(ObjectiveHandle.l1(1.0), np.zeros((1, 1)), LocalSet.unbounded())
        p = assemble_problem([b1, b2], np.zeros(1))
        val = eval_objective(p, [np.array([1.0, 1.0]), np.array([-2.0])])
        assert val == pytest.approx(3.0)

    def test_indicator_convention(self):
        b = BlockSpec(
            ObjectiveHandle.zero(),
            np.zeros((1, 1)),
            LocalSet.box(np.zeros(1), np.ones(1)),
        )
        p = assemble_problem([b], np.zeros(1))
        assert eval_objective(p, [np.array([2.0])]) == math.inf
        assert eval_objective(p, [np.array([0.5])]) == 0.0

    def test_dimension_mismatch(self):
        p = _random_problem(1)
        with pytest.raises(DimensionMismatchError):
            eval_objective(p, [np.zeros(2)] * 3)


class TestAugmentedLagrangian:
    def test_reduces_to_objective_on_feasible_points(self):
        # random feasible x: solve for the last block's contribution
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = _random_problem(rng.integers(1 << 30), n_blocks=2, n=4, m=3)
            x0 = rng.normal(size=4)
            A0, A1 = p.blocks[0].coupling, p.blocks[1].coupling
            x1, *_ = np.linalg.lstsq(A1, p.rhs - A0 @ x0, rcond=None)
            xs = (x0, x1)
            assert np.linalg.norm(coupling_residual(p, xs)) < 1e-8
            f = eval_objective(p, xs)
            for _ in range(3):
                state = IterateState(x=xs, lam=rng.normal(size=3))
                lag = eval_augmented_lagrangian(p, state, rng.uniform(0.1, 5.0))
                assert_allclose(lag, f, rtol=1e-9, atol=1e-9)

    def test_hand_computation(self):
        b = BlockSpec(ObjectiveHandle.zero(), np.eye(2), LocalSet.unbounded())
        p = assemble_problem([b], np.zeros(2))
        state = IterateState(x=(np.array([1.0, 1.0]),), lam=np.zeros(2))
        assert eval_augmented_lagrangian(p, state, 2.0) == pytest.approx(2.0)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            p = _random_problem(rng.integers(1 << 30))
            xs = tuple(rng.normal(size=b.n) for b in p.blocks)
            lam = rng.normal(size=p.m)
            rho = rng.uniform(0.1, 4.0)
            # naive term-by-term recomputation
            f = sum(
                0.5 * x @ (b.objective.Q @ x) + b.objective.q @ x
                for b, x in zip(p.blocks, xs)
            )
            r = sum(b.coupling @ x for b, x in zip(p.blocks, xs)) - p.rhs
            expect = f - lam @ r + 0.5 * rho * (r @ r)
            got = eval_augmented_lagrangian(p, IterateState(x=xs, lam=lam), rho)
            assert_allclose(got, expect, rtol=1e-12)

    def test_multiplier_shift_identity(self):
        rng = np.random.default_rng(5)
        p = _random_problem(6)
        xs = tuple(rng.normal(size=b.n) for b in p.blocks)
        lam = rng.normal(size=p.m)
        delta = rng.normal(size=p.m)
        rho = 1.7
        r = coupling_residual(p, xs)
        before = eval_augmented_lagrangian(p, IterateState(x=xs, lam=lam), rho)
        after = eval_augmented_lagrangian(p, IterateState(x=xs, lam=lam + delta), rho)
        assert_allclose(after - before, -delta @ r, rtol=1e-9, atol=1e-12)

    def test_nonpositive_rho(self):
        p = _random_problem(7)
        state = IterateState(
            x=tuple(np.zeros(b.n) for b in p.blocks), lam=np.zeros(p.m)
        )
        with pytest.raises(ValueError):
            eval_augmented_lagrangian(p, state, 0.0)


class TestDiagnostics:
    def test_identical_iterates(self):
        p = _random_problem(8)
        xs = tuple(np.ones(b.n) for b in p.blocks)
        s = IterateState(x=xs, lam=np.zeros(p.m))
        d = compute_diagnostics(p, s, s, t0=0.0, clock=lambda: 0.0)
        assert d.iterate_change == 0.0

    def test_feasible_point_has_zero_residual(self):
        b = BlockSpec(ObjectiveHandle.zero(), np.eye(2), LocalSet.unbounded())
        p = assemble_problem([b], np.array([1.0, -2.0]))
        s = IterateState(x=(np.array([1.0, -2.0]),), lam=np.zeros(2))
        d = compute_diagnostics(p, s, s, t0=0.0, clock=lambda: 0.0)
        assert d.primal_residual_norm == 0.0

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(9)
        for _ in range(8):
            p = _random_problem(rng.integers(1 << 30))
            prev = IterateState(
                x=tuple(rng.normal(size=b.n) for b in p.blocks), lam=np.zeros(p.m)
            )
            curr = IterateState(
                x=tuple(rng.normal(size=b.n) for b in p.blocks), lam=np.zeros(p.m)
            )
            d = compute_diagnostics(p, prev, curr, t0=0.0, clock=lambda: 0.0)
            r = sum(b.coupling @ x for b, x in zip(p.blocks, curr.x)) - p.rhs
            assert_allclose(d.primal_residual_norm, np.linalg.norm(r), rtol=1e-12)
            change = max(
                np.linalg.norm(b - a) for a, b in zip(prev.x, curr.x)
            )
            assert_allclose(d.iterate_change, change, rtol=1e-12)

    def test_deterministic(self):
        p = _random_problem(10)
        rng = np.random.default_rng(11)
        prev = IterateState(
            x=tuple(rng.normal(size=b.n) for b in p.blocks), lam=np.zeros(p.m)
        )
        curr = IterateState(
            x=tuple(rng.normal(size=b.n) for b in p.blocks), lam=np.zeros(p.m)
        )
        d1 = compute_diagnostics(p, prev, curr, t0=0.0, clock=lambda: 0.0)
        d2 = compute_diagnostics(p, prev, curr, t0=0.0, clock=lambda: 0.0)
        assert d1 == d2
