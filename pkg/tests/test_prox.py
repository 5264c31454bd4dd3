import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from blockadmm import (
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
from _oracles import golden_section, projected_gradient_box_qp


class TestProxL1:
    def test_componentwise_closed_form(self):
        assert_array_equal(prox_l1(np.array([3.0, -1.0, 0.5]), 1.0), [2.0, 0.0, 0.0])

    def test_zero_threshold_is_identity(self):
        v = np.array([1.5, -0.25, 0.0])
        assert_array_equal(prox_l1(v, 0.0), v)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            prox_l1(np.ones(2), -0.1)

    def test_matches_golden_section_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(size=4) * 3
            t = rng.uniform(0.0, 2.0)
            got = prox_l1(v, t)
            for j in range(4):
                f = lambda u, vj=v[j]: t * abs(u) + 0.5 * (u - vj) ** 2
                ref = golden_section(f, -abs(v[j]) - t - 1.0, abs(v[j]) + t + 1.0)
                assert abs(got[j] - ref) < 1e-6

    def test_nonexpansive(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            u = rng.normal(size=6) * rng.uniform(0.1, 10)
            v = rng.normal(size=6) * rng.uniform(0.1, 10)
            t = rng.uniform(0.0, 5.0)
            lhs = np.linalg.norm(prox_l1(u, t) - prox_l1(v, t))
            assert lhs <= np.linalg.norm(u - v) + 1e-12


class TestProjectBox:
    def test_clamp(self):
        got = project_box(np.array([2.0, -2.0]), np.zeros(2), np.ones(2))
        assert_array_equal(got, [1.0, 0.0])

    def test_interior_identity(self):
        v = np.array([0.25, 0.75])
        assert_array_equal(project_box(v, np.zeros(2), np.ones(2)), v)

    def test_inverted_bounds(self):
        with pytest.raises(ValueError):
            project_box(np.zeros(2), np.ones(2), np.zeros(2))

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(2)
        lo = np.array([-1.0, 0.5])
        hi = np.array([2.0, 3.0])
        grids = [np.arange(lo[j], hi[j] + 1e-9, 1e-3) for j in range(2)]
        for _ in range(10):
            v = rng.normal(size=2) * 3
            got = project_box(v, lo, hi)
            # nearest grid point per coordinate (the box is separable)
            best = np.array([g[np.argmin(np.abs(g - vj))] for g, vj in zip(grids, v)])
            assert np.max(np.abs(got - best)) <= 1e-3

    def test_output_always_inside(self):
        rng = np.random.default_rng(3)
        lo, hi = -rng.uniform(0, 2, 5), rng.uniform(0, 2, 5)
        for _ in range(20):
            out = project_box(rng.normal(size=5) * 10, lo, hi)
            assert np.all(out >= lo) and np.all(out <= hi)


class TestProjectZeroSum:
    def test_two_vector_example(self):
        # oracle: KKT system of min ||z1-w1||^2 + ||z2-w2||^2 s.t. z1+z2 = 0
        K = np.array(
            [
                [2.0, 0.0, 1.0],
                [0.0, 2.0, 1.0],
                [1.0, 1.0, 0.0],
            ]
        )
        sol = np.linalg.solve(K, np.array([2.0 * 1.0, 2.0 * -3.0, 0.0]))
        got = project_zero_sum([np.array([1.0]), np.array([-3.0])])
        assert_allclose(got[0], sol[0], rtol=1e-12)
        assert_allclose(got[1], sol[1], rtol=1e-12)
        assert_array_equal(got[0], [2.0])
        assert_array_equal(got[1], [-2.0])

    def test_fixed_point(self):
        ws = [np.array([1.0, -2.0]), np.array([-1.0, 2.0])]
        out = project_zero_sum(ws)
        assert_array_equal(out[0], ws[0])
        assert_array_equal(out[1], ws[1])

    def test_zero_sum_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            ws = [rng.normal(size=3) * rng.uniform(0.1, 100) for _ in range(n)]
            out = project_zero_sum(ws)
            total = np.sum(out, axis=0)
            bound = 1e-12 * n * max(np.max(np.abs(w)) for w in ws)
            assert np.max(np.abs(total)) <= max(bound, 1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        ws = [rng.normal(size=4) for _ in range(3)]
        once = project_zero_sum(ws)
        twice = project_zero_sum(once)
        for a, b in zip(once, twice):
            assert np.max(np.abs(a - b)) <= 1e-12

    def test_ragged_input(self):
        with pytest.raises(ValueError):
            project_zero_sum([np.zeros(2), np.zeros(3)])


class TestBlockSubproblem:
    def test_least_squares_identity(self):
        b = np.array([0.3, -1.2, 4.0])
        req = SubproblemRequest(
            handle=ObjectiveHandle.zero(),
            linear_coeff=-b,
            quadratic_coeff=np.eye(3),
            local_set=LocalSet.unbounded(),
        )
        assert_allclose(solve_block_subproblem(req), b, rtol=1e-12)

    def test_reduces_to_prox(self):
        v = np.array([2.0, -0.4, 0.9, -3.0])
        req = SubproblemRequest(
            handle=ObjectiveHandle.l1(1.0),
            linear_coeff=-v,
            quadratic_coeff=np.eye(4),
            local_set=LocalSet.unbounded(),
        )
        assert_allclose(solve_block_subproblem(req), prox_l1(v, 1.0), atol=1e-14)

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(5):
            basis, _ = np.linalg.qr(rng.normal(size=(5, 5)))
            H = basis @ np.diag(rng.uniform(0.5, 5.0, 5)) @ basis.T
            H = 0.5 * (H + H.T)
            l = rng.normal(size=5)
            lo, hi = -rng.uniform(0.2, 1.0, 5), rng.uniform(0.2, 1.0, 5)
            req = SubproblemRequest(
                handle=ObjectiveHandle.zero(),
                linear_coeff=l,
                quadratic_coeff=H,
                local_set=LocalSet.box(lo, hi),
            )
            got = solve_block_subproblem(req)
            ref = projected_gradient_box_qp(H, l, lo, hi, tol=1e-12)
            assert np.max(np.abs(got - ref)) < 1e-8

    def test_first_order_optimality(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            basis, _ = np.linalg.qr(rng.normal(size=(4, 4)))
            H = basis @ np.diag(rng.uniform(0.5, 4.0, 4)) @ basis.T
            H = 0.5 * (H + H.T)
            l = rng.normal(size=4) * 5
            u = solve_block_subproblem(
                SubproblemRequest(
                    handle=ObjectiveHandle.zero(),
                    linear_coeff=l,
                    quadratic_coeff=H,
                    local_set=LocalSet.unbounded(),
                )
            )
            assert np.linalg.norm(H @ u + l) <= 1e-8 * (1 + np.linalg.norm(l))

    def test_quadratic_handle_folds_into_solve(self):
        rng = np.random.default_rng(8)
        Q = np.diag(rng.uniform(1, 3, 3))
        q = rng.normal(size=3)
        H = np.diag(rng.uniform(1, 3, 3))
        l = rng.normal(size=3)
        got = solve_block_subproblem(
            SubproblemRequest(
                handle=ObjectiveHandle.quadratic(Q, q),
                linear_coeff=l,
                quadratic_coeff=H,
                local_set=LocalSet.unbounded(),
            )
        )
        assert_allclose(got, -np.linalg.solve(Q + H, q + l), rtol=1e-12)

    def test_ill_posed_singular_system(self):
        H = np.array([[1.0, 1.0], [1.0, 1.0]])  # PSD but singular
        with pytest.raises(IllPosedSubproblemError):
            BlockSubproblemSolver(ObjectiveHandle.zero(), H, LocalSet.unbounded())

    def test_box_rescues_singular_quadratic(self):
        H = np.zeros((2, 2))
        solver = BlockSubproblemSolver(
            ObjectiveHandle.zero(), H, LocalSet.box(-np.ones(2), np.ones(2))
        )
        out = solver.solve(np.array([1.0, -2.0]))
        assert_array_equal(out, [-1.0, 1.0])

    def test_nonneg_set_route(self):
        solver = BlockSubproblemSolver(
            ObjectiveHandle.zero(), np.eye(2), LocalSet.nonneg()
        )
        assert_array_equal(solver.solve(np.array([1.0, -1.0])), [0.0, 1.0])

    def test_sum_handle_composition(self):
        h = ObjectiveHandle.sum_of(
            ObjectiveHandle.quadratic(np.eye(2), np.zeros(2), offset=1.5),
            ObjectiveHandle.l1(0.5),
            ObjectiveHandle.indicator(LocalSet.box(-np.ones(2), np.ones(2))),
        )
        assert h.value(np.array([1.0, -1.0])) == pytest.approx(1.0 + 1.0 + 1.5)
        assert h.value(np.array([2.0, 0.0])) == np.inf
        assert h.finite_value(np.array([2.0, 0.0])) == pytest.approx(2.0 + 1.0 + 1.5)


class TestHandles:
    def test_quadratic_requires_symmetry(self):
        with pytest.raises(ValueError):
            ObjectiveHandle.quadratic(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_l1_requires_nonnegative_beta(self):
        with pytest.raises(ValueError):
            ObjectiveHandle.l1(-1.0)

    def test_weighted_l1_value(self):
        h = ObjectiveHandle.l1(2.0, weights=np.array([0.0, 1.0, 3.0]))
        assert h.value(np.array([5.0, -1.0, 2.0])) == pytest.approx(2 * (1 + 6))
