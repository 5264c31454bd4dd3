"""Centralized reference solutions for coupled problems.

The oracle works on the monolithic (unsplit) problem and shares no code
with the iteration engines: purely quadratic equality-constrained instances
are solved by a direct KKT factorization, everything else by the method of
multipliers with an accelerated proximal-gradient inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..problem import ProblemSpec, eval_objective
from ..prox import canonicalize_objective

__all__ = ["OracleFailureError", "OracleSolution", "oracle_solve"]


class OracleFailureError(RuntimeError):
    """The oracle could not reach its target residual (possible non-attainment)."""


@dataclass(eq=False)
class OracleSolution:
    """Reference optimum: blockwise solution, objective, achieved residual."""

    x_star: tuple[np.ndarray, ...]
    objective_star: float
    residual: float


def _stack(problem: ProblemSpec):
    sizes = problem.block_sizes
    total = int(sum(sizes))
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    Q = np.zeros((total, total))
    q = np.zeros(total)
    w = np.zeros(total)
    lo = np.full(total, -np.inf)
    hi = np.full(total, np.inf)
    for i, b in enumerate(problem.blocks):
        canon = canonicalize_objective(b.objective, b.local_set, b.n)
        sl = slice(offsets[i], offsets[i + 1])
        if canon.Q is not None:
            Q[sl, sl] = canon.Q
        if canon.q is not None:
            q[sl] = canon.q
        if canon.l1 is not None:
            w[sl] = canon.l1
        lo[sl] = canon.lo
        hi[sl] = canon.hi
    A = np.hstack([b.coupling for b in problem.blocks])
    return Q, q, w, lo, hi, A, offsets


def _split(problem, offsets, x):
    return tuple(
        x[offsets[i] : offsets[i + 1]].copy() for i in range(problem.num_blocks)
    )


def _try_kkt(Q, q, A, c, tol):
    n = Q.shape[0]
    m = A.shape[0]
    K = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([-q, c])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x, nu = sol[:n], sol[n:]
    primal = float(np.linalg.norm(A @ x - c))
    stationarity = float(np.linalg.norm(Q @ x + q + A.T @ nu))
    ok = primal <= tol * (1.0 + float(np.linalg.norm(x))) and stationarity <= 1e-8 * (
        1.0 + float(np.linalg.norm(q))
    )
    return (x, primal) if ok else None


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _fista(Q, q, w, lo, hi, A, c, mu, rho, lip, x0, tol, max_iter):
    """Accelerated proximal gradient with function-value restart."""
    has_l1 = bool(np.any(w > 0))
    step = 1.0 / lip

    def grad(v):
        return Q @ v + q + rho * (A.T @ (A @ v - c + mu))

    def value(v):
        d = A @ v - c + mu
        out = 0.5 * float(v @ (Q @ v)) + float(q @ v) + 0.5 * rho * float(d @ d)
        if has_l1:
            out += float(w @ np.abs(v))
        return out

    def forward(v):
        z = v - step * grad(v)
        if has_l1:
            z = _soft(z, step * w)
        return np.minimum(np.maximum(z, lo), hi)

    x = np.minimum(np.maximum(x0, lo), hi)
    y = x.copy()
    t = 1.0
    fx = value(x)
    for _ in range(max_iter):
        xn = forward(y)
        fn = value(xn)
        if fn > fx:
            # momentum restart: a plain forward step from x cannot increase
            y = x.copy()
            t = 1.0
            xn = forward(y)
            fn = value(xn)
        dx = xn - x
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = xn + ((t - 1.0) / tn) * dx
        done = float(np.linalg.norm(dx)) <= tol * (1.0 + float(np.linalg.norm(xn)))
        x, t, fx = xn, tn, fn
        if done:
            break
        if float(np.linalg.norm(x)) > 1e10:
            raise OracleFailureError("oracle iterates diverge; optimum may be unattained")
    return x


def oracle_solve(
    problem: ProblemSpec,
    target_tol: float = 1e-10,
    max_outer: int = 60,
    inner_max_iter: int = 40_000,
) -> OracleSolution:
    """Solve the monolithic problem to residual ``target_tol * (1 + ||x||)``.

    Raises :class:`OracleFailureError` when the residual stagnates above the
    target, which indicates an unattainable or inconsistent instance.
    """
    Q, q, w, lo, hi, A, offsets = _stack(problem)
    c = np.asarray(problem.rhs, dtype=float)

    unconstrained = bool(
        not np.any(w > 0) and np.all(np.isneginf(lo)) and np.all(np.isposinf(hi))
    )
    if unconstrained:
        hit = _try_kkt(Q, q, A, c, target_tol)
        if hit is not None:
            x, primal = hit
            xs = _split(problem, offsets, x)
            return OracleSolution(
                x_star=xs,
                objective_star=eval_objective(problem, xs),
                residual=primal,
            )

    lip_q = float(np.linalg.norm(Q, 2)) if Q.size else 0.0
    gram = A.T @ A
    lip_a = float(np.linalg.norm(gram, 2)) if gram.size else 0.0
    x = np.minimum(np.maximum(np.zeros(Q.shape[0]), lo), hi)
    mu = np.zeros(c.shape[0])
    rho = 10.0
    prev = math.inf
    for _ in range(max_outer):
        lip = lip_q + rho * lip_a + 1e-12
        x = _fista(Q, q, w, lo, hi, A, c, mu, rho, lip, x, 1e-12, inner_max_iter)
        r = A @ x - c
        rn = float(np.linalg.norm(r))
        if rn <= target_tol * (1.0 + float(np.linalg.norm(x))):
            xs = _split(problem, offsets, x)
            return OracleSolution(
                x_star=xs,
                objective_star=eval_objective(problem, xs),
                residual=rn,
            )
        mu = mu + r
        if rn > 0.3 * prev:
            new_rho = min(rho * 10.0, 1e10)
            mu *= rho / new_rho
            rho = new_rho
        prev = rn
    raise OracleFailureError(
        f"residual stagnated at {prev:.3e} above target; optimum may be unattained"
    )
