"""Proximal operators, projections, and block subproblem solvers.

Every iteration scheme delegates its block updates to this module. A block
update is always an instance of

    minimize  0.5 * u' H u + l' u + f(u)   over  u in S,

where ``H`` collects the quadratic curvature (penalty term plus any proximal
regularization), ``l`` the linear coefficient, ``f`` the block objective and
``S`` the block's local set. :class:`BlockSubproblemSolver` picks a closed
form whenever one exists (symmetric factor-once solve, componentwise soft
thresholding) and otherwise falls back to projected/proximal gradient with
backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "IllPosedSubproblemError",
    "LocalSet",
    "ObjectiveHandle",
    "CanonicalObjective",
    "canonicalize_objective",
    "soft_threshold",
    "prox_l1",
    "project_box",
    "project_zero_sum",
    "SubproblemRequest",
    "BlockSubproblemSolver",
    "solve_block_subproblem",
]

SYMMETRY_TOL = 1e-10


class IllPosedSubproblemError(RuntimeError):
    """A block subproblem has no attainable minimizer."""


# ---------------------------------------------------------------------------
# local sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalSet:
    """Constraint descriptor for a block: unbounded, box, or nonnegative."""

    kind: str
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    @staticmethod
    def unbounded() -> "LocalSet":
        return LocalSet("unbounded")

    @staticmethod
    def box(lo, hi) -> "LocalSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lo > hi):
            raise ValueError("inverted box bounds: lo > hi somewhere")
        return LocalSet("box", lo, hi)

    @staticmethod
    def nonneg() -> "LocalSet":
        return LocalSet("nonneg")

    def bounds(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounds as length-``n`` arrays, ±inf for free coordinates."""
        if self.kind == "unbounded":
            return np.full(n, -np.inf), np.full(n, np.inf)
        if self.kind == "nonneg":
            return np.zeros(n), np.full(n, np.inf)
        if self.kind == "box":
            if self.lo.shape[0] != n:
                raise ValueError(
                    f"box bounds have length {self.lo.shape[0]}, expected {n}"
                )
            return self.lo, self.hi
        raise ValueError(f"unknown local set kind {self.kind!r}")

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "unbounded":
            return v
        lo, hi = self.bounds(v.shape[0])
        return np.minimum(np.maximum(v, lo), hi)

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        if self.kind == "unbounded":
            return bool(np.all(np.isfinite(v)))
        lo, hi = self.bounds(v.shape[0])
        return bool(np.all(v >= lo - tol) and np.all(v <= hi + tol))


# ---------------------------------------------------------------------------
# objective handles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObjectiveHandle:
    """Tagged block objective: zero, quadratic, weighted l1, indicator, or sum.

    A quadratic term is ``0.5 u'Qu + q'u + offset`` with symmetric PSD ``Q``.
    An l1 term is ``beta * sum_j weights_j * |u_j|`` (uniform weights when
    ``weights`` is omitted). Indicators contribute 0 inside their set and
    +inf outside.
    """

    kind: str
    Q: np.ndarray | None = None
    q: np.ndarray | None = None
    offset: float = 0.0
    beta: float = 0.0
    weights: np.ndarray | None = None
    local_set: LocalSet | None = None
    terms: tuple["ObjectiveHandle", ...] = ()

    @staticmethod
    def zero() -> "ObjectiveHandle":
        return ObjectiveHandle("zero")

    @staticmethod
    def quadratic(Q, q=None, offset: float = 0.0) -> "ObjectiveHandle":
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("quadratic matrix must be square")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL * scale:
            raise ValueError("quadratic matrix must be symmetric")
        if q is None:
            q = np.zeros(Q.shape[0])
        q = np.asarray(q, dtype=float)
        if q.shape != (Q.shape[0],):
            raise ValueError("linear term does not match quadratic matrix")
        return ObjectiveHandle("quadratic", Q=Q, q=q, offset=float(offset))

    @staticmethod
    def l1(beta: float, weights=None) -> "ObjectiveHandle":
        if beta < 0:
            raise ValueError("l1 coefficient must be nonnegative")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if np.any(weights < 0):
                raise ValueError("l1 weights must be nonnegative")
        return ObjectiveHandle("l1", beta=float(beta), weights=weights)

    @staticmethod
    def indicator(local_set: LocalSet) -> "ObjectiveHandle":
        if not isinstance(local_set, LocalSet):
            raise ValueError("indicator requires a LocalSet")
        return ObjectiveHandle("indicator", local_set=local_set)

    @staticmethod
    def sum_of(*terms: "ObjectiveHandle") -> "ObjectiveHandle":
        if not terms:
            raise ValueError("sum_of requires at least one term")
        return ObjectiveHandle("sum", terms=tuple(terms))

    def value(self, u: np.ndarray) -> float:
        """Objective value at ``u``; +inf when an indicator is violated."""
        u = np.asarray(u, dtype=float)
        if self.kind == "indicator" and not self.local_set.contains(u):
            return np.inf
        if self.kind == "sum" and any(
            t.kind == "indicator" and not t.local_set.contains(u) for t in self.terms
        ):
            return np.inf
        return self.finite_value(u)

    def finite_value(self, u: np.ndarray) -> float:
        """Objective value with indicator terms treated as zero."""
        u = np.asarray(u, dtype=float)
        if self.kind == "zero" or self.kind == "indicator":
            return 0.0
        if self.kind == "quadratic":
            if u.shape[0] != self.Q.shape[0]:
                raise ValueError("argument does not match quadratic objective size")
            return float(0.5 * u @ (self.Q @ u) + self.q @ u + self.offset)
        if self.kind == "l1":
            if self.weights is None:
                return float(self.beta * np.sum(np.abs(u)))
            if self.weights.shape != u.shape:
                raise ValueError("argument does not match l1 weight vector")
            return float(self.beta * (self.weights @ np.abs(u)))
        if self.kind == "sum":
            return float(sum(t.finite_value(u) for t in self.terms))
        raise ValueError(f"unknown objective kind {self.kind!r}")


@dataclass(eq=False)
class CanonicalObjective:
    """Flattened objective: quadratic data, l1 coefficients, and a box.

    The box is the intersection of the block's local set with every
    indicator term of the handle.
    """

    Q: np.ndarray | None
    q: np.ndarray | None
    offset: float
    l1: np.ndarray | None
    lo: np.ndarray
    hi: np.ndarray


def canonicalize_objective(
    handle: ObjectiveHandle, local_set: LocalSet, n: int
) -> CanonicalObjective:
    """Flatten a handle tree over local set ``local_set`` into canonical form."""
    lo, hi = local_set.bounds(n)
    lo, hi = lo.copy(), hi.copy()
    Q = None
    q = None
    offset = 0.0
    l1 = None

    def visit(h: ObjectiveHandle) -> None:
        nonlocal Q, q, offset, l1, lo, hi
        if h.kind == "zero":
            return
        if h.kind == "quadratic":
            if h.Q.shape[0] != n:
                raise ValueError("quadratic objective size does not match block")
            Q = h.Q.copy() if Q is None else Q + h.Q
            q = h.q.copy() if q is None else q + h.q
            offset += h.offset
        elif h.kind == "l1":
            coeff = h.beta * (np.ones(n) if h.weights is None else h.weights)
            if coeff.shape[0] != n:
                raise ValueError("l1 weight vector size does not match block")
            l1 = coeff if l1 is None else l1 + coeff
        elif h.kind == "indicator":
            s_lo, s_hi = h.local_set.bounds(n)
            lo = np.maximum(lo, s_lo)
            hi = np.minimum(hi, s_hi)
        elif h.kind == "sum":
            for t in h.terms:
                visit(t)
        else:
            raise ValueError(f"unknown objective kind {h.kind!r}")

    visit(handle)
    if np.any(lo > hi):
        raise ValueError("intersected constraint sets are empty")
    if l1 is not None and not np.any(l1 > 0):
        l1 = None
    return CanonicalObjective(Q=Q, q=q, offset=offset, l1=l1, lo=lo, hi=hi)


# ---------------------------------------------------------------------------
# elementary operators
# ---------------------------------------------------------------------------


def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    """Componentwise ``sign(v) * max(|v| - t, 0)``; ``t`` scalar or vector."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_l1(v, t: float) -> np.ndarray:
    """Proximal operator of ``t * ||.||_1``, i.e. soft thresholding at ``t``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    return soft_threshold(np.asarray(v, dtype=float), float(t))


def project_box(v, lo, hi) -> np.ndarray:
    """Euclidean projection onto the box ``[lo, hi]`` (componentwise clamp)."""
    v = np.asarray(v, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != v.shape or hi.shape != v.shape:
        raise ValueError("bounds must match the vector shape")
    if np.any(lo > hi):
        raise ValueError("inverted box bounds: lo > hi somewhere")
    return np.minimum(np.maximum(v, lo), hi)


def project_zero_sum(vectors) -> list[np.ndarray]:
    """Project ``(w_1, ..., w_N)`` onto ``{z : sum_i z_i = 0}``.

    The projection subtracts the blockwise mean from every vector, which is
    the closed-form solution of the underlying least-squares problem.
    """
    ws = [np.asarray(w, dtype=float) for w in vectors]
    if not ws:
        raise ValueError("need at least one vector")
    m = ws[0].shape[0]
    for w in ws[1:]:
        if w.shape[0] != m:
            raise ValueError("ragged input: vectors must share one length")
    mean = ws[0].copy()
    for w in ws[1:]:
        mean += w
    mean /= len(ws)
    return [w - mean for w in ws]


# ---------------------------------------------------------------------------
# block subproblems
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SubproblemRequest:
    """Canonicalized block update: handle, linear/quadratic coefficients, set."""

    handle: ObjectiveHandle
    linear_coeff: np.ndarray
    quadratic_coeff: np.ndarray
    local_set: LocalSet | None = None


class BlockSubproblemSolver:
    """Factor-once solver for one block's update problem.

    Minimizes ``0.5 u'Hu + l'u + f(u)`` over the local set, where ``H`` is
    the supplied quadratic coefficient plus the handle's own quadratic term.
    The route is chosen at construction:

    * ``linear`` -- no l1 term and no bounds: cached Cholesky solve,
    * ``separable`` -- ``H`` diagonal: componentwise soft threshold + clamp,
    * ``pg`` -- anything else: accelerated proximal gradient with
      backtracking and function-value restart, inner tolerance 1e-10, at
      most 10,000 inner steps.
    """

    def __init__(
        self,
        handle: ObjectiveHandle,
        quadratic_coeff,
        local_set: LocalSet | None = None,
        pg_tol: float = 1e-10,
        pg_max_iter: int = 10_000,
    ):
        H0 = np.asarray(quadratic_coeff, dtype=float)
        if H0.ndim != 2 or H0.shape[0] != H0.shape[1]:
            raise ValueError("quadratic coefficient must be a square matrix")
        scale = max(1.0, float(np.max(np.abs(H0))) if H0.size else 1.0)
        if np.max(np.abs(H0 - H0.T)) > SYMMETRY_TOL * scale:
            raise ValueError("quadratic coefficient must be symmetric")
        n = H0.shape[0]
        self.n = n
        canon = canonicalize_objective(
            handle, local_set if local_set is not None else LocalSet.unbounded(), n
        )
        H = H0 if canon.Q is None else H0 + canon.Q
        self._H = H
        self._q_extra = canon.q
        self._w = canon.l1
        self._lo = canon.lo
        self._hi = canon.hi
        self._pg_tol = pg_tol
        self._pg_max_iter = pg_max_iter

        free = bool(np.all(np.isneginf(self._lo)) and np.all(np.isposinf(self._hi)))
        diagonal = not np.any(H - np.diag(np.diagonal(H)))
        if self._w is None and free:
            # a Cholesky zero pivot can round either way, so gate on an
            # explicit condition estimate as well
            if not np.all(np.isfinite(H)) or np.linalg.cond(H) >= 1e14:
                raise IllPosedSubproblemError(
                    "quadratic coefficient is singular and the objective adds "
                    "no strict convexity"
                )
            try:
                self._factor = cho_factor(H)
            except np.linalg.LinAlgError:
                raise IllPosedSubproblemError(
                    "quadratic coefficient is singular and the objective adds "
                    "no strict convexity"
                ) from None
            self._route = "linear"
        elif diagonal:
            d = np.diagonal(H).copy()
            if np.any(d < 0):
                raise ValueError("quadratic coefficient must be positive semidefinite")
            self._diag = d
            self._route = "separable"
        else:
            self._route = "pg"
            self._lip = float(np.linalg.norm(H, 2))

    @property
    def route(self) -> str:
        return self._route

    def solve(self, linear_coeff, warm_start=None) -> np.ndarray:
        l = np.asarray(linear_coeff, dtype=float)
        if l.shape != (self.n,):
            raise ValueError("linear coefficient size does not match block")
        if self._q_extra is not None:
            l = l + self._q_extra
        if self._route == "linear":
            return cho_solve(self._factor, -l)
        if self._route == "separable":
            return self._solve_separable(l)
        return self._solve_pg(l, warm_start)

    def _solve_separable(self, l: np.ndarray) -> np.ndarray:
        d = self._diag
        w = self._w if self._w is not None else np.zeros(self.n)
        out = np.zeros(self.n)
        pos = d > 0
        if np.any(pos):
            out[pos] = soft_threshold(-l[pos], w[pos]) / d[pos]
        for j in np.nonzero(~pos)[0]:
            out[j] = self._solve_flat_coordinate(l[j], w[j], self._lo[j], self._hi[j])
        return np.minimum(np.maximum(out, self._lo), self._hi)

    @staticmethod
    def _solve_flat_coordinate(l: float, w: float, lo: float, hi: float) -> float:
        # minimize l*u + w*|u| over [lo, hi] with zero curvature
        if np.isposinf(hi) and l + w < 0:
            raise IllPosedSubproblemError("subproblem unbounded below")
        if np.isneginf(lo) and l - w > 0:
            raise IllPosedSubproblemError("subproblem unbounded below")
        candidates = [min(max(0.0, lo), hi)]
        if np.isfinite(lo):
            candidates.append(lo)
        if np.isfinite(hi):
            candidates.append(hi)
        values = [l * u + w * abs(u) for u in candidates]
        return candidates[int(np.argmin(values))]

    def _solve_pg(self, l: np.ndarray, warm_start) -> np.ndarray:
        H = self._H
        lo, hi = self._lo, self._hi
        w = self._w
        if warm_start is not None:
            x = np.minimum(np.maximum(np.asarray(warm_start, dtype=float), lo), hi)
        else:
            x = np.minimum(np.maximum(np.zeros(self.n), lo), hi)
        lip = self._lip
        if lip == 0.0:
            lip = 1.0
        t = 1.0 / lip
        guard = 1e12 * (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(l)))

        def total(v, Hv):
            out = 0.5 * float(v @ Hv) + float(l @ v)
            if w is not None:
                out += float(w @ np.abs(v))
            return out

        def forward(v, g, step):
            z = v - step * g
            if w is not None:
                z = soft_threshold(z, step * w)
            return np.minimum(np.maximum(z, lo), hi)

        y = x.copy()
        momentum = 1.0
        fx = total(x, H @ x)
        for _ in range(self._pg_max_iter):
            gy = H @ y + l
            smooth_y = 0.5 * float(y @ (H @ y)) + float(l @ y)
            while True:
                xn = forward(y, gy, t)
                dy = xn - y
                Hxn = H @ xn
                smooth_n = 0.5 * float(xn @ Hxn) + float(l @ xn)
                if smooth_n <= smooth_y + float(gy @ dy) + float(dy @ dy) / (
                    2.0 * t
                ) + 1e-15 * (1.0 + abs(smooth_y)):
                    break
                t *= 0.5
                if t < 1e-18:
                    break
            fn = smooth_n + (float(w @ np.abs(xn)) if w is not None else 0.0)
            if fn > fx:
                # restart: plain forward step from x cannot increase the value
                momentum = 1.0
                y = x
                gy = H @ y + l
                xn = forward(y, gy, t)
                Hxn = H @ xn
                fn = total(xn, Hxn)
            dx = xn - x
            nxn = float(np.linalg.norm(xn))
            if nxn > guard:
                raise IllPosedSubproblemError("projected gradient iterates diverge")
            done = float(np.linalg.norm(dx)) <= self._pg_tol * (1.0 + nxn)
            mn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
            y = xn + ((momentum - 1.0) / mn) * dx
            x, fx, momentum = xn, fn, mn
            if done:
                break
        return x


def solve_block_subproblem(req: SubproblemRequest) -> np.ndarray:
    """One-shot solve of a canonicalized block subproblem."""
    solver = BlockSubproblemSolver(
        req.handle, req.quadratic_coeff, req.local_set
    )
    return solver.solve(req.linear_coeff)
