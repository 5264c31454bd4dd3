"""Security-constrained DC optimal power flow as a coupled quadratic program.

Block 0 is the pre-contingency configuration with the quadratic generation
cost; blocks 1..C replicate the network with one branch removed apiece and
carry pure feasibility (zero objective). One slack block per contingency
turns the ramp coupling ``|u0 - uc| <= delta`` into the equality rows
``u0 - uc + s_c = 0`` with ``s_c`` boxed in ``[-delta, delta]``. Every
configuration's DC physics (flow definition, nodal balance, reference pin)
also lives in the coupling, as rows touching only that configuration's
block, with the demands on the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import BlockSpec, ProblemSpec, assemble_problem
from ..prox import LocalSet, ObjectiveHandle
from .oracle import OracleSolution, oracle_solve

__all__ = ["ScopfInstance", "gen_scopf_qp"]


@dataclass(eq=False)
class ScopfInstance:
    """Generated SCOPF data with layout helpers and ground truth."""

    buses: int
    branches: tuple[tuple[int, int], ...]
    susceptance: np.ndarray
    line_limit: np.ndarray
    gen_bus: np.ndarray
    cost_quad: np.ndarray
    cost_lin: np.ndarray
    u_max: np.ndarray
    demand: np.ndarray
    contingencies: tuple[int, ...]
    delta: np.ndarray
    seed: int
    base_dispatch: np.ndarray  # equality-only OPF dispatch used for scaling
    oracle: OracleSolution | None = None

    @property
    def num_generators(self) -> int:
        return self.gen_bus.shape[0]

    def config_branches(self, c: int) -> list[int]:
        """Branch indices present in configuration ``c`` (0 = base)."""
        if c == 0:
            return list(range(len(self.branches)))
        out = list(range(len(self.branches)))
        out.remove(self.contingencies[c - 1])
        return out

    def dispatch(self, x_star, c: int) -> np.ndarray:
        """Generation variables of configuration ``c`` from a solution."""
        nl_c = len(self.config_branches(c))
        block = x_star[c]
        return block[self.buses + nl_c :]

    def ground_truth(self) -> dict:
        doc = {
            "kind": "scopf",
            "seed": self.seed,
            "buses": self.buses,
            "branches": [list(b) for b in self.branches],
            "contingencies": list(self.contingencies),
            "delta": list(map(float, self.delta)),
            "demand": list(map(float, self.demand)),
            "base_dispatch": list(map(float, self.base_dispatch)),
        }
        if self.oracle is not None:
            doc["oracle_objective"] = self.oracle.objective_star
        return doc


def _connected(buses: int, edges) -> bool:
    adj = [[] for _ in range(buses)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * buses
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return all(seen)


def _dc_flows(buses, edges, susceptance, injection):
    """Phases and flows for given injections, reference bus 0 at angle zero."""
    L = np.zeros((buses, buses))
    for (i, j), b in zip(edges, susceptance):
        L[i, i] += b
        L[j, j] += b
        L[i, j] -= b
        L[j, i] -= b
    theta = np.zeros(buses)
    theta[1:] = np.linalg.solve(L[1:, 1:], injection[1:])
    flows = np.array([b * (theta[i] - theta[j]) for (i, j), b in zip(edges, susceptance)])
    return theta, flows


def gen_scopf_qp(
    buses: int,
    contingencies: int,
    seed: int,
    delta=None,
    with_oracle: bool = True,
) -> tuple[ScopfInstance, ProblemSpec]:
    """Generate a DC SCOPF instance in canonical coupled form.

    The network is a ring plus random chords, so every branch can be lost
    without disconnecting the grid; contingency branches are sampled among
    those. Line limits are set from the equality-only base dispatch so that
    holding that dispatch stays feasible in every configuration, which keeps
    the instance solvable even at ``delta = 0``.
    """
    if buses < 3:
        raise ValueError("need at least 3 buses")
    if contingencies < 0:
        raise ValueError("contingencies must be nonnegative")

    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % buses) for i in range(buses)]
    existing = {tuple(sorted(e)) for e in edges}
    attempts = 0
    while len(edges) < buses + buses // 2 and attempts < 50 * buses:
        attempts += 1
        i, j = sorted(rng.choice(buses, size=2, replace=False))
        if (i, j) not in existing:
            existing.add((i, j))
            edges.append((i, j))
    edges = [tuple(int(v) for v in e) for e in edges]
    nl = len(edges)

    if contingencies > nl - (buses - 1):
        raise ValueError(
            "too many contingencies: connectivity cannot be preserved"
        )

    susceptance = rng.uniform(1.0, 3.0, size=nl)
    ng = max(2, buses // 2)
    gen_bus = np.sort(rng.choice(buses, size=ng, replace=False))
    cost_quad = rng.uniform(0.8, 1.2, size=ng)
    cost_lin = rng.uniform(0.0, 0.2, size=ng)
    demand = rng.uniform(0.5, 1.5, size=buses)

    # equality-only base dispatch: marginal costs equal, total matches demand
    total = float(np.sum(demand))
    # minimize sum a_g u^2 + b_g u s.t. sum u = total  ->  u_g = (p - b_g)/(2 a_g)
    inv = 1.0 / (2.0 * cost_quad)
    price = (total + float(np.sum(cost_lin * inv))) / float(np.sum(inv))
    u_base = (price - cost_lin) * inv
    if np.any(u_base <= 0):
        raise RuntimeError("generated cost data yields a nonpositive base dispatch")
    u_max = np.maximum(2.0 * total / ng, 1.6 * u_base)

    candidates = [
        l for l in range(nl) if _connected(buses, edges[:l] + edges[l + 1 :])
    ]
    if contingencies > len(candidates):
        raise ValueError("requested contingencies would disconnect the network")
    chosen = ()
    if contingencies > 0:
        chosen = tuple(
            int(v)
            for v in np.sort(rng.choice(candidates, size=contingencies, replace=False))
        )

    injection = -demand.copy()
    for g, bus in enumerate(gen_bus):
        injection[bus] += u_base[g]

    flow_mag = np.zeros(nl)
    _, base_flows = _dc_flows(buses, edges, susceptance, injection)
    flow_mag = np.maximum(flow_mag, np.abs(base_flows))
    for br in chosen:
        sub_edges = edges[:br] + edges[br + 1 :]
        sub_b = np.concatenate([susceptance[:br], susceptance[br + 1 :]])
        _, flows = _dc_flows(buses, sub_edges, sub_b, injection)
        mags = np.abs(flows)
        flow_mag[:br] = np.maximum(flow_mag[:br], mags[:br])
        flow_mag[br + 1 :] = np.maximum(flow_mag[br + 1 :], mags[br:])
    line_limit = 1.5 * flow_mag + 0.3

    if delta is None:
        delta_vec = np.full(ng, 0.25 * float(np.mean(u_base)) + 0.05)
    else:
        delta_vec = np.asarray(delta, dtype=float) * np.ones(ng)
        if np.any(delta_vec < 0):
            raise ValueError("delta must be nonnegative")

    # row layout: per configuration (flow definitions, balances, reference),
    # then one ramp group per contingency
    C = contingencies
    config_branch_lists = [list(range(nl))] + [
        [l for l in range(nl) if l != br] for br in chosen
    ]
    config_rows = [len(bl) + buses + 1 for bl in config_branch_lists]
    row_offsets = np.concatenate(([0], np.cumsum(config_rows))).astype(int)
    ramp_start = int(row_offsets[-1])
    m = ramp_start + C * ng

    c_vec = np.zeros(m)
    for cfg in range(C + 1):
        nl_c = len(config_branch_lists[cfg])
        c_vec[row_offsets[cfg] + nl_c : row_offsets[cfg] + nl_c + buses] = demand

    def config_coupling(cfg: int) -> np.ndarray:
        branch_list = config_branch_lists[cfg]
        nl_c = len(branch_list)
        n = buses + nl_c + ng
        A = np.zeros((m, n))
        base = row_offsets[cfg]
        for pos, l in enumerate(branch_list):
            i, j = edges[l]
            b = susceptance[l]
            A[base + pos, buses + pos] = 1.0
            A[base + pos, i] = -b
            A[base + pos, j] = b
        for pos, l in enumerate(branch_list):
            i, j = edges[l]
            A[base + nl_c + j, buses + pos] += 1.0
            A[base + nl_c + i, buses + pos] -= 1.0
        for g, bus in enumerate(gen_bus):
            A[base + nl_c + bus, buses + nl_c + g] += 1.0
        A[base + nl_c + buses, 0] = 1.0
        return A

    couplings = []
    handles = []
    sets = []
    for cfg in range(C + 1):
        branch_list = config_branch_lists[cfg]
        nl_c = len(branch_list)
        n = buses + nl_c + ng
        A = config_coupling(cfg)
        u_cols = slice(buses + nl_c, n)
        for k in range(C):
            group = ramp_start + k * ng
            if cfg == 0:
                A[group : group + ng, u_cols] = np.eye(ng)
            elif cfg == k + 1:
                A[group : group + ng, u_cols] = -np.eye(ng)
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        limits = line_limit[branch_list]
        lo[buses : buses + nl_c] = -limits
        hi[buses : buses + nl_c] = limits
        lo[u_cols] = 0.0
        hi[u_cols] = u_max
        if cfg == 0:
            Q = np.zeros((n, n))
            q = np.zeros(n)
            idx = np.arange(buses + nl_c, n)
            Q[idx, idx] = 2.0 * cost_quad
            q[idx] = cost_lin
            handles.append(ObjectiveHandle.quadratic(Q, q))
        else:
            handles.append(ObjectiveHandle.zero())
        couplings.append(A)
        sets.append(LocalSet.box(lo, hi))

    for k in range(C):
        A = np.zeros((m, ng))
        group = ramp_start + k * ng
        A[group : group + ng, :] = np.eye(ng)
        couplings.append(A)
        handles.append(ObjectiveHandle.zero())
        sets.append(LocalSet.box(-delta_vec, delta_vec))

    # normalize coupling rows to unit max entry: keeps the Gram matrices of
    # the blocks well conditioned without changing the feasible set
    row_scale = np.ones(m)
    for A in couplings:
        row_scale = np.maximum(row_scale, np.max(np.abs(A), axis=1))
    for A in couplings:
        A /= row_scale[:, None]
    c_vec = c_vec / row_scale

    blocks = [
        BlockSpec(objective=h, coupling=A, local_set=s)
        for h, A, s in zip(handles, couplings, sets)
    ]
    problem = assemble_problem(blocks, c_vec)
    oracle = oracle_solve(problem) if with_oracle else None
    instance = ScopfInstance(
        buses=buses,
        branches=tuple(edges),
        susceptance=susceptance,
        line_limit=line_limit,
        gen_bus=gen_bus,
        cost_quad=cost_quad,
        cost_lin=cost_lin,
        u_max=u_max,
        demand=demand,
        contingencies=chosen,
        delta=delta_vec,
        seed=seed,
        base_dispatch=u_base,
        oracle=oracle,
    )
    return instance, problem
