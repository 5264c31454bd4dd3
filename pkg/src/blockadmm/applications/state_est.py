"""Multi-area robust state estimation with sparse bad-data injection.

Areas estimate their own states from linear measurements while consenting
with neighbors on shared boundary coordinates. Each area's block variable
stacks its state vector with a per-measurement injection vector; the data
misfit is quadratic and the injection carries a weighted l1 penalty so that
sparse attacks can be separated from Gaussian noise. The consensus
constraints become coupling rows with exactly one +1 and one -1 entry and a
zero right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import BlockSpec, ProblemSpec, assemble_problem
from ..prox import LocalSet, ObjectiveHandle
from .oracle import OracleSolution, oracle_solve

__all__ = ["StateEstInstance", "gen_state_estimation"]


@dataclass(eq=False)
class StateEstInstance:
    """Generated instance plus ground truth (true states, attack support)."""

    areas: int
    boundary_size: int
    edges: tuple[tuple[int, int], ...]
    jacobians: tuple[np.ndarray, ...]
    measurements: tuple[np.ndarray, ...]
    true_states: tuple[np.ndarray, ...]
    attack: tuple[np.ndarray, ...]
    attack_support: tuple[tuple[int, int], ...]  # (area, measurement index)
    beta: float
    noise_sigma: float
    seed: int
    shared_slices: dict
    oracle: OracleSolution | None = None

    @property
    def state_dims(self) -> tuple[int, ...]:
        return tuple(J.shape[1] for J in self.jacobians)

    @property
    def measurement_dims(self) -> tuple[int, ...]:
        return tuple(J.shape[0] for J in self.jacobians)

    def split_block(self, i: int, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split area ``i``'s block variable into (state, injection)."""
        n = self.jacobians[i].shape[1]
        return u[:n], u[n:]

    def estimated_states(self, x_star) -> list[np.ndarray]:
        return [self.split_block(i, u)[0] for i, u in enumerate(x_star)]

    def estimated_attacks(self, x_star) -> list[np.ndarray]:
        return [self.split_block(i, u)[1] for i, u in enumerate(x_star)]

    def recovered_support(self, x_star, threshold: float) -> tuple[tuple[int, int], ...]:
        """Measurement slots whose estimated injection exceeds ``threshold``."""
        found = []
        for i, o in enumerate(self.estimated_attacks(x_star)):
            for j in np.nonzero(np.abs(o) > threshold)[0]:
                found.append((i, int(j)))
        return tuple(sorted(found))

    def ground_truth(self) -> dict:
        doc = {
            "kind": "state_estimation",
            "seed": self.seed,
            "beta": self.beta,
            "noise_sigma": self.noise_sigma,
            "true_states": [list(map(float, s)) for s in self.true_states],
            "attack_support": [list(s) for s in sorted(self.attack_support)],
        }
        if self.oracle is not None:
            doc["oracle_objective"] = self.oracle.objective_star
        return doc


def gen_state_estimation(
    areas: int,
    boundary_size: int,
    attack_cardinality: int,
    beta: float,
    seed: int,
    noise_sigma: float = 0.01,
    interior_size: int = 3,
    with_oracle: bool = True,
) -> tuple[StateEstInstance, ProblemSpec]:
    """Generate a multi-area estimation problem in canonical coupled form.

    Areas form a chain (two areas) or a ring; adjacent areas share
    ``boundary_size`` coordinates. Measurements are
    ``J_i @ true + attack + noise`` with noise scaled by ``noise_sigma``
    relative to the clean signal, and attack magnitudes in 1-2x signal
    scale on ``attack_cardinality`` random measurement slots.
    """
    if areas < 2:
        raise ValueError("need at least 2 areas")
    if boundary_size < 1:
        raise ValueError("boundary_size must be positive")
    if attack_cardinality < 0:
        raise ValueError("attack_cardinality must be nonnegative")
    if beta < 0:
        raise ValueError("beta must be nonnegative")

    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(areas - 1)]
    if areas >= 3:
        edges.append((0, areas - 1))
    edges = tuple(edges)

    neighbors: list[list[int]] = [[] for _ in range(areas)]
    for i, j in edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    neighbors = [sorted(ns) for ns in neighbors]

    # column layout per area: interior first, then one slice per neighbor
    shared_slices = {}
    state_dims = []
    for i in range(areas):
        pos = interior_size
        for j in neighbors[i]:
            shared_slices[(i, j)] = slice(pos, pos + boundary_size)
            pos += boundary_size
        state_dims.append(pos)

    edge_truth = {e: rng.normal(size=boundary_size) for e in edges}
    true_states = []
    for i in range(areas):
        s = np.zeros(state_dims[i])
        s[:interior_size] = rng.normal(size=interior_size)
        for j in neighbors[i]:
            e = (i, j) if i < j else (j, i)
            s[shared_slices[(i, j)]] = edge_truth[e]
        true_states.append(s)

    jacobians = []
    clean = []
    for i in range(areas):
        p = state_dims[i] + 4
        J = rng.normal(size=(p, state_dims[i]))
        jacobians.append(J)
        clean.append(J @ true_states[i])

    stacked_clean = np.concatenate(clean)
    scale = max(1.0, float(np.sqrt(np.mean(stacked_clean**2))))

    meas_dims = [J.shape[0] for J in jacobians]
    total_meas = int(sum(meas_dims))
    if attack_cardinality > total_meas:
        raise ValueError("attack_cardinality exceeds the number of measurements")
    attack = [np.zeros(p) for p in meas_dims]
    support = []
    if attack_cardinality > 0:
        slots = rng.choice(total_meas, size=attack_cardinality, replace=False)
        bounds = np.concatenate(([0], np.cumsum(meas_dims)))
        for s in sorted(int(v) for v in slots):
            area = int(np.searchsorted(bounds, s, side="right")) - 1
            idx = s - int(bounds[area])
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            attack[area][idx] = sign * rng.uniform(1.0, 2.0) * scale
            support.append((area, idx))

    measurements = []
    for i in range(areas):
        noise = noise_sigma * scale * rng.standard_normal(meas_dims[i])
        measurements.append(clean[i] + attack[i] + noise)

    # consensus rows: one per shared coordinate, entries +1 (smaller area) / -1
    m_rows = len(edges) * boundary_size
    couplings = [np.zeros((m_rows, state_dims[i] + meas_dims[i])) for i in range(areas)]
    row = 0
    for (i, j) in edges:
        si = shared_slices[(i, j)]
        sj = shared_slices[(j, i)]
        for t in range(boundary_size):
            couplings[i][row, si.start + t] = 1.0
            couplings[j][row, sj.start + t] = -1.0
            row += 1

    blocks = []
    for i in range(areas):
        J = jacobians[i]
        mi = measurements[i]
        n, p = state_dims[i], meas_dims[i]
        # 0.5 || m - J x - o ||^2 on the stacked variable u = (x, o)
        G = np.hstack([J, np.eye(p)])
        Q = G.T @ G
        q = -(G.T @ mi)
        offset = 0.5 * float(mi @ mi)
        weights = np.concatenate([np.zeros(n), np.ones(p)])
        handle = ObjectiveHandle.sum_of(
            ObjectiveHandle.quadratic(Q, q, offset=offset),
            ObjectiveHandle.l1(beta, weights=weights),
        )
        blocks.append(
            BlockSpec(objective=handle, coupling=couplings[i], local_set=LocalSet.unbounded())
        )

    problem = assemble_problem(blocks, np.zeros(m_rows))
    oracle = oracle_solve(problem) if with_oracle else None
    instance = StateEstInstance(
        areas=areas,
        boundary_size=boundary_size,
        edges=edges,
        jacobians=tuple(jacobians),
        measurements=tuple(measurements),
        true_states=tuple(true_states),
        attack=tuple(attack),
        attack_support=tuple(sorted(support)),
        beta=float(beta),
        noise_sigma=float(noise_sigma),
        seed=seed,
        shared_slices=shared_slices,
        oracle=oracle,
    )
    return instance, problem
