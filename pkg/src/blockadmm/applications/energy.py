"""Device-and-net energy management over a short horizon.

Devices (generators, fixed loads, ideal storage, DC lines) are the blocks;
nets couple them. Balance rows force the terminal power injections on each
net to sum to zero per period, and phase-consistency rows tie the phase
variables of all terminals on a net together; the right-hand side is zero.
Phases stay in the linear DC regime, with the first generator's phase boxed
to zero as the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import BlockSpec, ProblemSpec, assemble_problem
from ..prox import LocalSet, ObjectiveHandle
from .oracle import OracleSolution, oracle_solve

__all__ = ["Device", "EnergyMgmtInstance", "gen_energy_management"]


@dataclass(eq=False)
class Device:
    """One device block: kind, attached nets, and its physical data."""

    kind: str  # generator | load | storage | line
    name: str
    nets: tuple[int, ...]
    cost_quad: float = 0.0
    cost_lin: float = 0.0
    p_max: float = 0.0
    demand: np.ndarray | None = None
    capacity: float = 0.0
    susceptance: float = 0.0


@dataclass(eq=False)
class EnergyMgmtInstance:
    """Generated network with its device list and reference solution."""

    devices: tuple[Device, ...]
    nets: int
    horizon: int
    seed: int
    oracle: OracleSolution | None = None

    def power_schedule(self, x_star, device_index: int) -> np.ndarray:
        """Power (or stored-energy, for storage) variables of one device."""
        d = self.devices[device_index]
        T = self.horizon
        count = T + 1 if d.kind == "storage" else T
        return x_star[device_index][:count]

    def total_demand(self) -> np.ndarray:
        out = np.zeros(self.horizon)
        for d in self.devices:
            if d.kind == "load":
                out += -d.demand
        return out

    def ground_truth(self) -> dict:
        doc = {
            "kind": "energy_management",
            "seed": self.seed,
            "nets": self.nets,
            "horizon": self.horizon,
            "devices": [
                {"kind": d.kind, "name": d.name, "nets": list(d.nets)}
                for d in self.devices
            ],
            "demand": [list(map(float, -d.demand)) for d in self.devices if d.kind == "load"],
        }
        if self.oracle is not None:
            doc["oracle_objective"] = self.oracle.objective_star
        return doc


def _device_vars(device: Device, horizon: int) -> int:
    if device.kind == "storage":
        return (horizon + 1) + horizon
    return 2 * horizon


def _theta_col(device: Device, slot: int, tau: int, horizon: int) -> int:
    if device.kind == "storage":
        return (horizon + 1) + tau
    if device.kind == "line":
        return slot * horizon + tau
    return horizon + tau


def gen_energy_management(
    generators: int,
    loads: int,
    nets: int,
    horizon: int,
    seed: int,
    storages: int = 0,
    demand_scale: float = 1.0,
    with_oracle: bool = True,
) -> tuple[EnergyMgmtInstance, ProblemSpec]:
    """Generate a coupled schedule optimization over ``horizon`` periods.

    Generators carry convex quadratic costs and box limits, loads draw a
    fixed demand, storage devices are ideal energy buffers, and consecutive
    nets are linked by DC lines whose flow is susceptance times the phase
    difference. Raises when a net ends up with fewer than two terminals.
    """
    if generators < 1 or loads < 1 or nets < 1 or horizon < 1:
        raise ValueError("generators, loads, nets, and horizon must be positive")
    if storages < 0:
        raise ValueError("storages must be nonnegative")
    if demand_scale < 0:
        raise ValueError("demand_scale must be nonnegative")

    rng = np.random.default_rng(seed)
    T = horizon
    devices: list[Device] = []

    demands = []
    for l in range(loads):
        demands.append(demand_scale * rng.uniform(0.5, 1.5, size=T))
    peak = float(np.max(np.sum(demands, axis=0))) if demands else 0.0

    for g in range(generators):
        devices.append(
            Device(
                kind="generator",
                name=f"gen{g}",
                nets=(g % nets,),
                cost_quad=float(rng.uniform(0.5, 1.5)),
                cost_lin=float(rng.uniform(0.1, 0.5)),
                p_max=max(1.0, 2.0 * peak / generators) * float(rng.uniform(0.9, 1.1)),
            )
        )
    for l in range(loads):
        devices.append(
            Device(
                kind="load",
                name=f"load{l}",
                nets=((generators + l) % nets,),
                demand=-demands[l],
            )
        )
    for s in range(storages):
        devices.append(
            Device(
                kind="storage",
                name=f"store{s}",
                nets=((generators + loads + s) % nets,),
                capacity=float(rng.uniform(1.0, 2.0)) * max(1.0, peak / 2.0),
            )
        )
    for n in range(nets - 1):
        devices.append(
            Device(
                kind="line",
                name=f"line{n}",
                nets=(n, n + 1),
                susceptance=float(rng.uniform(2.0, 6.0)),
            )
        )

    terminals: list[list[tuple[int, int]]] = [[] for _ in range(nets)]
    for di, d in enumerate(devices):
        for slot, net in enumerate(d.nets):
            terminals[net].append((di, slot))
    for n, ts in enumerate(terminals):
        if len(ts) < 2:
            raise ValueError(f"dangling net {n}: touched by {len(ts)} terminal(s)")

    sizes = [_device_vars(d, T) for d in devices]
    balance_rows = nets * T
    phase_rows = sum((len(ts) - 1) * T for ts in terminals)
    m = balance_rows + phase_rows
    couplings = [np.zeros((m, sz)) for sz in sizes]

    for net, ts in enumerate(terminals):
        for tau in range(T):
            row = net * T + tau
            for di, slot in ts:
                d = devices[di]
                A = couplings[di]
                if d.kind in ("generator", "load"):
                    A[row, tau] += 1.0
                elif d.kind == "storage":
                    # injection is the discharged energy E(tau) - E(tau+1)
                    A[row, tau] += 1.0
                    A[row, tau + 1] -= 1.0
                else:  # line: lossless flow B * (theta_a - theta_b) from a to b
                    B = d.susceptance
                    ca = _theta_col(d, 0, tau, T)
                    cb = _theta_col(d, 1, tau, T)
                    if slot == 0:
                        A[row, ca] -= B
                        A[row, cb] += B
                    else:
                        A[row, ca] += B
                        A[row, cb] -= B

    row = balance_rows
    for ts in terminals:
        for k in range(len(ts) - 1):
            da, sa = ts[k]
            db, sb = ts[k + 1]
            for tau in range(T):
                couplings[da][row, _theta_col(devices[da], sa, tau, T)] += 1.0
                couplings[db][row, _theta_col(devices[db], sb, tau, T)] -= 1.0
                row += 1

    blocks = []
    reference_set = False
    for di, d in enumerate(devices):
        sz = sizes[di]
        lo = np.full(sz, -np.inf)
        hi = np.full(sz, np.inf)
        handle = ObjectiveHandle.zero()
        if d.kind == "generator":
            Q = np.zeros((sz, sz))
            q = np.zeros(sz)
            Q[np.arange(T), np.arange(T)] = 2.0 * d.cost_quad
            q[:T] = d.cost_lin
            handle = ObjectiveHandle.quadratic(Q, q)
            lo[:T] = 0.0
            hi[:T] = d.p_max
            if not reference_set:
                lo[T:] = 0.0
                hi[T:] = 0.0
                reference_set = True
        elif d.kind == "load":
            lo[:T] = d.demand
            hi[:T] = d.demand
        elif d.kind == "storage":
            lo[: T + 1] = 0.0
            hi[: T + 1] = d.capacity
            lo[0] = hi[0] = 0.5 * d.capacity
        blocks.append(
            BlockSpec(
                objective=handle,
                coupling=couplings[di],
                local_set=LocalSet.box(lo, hi),
            )
        )

    problem = assemble_problem(blocks, np.zeros(m))
    oracle = oracle_solve(problem) if with_oracle else None
    instance = EnergyMgmtInstance(
        devices=tuple(devices), nets=nets, horizon=T, seed=seed, oracle=oracle
    )
    return instance, problem
