"""Offline oracles for the grouping problem.

* ``opt_matching_m1``: maximum bipartite matching between slots and devices
  (exact when each slot holds one device).
* ``opt_bruteforce_frame``: exact single-frame optimum by dynamic
  programming over (slot, set of devices still unserved).
* ``opt_ilp_frame``: exact single-frame optimum as a set-packing ILP over
  the enumerated feasible groups, solved with HiGHS; used where the
  bitmask search is out of reach.
* ``opt_bruteforce_horizon``: exact multi-frame optimum over per-frame
  power-lattice splits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .model import Instance, NomaGroup, geq, sic_order
from .online import FrameResult, _budgets, solo_feasible


class GuardError(ValueError):
    """Raised when an instance is too large for an exhaustive oracle."""


@dataclass(frozen=True)
class FrameGuard:
    max_devices: int = 10
    max_slots: int = 5


@dataclass(frozen=True)
class HorizonGuard:
    max_devices: int = 4
    max_frames: int = 3
    max_power_level: int = 3


def bipartite_edges(instance: Instance, frame: int, budgets=None) -> np.ndarray:
    """(n, m) adjacency: slot j -- device i iff i could be served alone in j."""
    return solo_feasible(instance, frame, budgets).T


def opt_matching_m1(instance: Instance, frame: int, budgets=None) -> dict[int, int]:
    """Maximum matching slot -> device for the one-device-per-slot case."""
    if instance.group_cap != 1:
        raise ValueError("the matching oracle requires group_cap == 1")
    adj = bipartite_edges(instance, frame, budgets)
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return {j: int(i) for j, i in enumerate(match) if i >= 0}


def feasible_groups(order: list[int], gains, budgets, thresholds, cap: int) -> list[tuple[int, ...]]:
    """All non-empty feasible groups of at most ``cap`` devices from ``order``.

    ``order`` must be in SIC order. Feasibility is closed under taking
    subsets, so extending groups only by higher-gain devices reaches all
    of them while checking just the newcomer.
    """
    out: list[tuple[int, ...]] = []

    def extend(group: tuple[int, ...], start: int, received: float):
        for pos in range(start, len(order)):
            i = order[pos]
            signal = budgets[i] * gains[i]
            if geq(signal, thresholds[i] * (1.0 + received)):
                g = group + (i,)
                out.append(g)
                if len(g) < cap:
                    extend(g, pos + 1, received + signal)

    extend((), 0, 0.0)
    return out


def _slot_candidates(instance: Instance, frame: int, budgets: np.ndarray, cap: int):
    b = instance.thresholds(frame)
    edges = solo_feasible(instance, frame, budgets)
    per_slot = []
    for j in range(instance.num_slots):
        g = instance.gains[:, j, frame]
        order = sic_order(np.nonzero(edges[:, j])[0].tolist(), g)
        per_slot.append(feasible_groups(order, g, budgets, b, cap))
    return per_slot


def _result(frame: int, instance: Instance, chosen: dict[int, tuple[int, ...]],
            budgets: np.ndarray) -> FrameResult:
    res = FrameResult(frame)
    for j in sorted(chosen):
        members = sic_order(chosen[j], instance.gains[:, j, frame])
        res.groups.append(NomaGroup(j, frame, members, [float(budgets[i]) for i in members]))
    return res


def opt_bruteforce_frame(instance: Instance, frame: int, budgets=None,
                         guard: FrameGuard | None = FrameGuard()) -> FrameResult:
    """Exact single-frame optimum (each device served at most once)."""
    m, n = instance.num_devices, instance.num_slots
    if guard is not None and (m > guard.max_devices or n > guard.max_slots):
        raise GuardError(f"frame oracle limited to m <= {guard.max_devices}, "
                         f"n <= {guard.max_slots} (got m={m}, n={n})")
    budgets = _budgets(instance, budgets)
    cap = instance.group_cap
    candidates = [[(sum(1 << i for i in g), g) for g in slot]
                  for slot in _slot_candidates(instance, frame, budgets, cap)]
    # devices that still matter from slot j on
    future = [0] * (n + 1)
    for j in range(n - 1, -1, -1):
        future[j] = future[j + 1]
        for mask, _ in candidates[j]:
            future[j] |= mask

    @lru_cache(maxsize=None)
    def best(j: int, free: int) -> tuple[int, tuple]:
        # ``free`` is already restricted to ``future[j]``
        if j == n:
            return 0, ()
        value, plan = best(j + 1, free & future[j + 1])
        for mask, g in candidates[j]:
            if mask & free == mask:
                v, p = best(j + 1, free & ~mask & future[j + 1])
                if v + len(g) > value:
                    value, plan = v + len(g), ((j, g),) + p
        return value, plan

    _, plan = best(0, future[0])
    best.cache_clear()
    return _result(frame, instance, dict(plan), budgets)


def opt_ilp_frame(instance: Instance, frame: int, budgets=None,
                  time_limit: float | None = None) -> FrameResult:
    """Exact single-frame optimum as set packing over feasible groups.

    Variables are (slot, group) pairs; each slot takes at most one group
    and each device joins at most one chosen group. All coefficients are
    0/1, so the solve is free of the conditioning issues of big-M rows.
    """
    budgets = _budgets(instance, budgets)
    m = instance.num_devices
    cols: list[tuple[int, tuple[int, ...]]] = []
    for j, groups in enumerate(_slot_candidates(instance, frame, budgets, instance.group_cap)):
        cols.extend((j, g) for g in groups)
    if not cols:
        return FrameResult(frame)
    n_rows = m + instance.num_slots
    rows, cidx = [], []
    for c, (j, g) in enumerate(cols):
        for i in g:
            rows.append(i)
            cidx.append(c)
        rows.append(m + j)
        cidx.append(c)
    A = csr_matrix((np.ones(len(rows)), (rows, cidx)), shape=(n_rows, len(cols)))
    weights = -np.array([len(g) for _, g in cols], dtype=float)
    options = {"time_limit": time_limit} if time_limit else {}
    sol = milp(weights, constraints=LinearConstraint(A, -np.inf, 1.0),
               integrality=np.ones(len(cols)), bounds=Bounds(0, 1), options=options)
    if sol.x is None or sol.status != 0:
        raise RuntimeError(f"ILP solve failed: {sol.message}")
    chosen = {cols[c][0]: cols[c][1] for c in np.nonzero(sol.x > 0.5)[0]}
    return _result(frame, instance, chosen, budgets)


def lattice_budgets(instance: Instance, units: np.ndarray) -> np.ndarray:
    """Watts for integer multiples of each device's power step."""
    return np.asarray(units) * instance.max_energy / instance.power_level


def opt_horizon(instance: Instance, guard: HorizonGuard | None = HorizonGuard(),
                frame_guard: FrameGuard | None = FrameGuard()) -> tuple[int, list[FrameResult]]:
    """Maximum total served count over all lattice power splits across
    frames, with one optimal per-frame grouping.

    Dynamic programming over frames with the vector of remaining power
    units as state; every frame is solved exactly for the spent vector.
    """
    m, k = instance.num_devices, instance.num_frames
    tau = instance.power_level
    if guard is not None and (m > guard.max_devices or k > guard.max_frames
                              or tau.max() > guard.max_power_level):
        raise GuardError(f"horizon oracle limited to m <= {guard.max_devices}, "
                         f"k <= {guard.max_frames}, tau <= {guard.max_power_level}")

    @lru_cache(maxsize=None)
    def frame_value(t: int, spend: tuple[int, ...]) -> int:
        if not any(spend):
            return 0
        return opt_bruteforce_frame(instance, t, lattice_budgets(instance, np.array(spend)),
                                    frame_guard).nsd

    @lru_cache(maxsize=None)
    def value(t: int, remaining: tuple[int, ...]) -> tuple[int, tuple]:
        if t == k:
            return 0, ()
        best, plan = -1, ()
        for spend in itertools.product(*(range(r + 1) for r in remaining)):
            rest = tuple(r - s for r, s in zip(remaining, spend))
            v, p = value(t + 1, rest)
            v += frame_value(t, spend)
            if v > best:
                best, plan = v, (spend,) + p
        return best, plan

    total, plan = value(0, tuple(int(x) for x in tau))
    frames = [opt_bruteforce_frame(instance, t, lattice_budgets(instance, np.array(spend)),
                                   frame_guard)
              for t, spend in enumerate(plan)]
    return total, frames


def opt_bruteforce_horizon(instance: Instance, guard: HorizonGuard | None = HorizonGuard(),
                           frame_guard: FrameGuard | None = FrameGuard()) -> int:
    """Optimal total served count over the whole horizon."""
    return opt_horizon(instance, guard, frame_guard)[0]
