"""Online per-frame grouping: the greedy slot matcher, the slot-by-slot
scheduler built on it, ranking for OMA (M = 1) and the selfish rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Instance, NomaGroup, Schedule, geq, group_feasible, sic_order


@dataclass
class SlotContext:
    slot: int
    frame: int
    eligible: list[int]
    gains: np.ndarray  # indexed by device id
    budgets: np.ndarray
    thresholds: np.ndarray

    @classmethod
    def build(cls, instance: Instance, frame: int, slot: int, budgets: np.ndarray,
              remaining: set[int] | np.ndarray | None = None,
              thresholds: np.ndarray | None = None) -> "SlotContext":
        """Eligible devices: not yet served, slot in window, power and packet positive."""
        if thresholds is None:
            thresholds = instance.thresholds(frame)
        ok = (instance.window(frame)[:, slot] & (np.asarray(budgets) > 0)
              & (instance.packet_bits[:, frame] > 0))
        if remaining is not None:
            mask = np.zeros(instance.num_devices, dtype=bool)
            mask[list(remaining)] = True
            ok &= mask
        return cls(slot, frame, np.nonzero(ok)[0].tolist(), instance.gains[:, slot, frame],
                   np.asarray(budgets, dtype=float), thresholds)


@dataclass
class OpCounter:
    """Counts candidate inspections made by :func:`greedy_accept`."""

    inspected: int = 0


def greedy_accept(ctx: SlotContext, limit: int | None = None,
                  counter: OpCounter | None = None, presorted: bool = False) -> list[int]:
    """Scan eligible devices by ascending gain, admitting each one whose SINR
    requirement holds on top of the devices admitted so far.

    The full scan (``limit=None``) returns a maximum-cardinality feasible
    set; with ``limit`` the scan stops after that many admissions.
    """
    order = ctx.eligible if presorted else sic_order(ctx.eligible, ctx.gains)
    accepted: list[int] = []
    received = 0.0
    for i in order:
        if counter is not None:
            counter.inspected += 1
        signal = ctx.budgets[i] * ctx.gains[i]
        if geq(signal, ctx.thresholds[i] * (1.0 + received)):
            accepted.append(i)
            received += signal
            if limit is not None and len(accepted) >= limit:
                break
    return accepted


def bm_j(ctx: SlotContext, group_cap: int, counter: OpCounter | None = None) -> NomaGroup:
    """Largest feasible group in one slot, truncated to the first ``group_cap``
    admitted (lowest-gain) devices."""
    members = greedy_accept(ctx, limit=group_cap, counter=counter)
    return NomaGroup(ctx.slot, ctx.frame, members, [float(ctx.budgets[i]) for i in members])


@dataclass
class FrameResult:
    frame: int
    groups: list[NomaGroup] = field(default_factory=list)

    @property
    def served(self) -> set[int]:
        return {i for g in self.groups for i in g.members}

    @property
    def nsd(self) -> int:
        return sum(len(g) for g in self.groups)

    def fill(self, schedule: Schedule) -> Schedule:
        for g in self.groups:
            for i, e in zip(g.members, g.budgets):
                schedule.assign(i, g.slot, self.frame, e)
        return schedule


def _budgets(instance: Instance, budgets) -> np.ndarray:
    if budgets is None:
        return instance.max_energy.copy()
    budgets = np.asarray(budgets, dtype=float)
    if budgets.shape != (instance.num_devices,) or np.any(budgets < 0):
        raise ValueError("budgets must be a non-negative vector with one entry per device")
    return budgets


def bms(instance: Instance, frame: int, budgets=None, group_cap: int | None = None) -> FrameResult:
    """Serve slots in order, each with :func:`bm_j` over the devices not yet served."""
    budgets = _budgets(instance, budgets)
    cap = instance.group_cap if group_cap is None else group_cap
    b = instance.thresholds(frame)
    win = instance.window(frame)
    active = (budgets > 0) & (instance.packet_bits[:, frame] > 0)
    result = FrameResult(frame)
    for j in range(instance.num_slots):
        eligible = np.nonzero(active & win[:, j])[0].tolist()
        ctx = SlotContext(j, frame, eligible, instance.gains[:, j, frame], budgets, b)
        group = bm_j(ctx, cap)
        if group.members:
            result.groups.append(group)
            active[group.members] = False
    return result


def solo_feasible(instance: Instance, frame: int, budgets=None) -> np.ndarray:
    """(m, n) mask of device/slot pairs that could be served alone."""
    budgets = _budgets(instance, budgets)
    b = instance.thresholds(frame)
    signal = budgets[:, None] * instance.gains[:, :, frame]
    ok = signal >= b[:, None] * (1 - 1e-9)
    return ok & instance.window(frame) & (budgets > 0)[:, None] & (
        instance.packet_bits[:, frame] > 0)[:, None]


def ranking_m1(instance: Instance, frame: int, permutation: Sequence[int],
               budgets=None) -> FrameResult:
    """Ranking for M = 1: each slot serves the feasible unserved device of smallest rank.

    ``permutation[i]`` is the rank of device ``i``.
    """
    if instance.group_cap != 1:
        raise ValueError("ranking applies to group_cap == 1 only")
    rank = np.asarray(permutation)
    m = instance.num_devices
    if sorted(rank.tolist()) != list(range(m)):
        raise ValueError("permutation must be a permutation of device ids")
    budgets = _budgets(instance, budgets)
    edges = solo_feasible(instance, frame, budgets)
    served = np.zeros(m, dtype=bool)
    result = FrameResult(frame)
    for j in range(instance.num_slots):
        cand = np.nonzero(edges[:, j] & ~served)[0]
        if cand.size:
            i = int(cand[np.argmin(rank[cand])])
            served[i] = True
            result.groups.append(NomaGroup(j, frame, [i], [float(budgets[i])]))
    return result


def selfish_slot(gains, budgets, thresholds, transmitters: list[int]) -> list[int]:
    """Decode one slot where every listed device transmits at full budget.

    Every transmitter, decoded or not, adds to the interference of all
    higher-gain transmitters.
    """
    order = sic_order(transmitters, gains)
    served = []
    received = 0.0
    for i in order:
        signal = budgets[i] * gains[i]
        if geq(signal, thresholds[i] * (1.0 + received)):
            served.append(i)
        received += signal
    return served


def selfish_frame(instance: Instance, frame: int, budgets=None,
                  group_cap: int | None = None) -> FrameResult:
    """Each unserved device transmits whenever it would succeed alone.

    The receiver keeps at most ``group_cap`` decoded devices per slot (the
    lowest-gain ones); the rest stay unserved for later slots.
    """
    budgets = _budgets(instance, budgets)
    cap = instance.group_cap if group_cap is None else group_cap
    b = instance.thresholds(frame)
    edges = solo_feasible(instance, frame, budgets)
    served = np.zeros(instance.num_devices, dtype=bool)
    result = FrameResult(frame)
    for j in range(instance.num_slots):
        tx = np.nonzero(edges[:, j] & ~served)[0].tolist()
        ok = selfish_slot(instance.gains[:, j, frame], budgets, b, tx)[:cap]
        if ok:
            served[ok] = True
            result.groups.append(NomaGroup(j, frame, ok, [float(budgets[i]) for i in ok]))
    return result


def frames_to_schedule(instance: Instance, results: Sequence[FrameResult]) -> Schedule:
    schedule = Schedule.for_instance(instance)
    for r in results:
        r.fill(schedule)
    return schedule


def is_feasible_group(instance: Instance, group: NomaGroup) -> bool:
    b = instance.thresholds(group.frame)
    g = instance.gains[group.members, group.slot, group.frame]
    return group_feasible(g, group.budgets, b[group.members])
