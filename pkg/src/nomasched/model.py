"""Physical and optimization model of the uplink NOMA grouping problem.

Gains are noise-normalized linear power gains, powers are in watts and a
resource block (RB) is one unit-length slot of bandwidth ``rb_bandwidth_hz``.
Within an RB the base station decodes in descending gain order, so a member
only sees interference from members with a lower gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

REL_TOL = 1e-9


def geq(lhs: float, rhs: float, rel_tol: float = REL_TOL) -> bool:
    """``lhs >= rhs`` up to a relative tolerance on ``rhs``."""
    return lhs >= rhs - rel_tol * abs(rhs)


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    max_energy: float
    power_level: int = 1
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.max_energy > 0:
            raise ValueError(f"device {self.id}: max_energy must be positive")
        if self.power_level < 1:
            raise ValueError(f"device {self.id}: power_level must be >= 1")


@dataclass(frozen=True)
class FrameDemand:
    packet_bits: int
    arrival_slot: int
    deadline_slot: int

    def __post_init__(self):
        if self.packet_bits < 0:
            raise ValueError("packet_bits must be non-negative")
        if self.deadline_slot <= self.arrival_slot:
            raise ValueError("deadline_slot must exceed arrival_slot")


@dataclass(eq=False)
class Instance:
    """Full problem input.

    Slots and frames are 0-based indices in arrays; ``arrival`` and
    ``deadline`` keep the 1-based slot numbering of the model, so slot
    index ``j`` lies in the window of device ``i`` at frame ``t`` iff
    ``arrival[i, t] <= j + 1 <= deadline[i, t] - 1``.
    """

    num_slots: int
    group_cap: int
    rb_bandwidth_hz: float
    max_energy: np.ndarray  # (m,) watts
    power_level: np.ndarray  # (m,) int
    positions: np.ndarray  # (m, 2) meters
    packet_bits: np.ndarray  # (m, k) int
    arrival: np.ndarray  # (m, k) int, 1-based
    deadline: np.ndarray  # (m, k) int, 1-based
    gains: np.ndarray  # (m, n, k)
    params: dict[str, Any] | None = None

    def __post_init__(self):
        self.max_energy = np.asarray(self.max_energy, dtype=float)
        self.power_level = np.asarray(self.power_level, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.packet_bits = np.asarray(self.packet_bits, dtype=np.int64)
        self.arrival = np.asarray(self.arrival, dtype=np.int64)
        self.deadline = np.asarray(self.deadline, dtype=np.int64)
        self.gains = np.asarray(self.gains, dtype=float)
        m, n, k = self.gains.shape
        if n != self.num_slots:
            raise ValueError(f"gains has {n} slots, expected {self.num_slots}")
        for name in ("max_energy", "power_level"):
            if getattr(self, name).shape != (m,):
                raise ValueError(f"{name} must have shape ({m},)")
        if self.positions.shape != (m, 2):
            raise ValueError(f"positions must have shape ({m}, 2)")
        for name in ("packet_bits", "arrival", "deadline"):
            if getattr(self, name).shape != (m, k):
                raise ValueError(f"{name} must have shape ({m}, {k})")
        if not 1 <= self.group_cap <= max(m, 1):
            raise ValueError("group_cap must lie in [1, m]")
        if not self.rb_bandwidth_hz > 0:
            raise ValueError("rb_bandwidth_hz must be positive")
        if np.any(self.max_energy <= 0) or np.any(self.power_level < 1):
            raise ValueError("max_energy must be positive and power_level >= 1")
        if np.any(self.packet_bits < 0):
            raise ValueError("packet_bits must be non-negative")
        if np.any(self.arrival < 1) or np.any(self.arrival > n):
            raise ValueError("arrival slots must lie in 1..n")
        if np.any(self.deadline <= self.arrival) or np.any(self.deadline > n + 1):
            raise ValueError("deadline slots must lie in a+1..n+1")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError("channel gains must be positive and finite")

    @property
    def num_devices(self) -> int:
        return self.gains.shape[0]

    @property
    def num_frames(self) -> int:
        return self.gains.shape[2]

    @property
    def devices(self) -> list[DeviceProfile]:
        return [
            DeviceProfile(i, float(self.max_energy[i]), int(self.power_level[i]),
                          (float(self.positions[i, 0]), float(self.positions[i, 1])))
            for i in range(self.num_devices)
        ]

    def demand(self, i: int, t: int) -> FrameDemand:
        return FrameDemand(int(self.packet_bits[i, t]), int(self.arrival[i, t]),
                           int(self.deadline[i, t]))

    def thresholds(self, t: int) -> np.ndarray:
        """SINR thresholds ``2**(L/W) - 1`` of every device at frame ``t``."""
        return np.expm1(self.packet_bits[:, t] / self.rb_bandwidth_hz * np.log(2.0))

    def window(self, t: int) -> np.ndarray:
        """Boolean (m, n) mask of the slots each device may use in frame ``t``."""
        slot = np.arange(1, self.num_slots + 1)
        a = self.arrival[:, t][:, None]
        d = self.deadline[:, t][:, None]
        return (slot >= a) & (slot <= d - 1)

    def with_group_cap(self, group_cap: int) -> "Instance":
        return Instance(self.num_slots, group_cap, self.rb_bandwidth_hz, self.max_energy,
                        self.power_level, self.positions, self.packet_bits, self.arrival,
                        self.deadline, self.gains, self.params)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        arrays = ("max_energy", "power_level", "positions", "packet_bits", "arrival",
                  "deadline", "gains")
        return (self.num_slots == other.num_slots and self.group_cap == other.group_cap
                and self.rb_bandwidth_hz == other.rb_bandwidth_hz
                and self.params == other.params
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))


@dataclass
class Schedule:
    x: np.ndarray  # (m, n, k) bool
    p: np.ndarray  # (m, n, k) watts
    z: np.ndarray  # (m, k) bool

    @classmethod
    def empty(cls, m: int, n: int, k: int) -> "Schedule":
        return cls(np.zeros((m, n, k), dtype=bool), np.zeros((m, n, k)),
                   np.zeros((m, k), dtype=bool))

    @classmethod
    def for_instance(cls, instance: Instance) -> "Schedule":
        return cls.empty(*instance.gains.shape)

    def assign(self, device: int, slot: int, frame: int, power: float) -> None:
        self.x[device, slot, frame] = True
        self.p[device, slot, frame] = power
        self.z[device, frame] = True


@dataclass
class NomaGroup:
    """Devices sharing one RB, ordered by ascending gain (ties by id)."""

    slot: int
    frame: int
    members: list[int] = field(default_factory=list)
    budgets: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.members)


def sic_order(devices: Iterable[int], gains: Sequence[float] | np.ndarray) -> list[int]:
    """Sort device ids by ascending gain, breaking ties by device id."""
    return sorted(devices, key=lambda i: (gains[i], i))


def compute_rate(gains_in_slot, powers, member_index: int, rb_bandwidth_hz: float) -> float:
    """Achievable rate in bits/s of one member of an RB.

    ``gains_in_slot`` and ``powers`` list the members in SIC order (ascending
    gain); only members ahead of ``member_index`` interfere.
    """
    g = np.asarray(gains_in_slot, dtype=float)
    p = np.asarray(powers, dtype=float)
    if g.shape != p.shape or g.ndim != 1:
        raise ValueError("gains and powers must be 1-D arrays of equal length")
    if not 0 <= member_index < len(g):
        raise IndexError("member_index out of range")
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    interference = float(np.dot(p[:member_index], g[:member_index]))
    sinr = p[member_index] * g[member_index] / (1.0 + interference)
    return rb_bandwidth_hz * float(np.log2(1.0 + sinr))


def group_feasible(gains, budgets, thresholds, rel_tol: float = REL_TOL) -> bool:
    """Check the SIC feasibility of a group listed in ascending-gain order.

    Every member needs ``budget * gain >= threshold * (1 + X)`` where ``X``
    is the received power of the members ahead of it.
    """
    received = 0.0
    for g, e, b in zip(gains, budgets, thresholds):
        signal = e * g
        if not geq(signal, b * (1.0 + received), rel_tol):
            return False
        received += signal
    return True


def group_is_feasible(group: NomaGroup, instance: Instance,
                      thresholds: np.ndarray | None = None) -> bool:
    if thresholds is None:
        thresholds = instance.thresholds(group.frame)
    g = instance.gains[group.members, group.slot, group.frame]
    return group_feasible(g, group.budgets, thresholds[group.members])


@dataclass(frozen=True)
class Violation:
    constraint: int
    name: str
    device: int | None
    slot: int | None
    frame: int | None
    detail: str = ""

    def __str__(self):
        where = ", ".join(f"{k}={v}" for k, v in
                          (("device", self.device), ("slot", self.slot), ("frame", self.frame))
                          if v is not None)
        return f"({self.constraint}) {self.name} [{where}] {self.detail}".rstrip()


def validate_schedule(instance: Instance, schedule: Schedule,
                      rel_tol: float = 1e-8) -> list[Violation]:
    """List every constraint the schedule breaks; empty iff feasible.

    Constraint numbers: 4 domain, 5 rate, 6 power/assignment link, 7 energy,
    8 arrival/deadline window, 9 slot/frame link, 10 group cap, 11 no packet.
    """
    m, n, k = instance.gains.shape
    x = np.asarray(schedule.x)
    p = np.asarray(schedule.p, dtype=float)
    z = np.asarray(schedule.z)
    if x.shape != (m, n, k) or p.shape != (m, n, k) or z.shape != (m, k):
        raise ValueError(f"schedule dimensions do not match instance ({m}, {n}, {k})")
    out: list[Violation] = []
    W = instance.rb_bandwidth_hz
    e = instance.max_energy

    for name, arr in (("x", x), ("z", z)):
        bad = ~np.isin(arr, (0, 1))
        for idx in zip(*np.nonzero(bad)):
            out.append(Violation(4, "domain", int(idx[0]), None, None, f"{name} not binary"))
    x = x.astype(bool)
    z = z.astype(bool)
    for i, j, t in zip(*np.nonzero(~np.isfinite(p) | (p < 0))):
        out.append(Violation(4, "domain", int(i), int(j), int(t), "negative or non-finite power"))
    p = np.where(np.isfinite(p), p, 0.0)

    for i, j, t in zip(*np.nonzero(p > e[:, None, None] * x * (1 + rel_tol))):
        out.append(Violation(6, "power-link", int(i), int(j), int(t),
                             f"p={p[i, j, t]:.6g} exceeds {e[i] * x[i, j, t]:.6g}"))
    for i, j, t in zip(*np.nonzero(x & (p <= 0))):
        out.append(Violation(6, "power-link", int(i), int(j), int(t), "assigned with zero power"))

    used = p.sum(axis=(1, 2))
    for i in np.nonzero(used > e * (1 + rel_tol))[0]:
        out.append(Violation(7, "energy", int(i), None, None,
                             f"total power {used[i]:.6g} > {e[i]:.6g}"))

    for t in range(k):
        win = instance.window(t)
        for i, j in zip(*np.nonzero(x[:, :, t] & ~win)):
            out.append(Violation(8, "window", int(i), int(j), t))
        for i, j in zip(*np.nonzero(x[:, :, t] & ~z[:, t][:, None])):
            out.append(Violation(9, "slot-frame link", int(i), int(j), t))
        counts = x[:, :, t].sum(axis=0)
        for j in np.nonzero(counts > instance.group_cap)[0]:
            out.append(Violation(10, "group cap", None, int(j), t,
                                 f"{counts[j]} members > {instance.group_cap}"))
        for i in np.nonzero(z[:, t] & (instance.packet_bits[:, t] == 0))[0]:
            out.append(Violation(11, "no packet", int(i), None, t))

        rates = np.zeros(m)
        for j in range(n):
            members = sic_order(np.nonzero(x[:, j, t])[0].tolist(), instance.gains[:, j, t])
            if not members:
                continue
            g = instance.gains[members, j, t]
            pw = p[members, j, t]
            for pos, i in enumerate(members):
                rates[i] += compute_rate(g, pw, pos, W)
        L = instance.packet_bits[:, t]
        for i in np.nonzero(z[:, t])[0]:
            need = float(L[i])
            if rates[i] < need - rel_tol * (need + W):
                out.append(Violation(5, "rate", int(i), None, t,
                                     f"rate {rates[i]:.6g} < {need:.6g} bits"))
    return out


def count_served(schedule: Schedule) -> int:
    return int(np.asarray(schedule.z, dtype=bool).sum())


def export_ilp(instance: Instance, power: str = "binary") -> str:
    """Write the binary-power linearization of the problem in CPLEX LP format.

    With ``p = e * x`` every served device uses one RB at full power, the
    energy constraint allows one transmission over the horizon and the
    SINR requirement becomes a big-M row per (device, slot, frame).
    """
    if power != "binary":
        raise NotImplementedError("only the binary-power case can be exported as an ILP")
    m, n, k = instance.gains.shape
    e = instance.max_energy
    M = instance.group_cap

    def xv(i, j, t):
        return f"x_{i}_{j}_{t}"

    def zv(i, t):
        return f"z_{i}_{t}"

    def num(v: float) -> str:
        return repr(float(v))

    xs: dict[tuple[int, int, int], str] = {}
    zs: dict[tuple[int, int], str] = {}
    for t in range(k):
        b = instance.thresholds(t)
        win = instance.window(t)
        for i in range(m):
            if instance.packet_bits[i, t] == 0:
                continue
            zs[i, t] = zv(i, t)
            for j in range(n):
                # a solo-infeasible pair can never be served
                if win[i, j] and geq(e[i] * instance.gains[i, j, t], b[i]):
                    xs[i, j, t] = xv(i, j, t)

    rows: list[str] = []
    for (i, t), name in zs.items():
        own = [xs[i, j, t] for j in range(n) if (i, j, t) in xs]
        lhs = " - ".join([name] + own)
        rows.append(f" served_{i}_{t}: {lhs} <= 0")
        for v in own:
            rows.append(f" link_{v}: {v} - {name} <= 0")
    for i in range(m):
        own = [v for (ii, _, _), v in xs.items() if ii == i]
        if len(own) > 1:
            rows.append(f" energy_{i}: " + " + ".join(own) + " <= 1")
    for t in range(k):
        b = instance.thresholds(t)
        for j in range(n):
            members = [i for i in range(m) if (i, j, t) in xs]
            if len(members) > M:
                rows.append(f" cap_{j}_{t}: " + " + ".join(xs[i, j, t] for i in members)
                            + f" <= {M}")
            order = sic_order(members, instance.gains[:, j, t])
            for pos, i in enumerate(order):
                lower = order[:pos]
                if not lower:
                    continue
                # own * x_i - b * sum(lower * x_l) - big * x_i >= b - big
                own = e[i] * instance.gains[i, j, t]
                recv = [e[l] * instance.gains[l, j, t] for l in lower]
                big = b[i] * (1.0 + sum(recv))
                terms = [f"{num(own - big)} {xs[i, j, t]}"]
                terms += [f"- {num(b[i] * r)} {xs[l, j, t]}" for l, r in zip(lower, recv)]
                rhs = b[i] - big
                rows.append(f" sinr_{i}_{j}_{t}: " + " ".join(terms) + f" >= {num(rhs)}")

    lines = ["\\ binary-power NOMA grouping ILP", "Maximize",
             " nsd: " + (" + ".join(zs.values()) if zs else "0 dummy")]
    lines.append("Subject To")
    lines.extend(rows)
    if not zs:
        lines.append(" fix_dummy: dummy = 0")
    lines.append("Binaries")
    names = list(zs.values()) + list(xs.values()) or ["dummy"]
    for s in range(0, len(names), 8):
        lines.append(" " + " ".join(names[s:s + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"
