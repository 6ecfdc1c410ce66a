"""Random instance generation for a single-cell 3GPP-style deployment, and
JSON persistence of instances.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with
``(seed, device)`` for positions and ``(seed, device, frame + 1)`` for the
per-frame demand and fading draws, so adding devices never reshuffles the
draws of the others.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .model import Instance

FORMAT_TAG = "nomasched-instance/1"
MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class ScenarioParams:
    m: int
    n: int
    k: int = 1
    M: int = 2
    area_side_m: float = 1000.0
    carrier: str = "900MHz"
    total_bandwidth_hz: float = 200e3
    max_power_dbm: float = 23.0
    l_max_bits: int = 100_000
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 5.0
    antenna_gain_db: float = -4.0
    penetration_loss_db: float = 10.0
    power_level: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ValueError("m, n and k must be at least 1")
        if not 1 <= self.M <= self.m:
            raise ValueError("M must lie in [1, m]")
        if self.total_bandwidth_hz <= 0 or self.area_side_m <= 0:
            raise ValueError("bandwidth and area side must be positive")
        if self.power_level < 1 or self.l_max_bits < 0:
            raise ValueError("power_level must be >= 1 and l_max_bits >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def rb_bandwidth_hz(self) -> float:
        return self.total_bandwidth_hz / self.n

    def replace(self, **changes) -> "ScenarioParams":
        return ScenarioParams(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario parameters: {sorted(unknown)}")
        return cls(**data)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def path_loss_db(dist_m, antenna_gain_db: float = -4.0, penetration_loss_db: float = 10.0):
    """Macro-cell path loss at 900 MHz; distances are clamped to 1 m."""
    d_km = np.maximum(np.asarray(dist_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    return 120.9 + 37.6 * np.log10(d_km) + antenna_gain_db + penetration_loss_db


def noise_power_dbm(rb_bandwidth_hz: float, noise_psd_dbm_hz: float = -174.0,
                    noise_figure_db: float = 5.0) -> float:
    return noise_psd_dbm_hz + 10.0 * math.log10(rb_bandwidth_hz) + noise_figure_db


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def generate_instance(params: ScenarioParams) -> Instance:
    m, n, k = params.m, params.n, params.k
    side = params.area_side_m
    positions = np.empty((m, 2))
    for i in range(m):
        positions[i] = _rng(params.seed, i).uniform(0.0, side, size=2)
    dist = np.hypot(positions[:, 0] - side / 2, positions[:, 1] - side / 2)
    pl = path_loss_db(dist, params.antenna_gain_db, params.penetration_loss_db)
    noise_w = dbm_to_watts(noise_power_dbm(params.rb_bandwidth_hz, params.noise_psd_dbm_hz,
                                           params.noise_figure_db))
    mean_gain = 10.0 ** (-pl / 10.0) / noise_w

    packet_bits = np.empty((m, k), dtype=np.int64)
    arrival = np.empty((m, k), dtype=np.int64)
    deadline = np.empty((m, k), dtype=np.int64)
    gains = np.empty((m, n, k))
    for i in range(m):
        for t in range(k):
            rng = _rng(params.seed, i, t + 1)
            packet_bits[i, t] = rng.integers(0, params.l_max_bits, endpoint=True)
            a = int(rng.integers(1, n, endpoint=True))
            arrival[i, t] = a
            deadline[i, t] = rng.integers(a + 1, n + 1, endpoint=True)
            fading = rng.standard_exponential(n)
            # an exact zero draw would give a zero gain
            gains[i, :, t] = mean_gain[i] * np.maximum(fading, np.finfo(float).tiny)

    return Instance(
        num_slots=n,
        group_cap=params.M,
        rb_bandwidth_hz=params.rb_bandwidth_hz,
        max_energy=np.full(m, dbm_to_watts(params.max_power_dbm)),
        power_level=np.full(m, params.power_level),
        positions=positions,
        packet_bits=packet_bits,
        arrival=arrival,
        deadline=deadline,
        gains=gains,
        params=asdict(params),
    )


class InstanceFormatError(ValueError):
    def __init__(self, field: str, location: str, message: str):
        self.field = field
        self.location = location
        super().__init__(f"{location}: field {field!r}: {message}")


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    m, n, k = instance.gains.shape
    return {
        "format": FORMAT_TAG,
        "params": instance.params,
        "system": {"num_devices": m, "num_slots": n, "num_frames": k,
                   "group_cap": instance.group_cap,
                   "rb_bandwidth_hz": float(instance.rb_bandwidth_hz)},
        "devices": [
            {"id": d.id, "max_energy": d.max_energy, "power_level": d.power_level,
             "position": list(d.position)}
            for d in instance.devices
        ],
        "demands": [
            [{"packet_bits": int(instance.packet_bits[i, t]),
              "arrival_slot": int(instance.arrival[i, t]),
              "deadline_slot": int(instance.deadline[i, t])} for t in range(k)]
            for i in range(m)
        ],
        "gains": instance.gains.tolist(),
    }


def _get(obj: Any, key: str, location: str, kind=None):
    if not isinstance(obj, dict):
        raise InstanceFormatError(key, location, "expected an object")
    if key not in obj:
        raise InstanceFormatError(key, location, "missing")
    value = obj[key]
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool):
        raise InstanceFormatError(key, location, f"expected {getattr(kind, '__name__', kind)}")
    return value


def instance_from_dict(data: Any) -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError("<root>", "$", "expected an object")
    if data.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise InstanceFormatError("format", "$", f"unsupported format {data.get('format')!r}")
    system = _get(data, "system", "$", dict)
    m = _get(system, "num_devices", "$.system", int)
    n = _get(system, "num_slots", "$.system", int)
    k = _get(system, "num_frames", "$.system", int)
    M = _get(system, "group_cap", "$.system", int)
    W = _get(system, "rb_bandwidth_hz", "$.system", (int, float))
    number = (int, float)

    devices = _get(data, "devices", "$", list)
    if len(devices) != m:
        raise InstanceFormatError("devices", "$", f"expected {m} entries, got {len(devices)}")
    energy, levels, pos = [], [], []
    for idx, dev in enumerate(devices):
        loc = f"$.devices[{idx}]"
        if _get(dev, "id", loc, int) != idx:
            raise InstanceFormatError("id", loc, "device ids must be 0..m-1 in order")
        energy.append(float(_get(dev, "max_energy", loc, number)))
        levels.append(_get(dev, "power_level", loc, int))
        p = _get(dev, "position", loc, list)
        if len(p) != 2 or not all(isinstance(v, number) for v in p):
            raise InstanceFormatError("position", loc, "expected [x, y]")
        pos.append([float(v) for v in p])

    demands = _get(data, "demands", "$", list)
    if len(demands) != m:
        raise InstanceFormatError("demands", "$", f"expected {m} rows, got {len(demands)}")
    L = np.zeros((m, k), dtype=np.int64)
    a = np.zeros((m, k), dtype=np.int64)
    d = np.zeros((m, k), dtype=np.int64)
    for i, row in enumerate(demands):
        if not isinstance(row, list) or len(row) != k:
            raise InstanceFormatError("demands", f"$.demands[{i}]", f"expected {k} frames")
        for t, dem in enumerate(row):
            loc = f"$.demands[{i}][{t}]"
            L[i, t] = _get(dem, "packet_bits", loc, int)
            a[i, t] = _get(dem, "arrival_slot", loc, int)
            d[i, t] = _get(dem, "deadline_slot", loc, int)

    raw = _get(data, "gains", "$", list)
    try:
        gains = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError("gains", "$", f"not a numeric array: {exc}") from None
    if gains.shape != (m, n, k):
        raise InstanceFormatError("gains", "$", f"expected shape {(m, n, k)}, got {gains.shape}")

    params = data.get("params")
    if params is not None and not isinstance(params, dict):
        raise InstanceFormatError("params", "$", "expected an object or null")
    try:
        return Instance(n, M, float(W), energy, levels, pos, L, a, d, gains, params)
    except ValueError as exc:
        raise InstanceFormatError("<instance>", "$", str(exc)) from None


def save_instance(instance: Instance, path: str | Path) -> None:
    text = json.dumps(instance_to_dict(instance), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError("<json>", f"line {exc.lineno} column {exc.colno}",
                                  exc.msg) from None
    return instance_from_dict(data)
