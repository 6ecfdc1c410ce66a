"""Experiment sweeps: build instances along one parameter axis, run the
requested schedulers on each, validate every schedule and tabulate the
served counts. Reports are CSV plus a small self-contained SVG plot."""

from __future__ import annotations

import csv
import hashlib
import html
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .baselines import ath_frame, zz_frame
from .exact import FrameGuard, GuardError, HorizonGuard, opt_horizon, opt_ilp_frame
from .learning import LearnerConfig, pl_train, ql_train, rl_policy
from .learning.agents import RunRecord
from .model import Instance, validate_schedule
from .online import FrameResult, bms, frames_to_schedule, ranking_m1, selfish_frame
from .scenario import ScenarioParams, generate_instance

FRAME_ALGORITHMS = ("bms", "ath", "zz", "ranking", "selfish")
LEARNERS = ("pl", "ql", "rl")
ALGORITHMS = FRAME_ALGORITHMS + ("opt",) + LEARNERS

# sweep axis -> scenario field
AXES = {"m": "m", "n": "n", "e_max": "max_power_dbm", "l_max": "l_max_bits", "M": "M", "k": "k"}

CSV_COLUMNS = ["axis_value", "algorithm", "seed", "nsd", "runtime_ms"]
POWER_COLUMNS = ["axis_value", "algorithm", "seed", "frame", "mean_pc"]


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Guards:
    frame: FrameGuard = FrameGuard()
    horizon: HorizonGuard = HorizonGuard()
    enabled: bool = True

    def override(self, key: str, value: str) -> "Guards":
        """Apply ``frame.max_devices=12`` style overrides; ``off`` disables all."""
        if key == "off":
            return Guards(self.frame, self.horizon, enabled=False)
        scope, _, attr = key.partition(".")
        if scope not in ("frame", "horizon") or not hasattr(getattr(self, scope), attr):
            raise SpecError(f"unknown guard {key!r}")
        updated = replace(getattr(self, scope), **{attr: int(value)})
        return replace(self, **{scope: updated})


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    scenario: dict
    algorithms: list[str]
    axis: str
    values: list
    seeds: list[int]
    base_seed: int = 0
    learner: dict = field(default_factory=dict)
    record_timing: bool = False

    def __post_init__(self):
        if not self.algorithms:
            raise SpecError("algorithm list is empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise SpecError(f"unknown algorithms {sorted(unknown)}")
        if self.axis not in AXES:
            raise SpecError(f"axis must be one of {sorted(AXES)}")
        if not self.values or not self.seeds:
            raise SpecError("values and seeds must be non-empty")
        if not self.name or any(c in self.name for c in "/\\"):
            raise SpecError("name must be a plain file stem")
        for v in self.values:
            p = self.params(v, 0)
            if "zz" in self.algorithms and p.M != 2:
                raise SpecError("zz requires M == 2")
            if "ranking" in self.algorithms and p.M != 1:
                raise SpecError("ranking requires M == 1")
        LearnerConfig(**self.learner)

    def params(self, value, seed: int) -> ScenarioParams:
        return ScenarioParams.from_dict({**self.scenario, AXES[self.axis]: value, "seed": seed})

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cell_seed(base_seed: int, axis: str, value, replicate: int) -> int:
    """Stable 63-bit seed for one (axis value, replicate) cell."""
    key = json.dumps([base_seed, axis, value, replicate]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big") >> 1


@dataclass
class CellResult:
    axis_value: Any
    algorithm: str
    seed: int
    nsd: int | None
    runtime_ms: float
    power: list[float] | None = None  # per-frame mean PC for learners
    error: str | None = None


def _frame_by_frame(instance: Instance, solve) -> list[FrameResult]:
    """Run a single-frame scheduler on every frame; a device that transmits
    spends its budget and sits out the remaining frames."""
    remaining = instance.max_energy.copy()
    results = []
    for t in range(instance.num_frames):
        res = solve(t, remaining.copy())
        for g in res.groups:
            for i, e in zip(g.members, g.budgets):
                remaining[i] -= e
        remaining = np.maximum(remaining, 0.0)
        results.append(res)
    return results


def _learner_frames(instance: Instance, record: RunRecord) -> list[FrameResult]:
    powers = record.power[-1]
    return [bms(instance, t, powers[:, t]) for t in range(instance.num_frames)]


def run_algorithm(instance: Instance, algorithm: str, seed: int, guards: Guards = Guards(),
                  learner: LearnerConfig = LearnerConfig()):
    """Returns (frame results, per-frame mean power or None)."""
    fg = guards.frame if guards.enabled else None
    hg = guards.horizon if guards.enabled else None
    if algorithm == "bms":
        return _frame_by_frame(instance, lambda t, b: bms(instance, t, b)), None
    if algorithm == "ath":
        return _frame_by_frame(instance, lambda t, b: ath_frame(instance, t, b)), None
    if algorithm == "zz":
        return _frame_by_frame(instance, lambda t, b: zz_frame(instance, t, b)), None
    if algorithm == "selfish":
        return _frame_by_frame(instance, lambda t, b: selfish_frame(instance, t, b)), None
    if algorithm == "ranking":
        perm = np.random.default_rng(seed).permutation(instance.num_devices)
        return _frame_by_frame(instance, lambda t, b: ranking_m1(instance, t, perm, b)), None
    if algorithm == "opt":
        if instance.num_frames == 1:
            # set packing over enumerated groups: exact at any size HiGHS can finish
            return [opt_ilp_frame(instance, 0)], None
        return opt_horizon(instance, hg, fg)[1], None
    if algorithm in LEARNERS:
        if algorithm == "pl":
            record = pl_train(instance, learner, seed)
        elif algorithm == "ql":
            record = ql_train(instance, learner, seed)
        else:
            record = rl_policy(instance, seed, rounds=max(learner.rounds, 1))
        return _learner_frames(instance, record), record.mean_power.mean(axis=0).tolist()
    raise SpecError(f"unknown algorithm {algorithm!r}")


def _run_cell(args) -> list[CellResult]:
    spec, guards, value, replicate = args
    seed = cell_seed(spec.base_seed, spec.axis, value, replicate)
    learner = LearnerConfig(**spec.learner)
    out = []
    try:
        instance = generate_instance(spec.params(value, seed))
    except ValueError as exc:
        return [CellResult(value, a, replicate, None, 0.0, error=f"instance: {exc}")
                for a in spec.algorithms]
    for algorithm in spec.algorithms:
        start = time.perf_counter()
        try:
            frames, power = run_algorithm(instance, algorithm, seed, guards, learner)
        except (GuardError, ValueError, RuntimeError) as exc:
            out.append(CellResult(value, algorithm, replicate, None, 0.0,
                                  error=f"{type(exc).__name__}: {exc}"))
            continue
        elapsed = (time.perf_counter() - start) * 1e3
        violations = validate_schedule(instance, frames_to_schedule(instance, frames))
        if violations:
            out.append(CellResult(value, algorithm, replicate, None, elapsed,
                                  error="invalid schedule: " + "; ".join(map(str, violations[:3]))))
            continue
        nsd = sum(r.nsd for r in frames)
        out.append(CellResult(value, algorithm, replicate, nsd,
                              round(elapsed, 3) if spec.record_timing else 0.0, power))
    return out


def _sort_key(row: CellResult):
    return (float(row.axis_value), row.algorithm, row.seed)


def run_experiment(spec: ExperimentSpec, guards: Guards = Guards(), jobs: int = 1) -> list[CellResult]:
    """Every (value, seed replicate, algorithm) cell; failures are kept as
    rows with ``error`` set and ``nsd`` None."""
    tasks = [(spec, guards, v, r) for v in spec.values for r in spec.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    return sorted((row for chunk in chunks for row in chunk), key=_sort_key)


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(table: list[CellResult], out_dir: str | Path, name: str) -> list[Path]:
    """Write ``<name>.csv`` (successful cells), ``<name>_power.csv`` when
    learners ran, ``<name>_errors.json`` when cells failed and ``<name>.svg``."""
    ok = [r for r in table if r.error is None]
    if not table:
        raise ValueError("empty result table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / f"{name}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in ok:
            w.writerow([_fmt(r.axis_value), r.algorithm, r.seed, r.nsd, _fmt(r.runtime_ms)])
    written.append(path)

    with_power = [r for r in ok if r.power is not None]
    if with_power:
        path = out / f"{name}_power.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POWER_COLUMNS)
            for r in with_power:
                for t, pc in enumerate(r.power):
                    w.writerow([_fmt(r.axis_value), r.algorithm, r.seed, t + 1, repr(float(pc))])
        written.append(path)

    failed = [r for r in table if r.error is not None]
    if failed:
        path = out / f"{name}_errors.json"
        path.write_text(json.dumps([{"axis_value": r.axis_value, "algorithm": r.algorithm,
                                     "seed": r.seed, "error": r.error} for r in failed],
                                   indent=1) + "\n", encoding="utf-8")
        written.append(path)

    if ok:
        path = out / f"{name}.svg"
        path.write_text(svg_plot(summarize(ok), xlabel=name, ylabel="NSD"), encoding="utf-8")
        written.append(path)
    return written


def load_report(path: str | Path) -> list[CellResult]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            value = float(rec["axis_value"])
            rows.append(CellResult(int(value) if value.is_integer() else value, rec["algorithm"],
                                   int(rec["seed"]), int(rec["nsd"]), float(rec["runtime_ms"])))
    return rows


def summarize(rows: list[CellResult]) -> dict[str, list[tuple[float, float, float]]]:
    """algorithm -> [(x, mean, std)] sorted by x."""
    acc: dict[str, dict[float, list[int]]] = {}
    for r in rows:
        acc.setdefault(r.algorithm, {}).setdefault(float(r.axis_value), []).append(r.nsd)
    return {a: [(x, float(np.mean(v)), float(np.std(v))) for x, v in sorted(series.items())]
            for a, series in sorted(acc.items())}


PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#17becf"]


def svg_plot(series: dict[str, list[tuple[float, float, float]]], xlabel: str = "",
             ylabel: str = "", width: int = 640, height: int = 420) -> str:
    """Line plot of mean values with a shaded +-1 std band per series."""
    left, right, top, bottom = 60, 130, 20, 50
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts]
    lo = min(p[1] - p[2] for p in pts)
    hi = max(p[1] + p[2] for p in pts)
    x0, x1 = min(xs), max(xs)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    lo = min(lo, 0.0)
    if hi <= lo:
        hi = lo + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - lo) / (hi - lo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for tick in np.linspace(lo, hi, 5):
        y = sy(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#333"/>'
                     f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{tick:.3g}</text>')
    for x in sorted(set(xs)):
        px = sx(x)
        parts.append(f'<line x1="{px:.1f}" y1="{top + ph}" x2="{px:.1f}" y2="{top + ph + 4}" '
                     f'stroke="#333"/><text x="{px:.1f}" y="{top + ph + 16}" '
                     f'text-anchor="middle">{x:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">'
                 f'{html.escape(xlabel)}</text>')
    parts.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + ph / 2})">{html.escape(ylabel)}</text>')
    for idx, (name, s) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        upper = [f"{sx(x):.1f},{sy(m + d):.1f}" for x, m, d in s]
        lower = [f"{sx(x):.1f},{sy(m - d):.1f}" for x, m, d in reversed(s)]
        parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                     f'fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{sx(x):.1f},{sy(m):.1f}" for x, m, _ in s)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 16 * idx
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
                     f'<text x="{left + pw + 34}" y="{ly}">{html.escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_from_csv(csv_path: str | Path, svg_path: str | Path, label: str = "") -> Path:
    rows = load_report(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} holds no rows")
    out = Path(svg_path)
    out.write_text(svg_plot(summarize(rows), xlabel=label or Path(csv_path).stem, ylabel="NSD"),
                   encoding="utf-8")
    return out


def mean_nsd(rows: list[CellResult], algorithm: str, axis_value=None) -> float:
    vals = [r.nsd for r in rows if r.algorithm == algorithm and r.error is None
            and (axis_value is None or r.axis_value == axis_value)]
    return float(np.mean(vals)) if vals else math.nan
