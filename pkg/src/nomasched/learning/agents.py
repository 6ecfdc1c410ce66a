"""Multi-frame power allocation learners.

Every round each device commits a power plan (a source-sink path in its
transition graph), the base station runs the per-frame online scheduler
with those powers and broadcasts the served count of every frame, and the
devices update. The round is the synchronization unit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import comb

import numpy as np

from ..model import Instance
from ..online import FrameResult, bms
from .graph import TransitionGraph, covering_paths, PathDistribution


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.5
    beta: float = 0.01
    eta: float | None = None  # None: gamma / (2 (k + 1) sigma_i) per device
    alpha: float = 0.5
    epsilon: float = 0.1
    rounds: int = 100

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 < self.beta <= 1:
            raise ValueError("gamma and beta must lie in (0, 1]")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 < self.alpha <= 1 or not 0 <= self.epsilon <= 1:
            raise ValueError("alpha must lie in (0, 1] and epsilon in [0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")

    def learning_rate(self, tau: int, k: int) -> float:
        if self.eta is not None:
            return self.eta
        sigma = comb(k + tau, k)
        return self.gamma / (2 * (k + 1) * sigma)


@dataclass
class RunRecord:
    """Per-round outcome of a learner.

    ``units[r, i, t]`` is the number of power steps device ``i`` spent in
    frame ``t`` of round ``r``; ``frame_nsd[r, t]`` the served count.
    """

    algorithm: str
    frame_nsd: np.ndarray  # (T, k) int
    units: np.ndarray  # (T, m, k) int
    step_watts: np.ndarray  # (m,)

    @property
    def rounds(self) -> int:
        return self.frame_nsd.shape[0]

    @property
    def nsd(self) -> np.ndarray:
        return self.frame_nsd.sum(axis=1)

    @property
    def power(self) -> np.ndarray:
        """(T, m, k) watts allocated per device and frame."""
        return self.units * self.step_watts[None, :, None]

    @property
    def mean_power(self) -> np.ndarray:
        """(T, k) power averaged over devices."""
        return self.power.mean(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "frame", "nsd", "mean_pc"])
        pc = self.mean_power
        for r in range(self.rounds):
            for t in range(self.frame_nsd.shape[1]):
                w.writerow([r, t, int(self.frame_nsd[r, t]), repr(float(pc[r, t]))])
        return buf.getvalue()


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def step_watts(instance: Instance) -> np.ndarray:
    return instance.max_energy / instance.power_level


def evaluate_power_plan(instance: Instance, frame: int, powers,
                        remaining=None) -> FrameResult:
    """Run the online scheduler of one frame with the given transmit powers.

    ``remaining`` (watts) defaults to the full battery of each device.
    """
    powers = np.asarray(powers, dtype=float)
    cap = instance.max_energy if remaining is None else np.asarray(remaining, dtype=float)
    if powers.shape != (instance.num_devices,) or np.any(powers < 0):
        raise ValueError("powers must be non-negative, one per device")
    if np.any(powers > cap * (1 + 1e-12)):
        raise ValueError("a device is asked for more power than it has left")
    return bms(instance, frame, powers)


def _evaluate_units(instance: Instance, units: np.ndarray, watts: np.ndarray) -> np.ndarray:
    """Frame served counts for an (m, k) plan of power units."""
    k = instance.num_frames
    out = np.zeros(k, dtype=np.int64)
    for t in range(k):
        if units[:, t].any():
            out[t] = bms(instance, t, units[:, t] * watts).nsd
    return out


def _check_instance(instance: Instance) -> None:
    if np.any(instance.power_level < 1):
        raise ValueError("power levels must be at least 1")


def pl_train(instance: Instance, config: LearnerConfig = LearnerConfig(), seed: int = 0) -> RunRecord:
    """Path learning: exponential weights on transition-graph edges with
    uniform exploration over an edge-covering path set.

    Each edge gets the estimate ``(beta + r 1[e chosen]) / q(e)`` where ``r``
    is its frame's served count divided by ``m`` (0 for the edges into the
    sink) and ``q(e)`` the probability of drawing the edge.
    """
    _check_instance(instance)
    m, k = instance.num_devices, instance.num_frames
    T = config.rounds
    rng = _rng(seed, 1)
    watts = step_watts(instance)
    graphs: dict[int, tuple[TransitionGraph, list]] = {}
    for tau in sorted(set(instance.power_level.tolist())):
        tg = TransitionGraph(-1, tau, k)
        graphs[tau] = (tg, covering_paths(tg))
    tgs = [graphs[int(t)][0] for t in instance.power_level]
    covers = [graphs[int(t)][1] for t in instance.power_level]
    etas = [config.learning_rate(tg.tau, k) for tg in tgs]
    logw = [np.zeros(tg.num_edges) for tg in tgs]

    frame_nsd = np.zeros((T, k), dtype=np.int64)
    units = np.zeros((T, m, k), dtype=np.int64)
    for r in range(T):
        dists = [PathDistribution(tg, lw, config.gamma, cov)
                 for tg, lw, cov in zip(tgs, logw, covers)]
        paths = [d.sample(rng) for d in dists]
        for i, (tg, p) in enumerate(zip(tgs, paths)):
            units[r, i] = tg.path_units(p)
        frame_nsd[r] = _evaluate_units(instance, units[r], watts)
        reward = frame_nsd[r] / m
        for i, (tg, d, p) in enumerate(zip(tgs, dists, paths)):
            edge_reward = np.where(tg.frame >= 0, reward[np.maximum(tg.frame, 0)], 0.0)
            chosen = np.zeros(tg.num_edges)
            chosen[list(p)] = 1.0
            estimate = (config.beta + edge_reward * chosen) / d.q
            logw[i] += etas[i] * estimate
            logw[i] -= logw[i].max()
    record = RunRecord("pl", frame_nsd, units, watts)
    record.log_weights = logw
    return record


def ql_train(instance: Instance, config: LearnerConfig = LearnerConfig(), seed: int = 0,
             q_init: list[np.ndarray] | None = None) -> RunRecord:
    """Tabular Q-learning with epsilon-greedy actions on each device's graph.

    ``Q[i][t, level, a]`` values spending ``a`` units at frame ``t`` with
    ``level`` units left; the reward is the frame's served count and the
    value after the last frame is zero.
    """
    _check_instance(instance)
    m, k = instance.num_devices, instance.num_frames
    T = config.rounds
    rng = _rng(seed, 2)
    watts = step_watts(instance)
    tau = instance.power_level.astype(int)
    if q_init is None:
        Q = [np.zeros((k, t + 1, t + 1)) for t in tau]
    else:
        Q = [np.array(q, dtype=float) for q in q_init]
    frame_nsd = np.zeros((T, k), dtype=np.int64)
    units = np.zeros((T, m, k), dtype=np.int64)

    def best_value(i: int, t: int, level: int) -> float:
        return float(Q[i][t, level, : level + 1].max())

    for r in range(T):
        level = tau.copy()
        for t in range(k):
            action = np.zeros(m, dtype=np.int64)
            for i in range(m):
                if rng.random() < config.epsilon:
                    action[i] = rng.integers(0, level[i], endpoint=True)
                else:
                    row = Q[i][t, level[i], : level[i] + 1]
                    ties = np.flatnonzero(row == row.max())
                    action[i] = ties[rng.integers(len(ties))]
            units[r, :, t] = action
            nsd = bms(instance, t, action * watts).nsd if action.any() else 0
            frame_nsd[r, t] = nsd
            for i in range(m):
                nxt = level[i] - action[i]
                future = best_value(i, t + 1, nxt) if t + 1 < k else 0.0
                cur = Q[i][t, level[i], action[i]]
                Q[i][t, level[i], action[i]] = cur + config.alpha * (nsd + future - cur)
            level -= action
    record = RunRecord("ql", frame_nsd, units, watts)
    record.q_tables = Q
    return record


def rl_policy(instance: Instance, seed: int = 0, rounds: int = 1) -> RunRecord:
    """Random allocation: each frame spend a uniform number of the units left."""
    _check_instance(instance)
    m, k = instance.num_devices, instance.num_frames
    rng = _rng(seed, 3)
    watts = step_watts(instance)
    frame_nsd = np.zeros((rounds, k), dtype=np.int64)
    units = np.zeros((rounds, m, k), dtype=np.int64)
    for r in range(rounds):
        level = instance.power_level.astype(np.int64).copy()
        for t in range(k):
            spend = rng.integers(0, level, endpoint=True)
            units[r, :, t] = spend
            level -= spend
        frame_nsd[r] = _evaluate_units(instance, units[r], watts)
    return RunRecord("rl", frame_nsd, units, watts)
