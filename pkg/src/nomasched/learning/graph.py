"""Per-device transition graph over (remaining energy level, frame) states.

Layer 0 holds the start node (full battery), layers 1..k hold the
``tau + 1`` energy levels left after each frame and layer k+1 holds the
terminal node. An edge from layer L to L+1 (L < k) spends the energy
difference in frame L; the edges into the terminal node spend nothing.
Energy is counted in integer units of ``max_energy / tau``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from math import comb

import numpy as np


@dataclass
class TransitionGraph:
    device: int
    tau: int
    k: int
    max_energy: float = 1.0
    # filled in __post_init__
    node_layer: np.ndarray = field(init=False, repr=False)
    node_level: np.ndarray = field(init=False, repr=False)
    src: np.ndarray = field(init=False, repr=False)
    dst: np.ndarray = field(init=False, repr=False)
    units: np.ndarray = field(init=False, repr=False)
    frame: np.ndarray = field(init=False, repr=False)
    layer_edges: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if self.tau < 1 or self.k < 1:
            raise ValueError("tau and k must be at least 1")
        tau, k = self.tau, self.k
        layer = [0] + [L for L in range(1, k + 1) for _ in range(tau + 1)] + [k + 1]
        level = [tau] + [l for _ in range(k) for l in range(tau + 1)] + [0]
        self.node_layer = np.array(layer)
        self.node_level = np.array(level)
        src, dst, units, frame = [], [], [], []
        # transition L: (rows = nodes of layer L) x (cols = nodes of layer L+1), -1 = no edge
        self.layer_edges = []
        for L in range(k + 1):
            rows = self.layer_nodes(L)
            cols = self.layer_nodes(L + 1)
            eid = -np.ones((len(rows), len(cols)), dtype=np.int64)
            for a, u in enumerate(rows):
                for b, v in enumerate(cols):
                    if L == k:
                        spend = 0
                    elif self.node_level[v] <= self.node_level[u]:
                        spend = int(self.node_level[u] - self.node_level[v])
                    else:
                        continue
                    eid[a, b] = len(src)
                    src.append(u)
                    dst.append(v)
                    units.append(spend)
                    frame.append(L if L < k else -1)
            self.layer_edges.append(eid)
        self.src = np.array(src)
        self.dst = np.array(dst)
        self.units = np.array(units)
        self.frame = np.array(frame)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.num_nodes - 1

    @property
    def num_nodes(self) -> int:
        return len(self.node_layer)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def layer_nodes(self, L: int) -> list[int]:
        if L == 0:
            return [0]
        if L == self.k + 1:
            return [1 + self.k * (self.tau + 1)]
        start = 1 + (L - 1) * (self.tau + 1)
        return list(range(start, start + self.tau + 1))

    def out_edges(self, u: int) -> np.ndarray:
        return np.nonzero(self.src == u)[0]

    def power(self, edges) -> np.ndarray:
        """Watts spent on each of the given edges."""
        return self.units[np.asarray(edges)] * self.max_energy / self.tau

    def path_units(self, path) -> np.ndarray:
        """Energy units spent in frames 0..k-1 along a path."""
        return self.units[np.asarray(path)[: self.k]]

    def paths(self) -> list[tuple[int, ...]]:
        """Every source-sink path (exponential; for small graphs only)."""
        out = []

        def walk(u: int, acc: tuple[int, ...]):
            if u == self.sink:
                out.append(acc)
                return
            for e in self.out_edges(u):
                walk(int(self.dst[e]), acc + (int(e),))

        walk(self.source, ())
        return out

    def expected_counts(self) -> tuple[int, int, int]:
        """Closed-form node, edge and path counts."""
        mi = self.tau + 1
        return 2 + self.k * mi, mi * (mi * (self.k - 1) + self.k + 3) // 2, comb(self.k + mi - 1, self.k)


def build_tg(device, k: int) -> TransitionGraph:
    """Transition graph of a :class:`~nomasched.model.DeviceProfile`."""
    return TransitionGraph(device.id, int(device.power_level), k, float(device.max_energy))


def idle_cost(tg: TransitionGraph) -> np.ndarray:
    """Edge cost for covering paths: one per frame spent idle."""
    return ((tg.units == 0) & (tg.frame >= 0)).astype(float)


def _dijkstra(n: int, start: int, adj: list[list[tuple[int, int]]], cost: np.ndarray):
    dist = [float("inf")] * n
    via = [-1] * n
    dist[start] = 0.0
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for e, v in adj[u]:
            nd = d + cost[e]
            if nd < dist[v]:
                dist[v] = nd
                via[v] = e
                heapq.heappush(heap, (nd, v))
    return dist, via


def covering_paths(tg: TransitionGraph, cost: np.ndarray | None = None) -> list[tuple[int, ...]]:
    """Source-sink paths that together use every edge.

    Each edge is completed into a path by the cheapest prefix from the
    source and the cheapest suffix to the sink (Dijkstra forward and on
    the reversed graph); duplicates are dropped, first occurrence kept.
    """
    if cost is None:
        cost = idle_cost(tg)
    n = tg.num_nodes
    fwd: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    bwd: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e in range(tg.num_edges):
        fwd[tg.src[e]].append((e, int(tg.dst[e])))
        bwd[tg.dst[e]].append((e, int(tg.src[e])))
    _, via_f = _dijkstra(n, tg.source, fwd, cost)
    _, via_b = _dijkstra(n, tg.sink, bwd, cost)

    def prefix(u: int) -> list[int]:
        out = []
        while u != tg.source:
            e = via_f[u]
            out.append(e)
            u = int(tg.src[e])
        return out[::-1]

    def suffix(v: int) -> list[int]:
        out = []
        while v != tg.sink:
            e = via_b[v]
            out.append(e)
            v = int(tg.dst[e])
        return out

    seen: dict[tuple[int, ...], None] = {}
    for e in range(tg.num_edges):
        path = tuple(prefix(int(tg.src[e])) + [e] + suffix(int(tg.dst[e])))
        seen.setdefault(path, None)
    return list(seen)


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    top = x.max(axis=axis)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - np.expand_dims(safe, axis)).sum(axis=axis)) + safe


class PathDistribution:
    """Edge-weighted path distribution mixed with uniform exploration over a
    covering path set.

    With weight ``w`` on every edge a path has probability proportional to
    the product of its weights. Backward sums ``Z`` (total weight of paths
    from a node to the sink) and forward sums ``F`` (from the source to a
    node) give the edge marginals ``F(u) w(e) Z(v) / Z(source)`` and let a
    path be drawn edge by edge with probability ``w(e) Z(v) / Z(u)``.
    Weights are held as logarithms.
    """

    def __init__(self, tg: TransitionGraph, log_weights: np.ndarray, gamma: float,
                 covering: list[tuple[int, ...]]):
        if log_weights.shape != (tg.num_edges,) or not np.all(np.isfinite(log_weights)):
            raise ValueError("weights must be positive and finite, one per edge")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if gamma > 0 and not covering:
            raise ValueError("exploration needs a non-empty covering set")
        self.tg = tg
        self.gamma = gamma
        self.covering = covering
        lw = [np.where(E >= 0, log_weights[np.maximum(E, 0)], -np.inf) for E in tg.layer_edges]
        k1 = len(lw)
        logZ = [None] * (k1 + 1)
        logZ[k1] = np.zeros(1)
        for L in range(k1 - 1, -1, -1):
            logZ[L] = _lse(lw[L] + logZ[L + 1][None, :], axis=1)
        logF = [np.zeros(1)]
        for L in range(k1):
            logF.append(_lse(logF[L][:, None] + lw[L], axis=0))
        self._lw = lw
        self._logZ = logZ
        self.log_total = float(logZ[0][0])

        weighted = np.zeros(tg.num_edges)
        for L, E in enumerate(tg.layer_edges):
            a, b = np.nonzero(E >= 0)
            weighted[E[a, b]] = np.exp(logF[L][a] + lw[L][a, b] + logZ[L + 1][b] - self.log_total)
        self.weighted = weighted
        cover = np.zeros(tg.num_edges)
        for p in covering:
            cover[list(p)] += 1.0
        self.cover = cover / len(covering) if covering else cover
        self.q = gamma * self.cover + (1.0 - gamma) * weighted

    def path_log_prob_weighted(self, path) -> float:
        """Log-probability of a path under the weights alone."""
        tg = self.tg
        total = 0.0
        for e in path:
            L = int(tg.node_layer[tg.src[e]])
            E = tg.layer_edges[L]
            a, b = np.argwhere(E == e)[0]
            total += self._lw[L][a, b]
        return total - self.log_total

    def path_prob(self, path) -> float:
        """Probability of drawing ``path`` under the exploration mixture."""
        p = (1.0 - self.gamma) * np.exp(self.path_log_prob_weighted(path))
        if self.gamma > 0:
            p += self.gamma * sum(1 for c in self.covering if c == tuple(path)) / len(self.covering)
        return float(p)

    def sample_weighted(self, rng: np.random.Generator) -> tuple[int, ...]:
        path = []
        a = 0
        for L, E in enumerate(self.tg.layer_edges):
            logits = self._lw[L][a] + self._logZ[L + 1] - self._logZ[L][a]
            probs = np.exp(logits)
            b = int(rng.choice(len(probs), p=probs / probs.sum()))
            path.append(int(E[a, b]))
            a = b
        return tuple(path)

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        if self.gamma > 0 and rng.random() < self.gamma:
            return self.covering[int(rng.integers(len(self.covering)))]
        return self.sample_weighted(rng)


def edge_probabilities(tg: TransitionGraph, weights: np.ndarray, gamma: float,
                       covering: list[tuple[int, ...]]) -> PathDistribution:
    """Edge marginals ``q`` and a path sampler for positive edge ``weights``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ValueError("edge weights must be positive and finite")
    return PathDistribution(tg, np.log(weights), gamma, covering)
