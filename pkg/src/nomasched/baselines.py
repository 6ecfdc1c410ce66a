"""Benchmark groupers: gain-sorted clustering (ATH) and independent-set
pairing on a split conflict graph (ZZ)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Instance, NomaGroup, geq, sic_order
from .online import FrameResult, _budgets, solo_feasible


def ath_clusters(order_desc: list[int], kappa: int) -> list[list[int]]:
    """Cluster ``l`` takes ranks ``l, l + kappa, l + 2 kappa, ...`` of the
    descending-gain order."""
    return [order_desc[l::kappa] for l in range(kappa) if order_desc[l::kappa]]


def _failing(members: list[int], gains, budgets, thresholds) -> list[int]:
    bad = []
    received = 0.0
    for i in members:
        signal = budgets[i] * gains[i]
        if not geq(signal, thresholds[i] * (1.0 + received)):
            bad.append(i)
        received += signal
    return bad


def prune_cluster(cluster: list[int], gains, budgets, thresholds) -> list[int]:
    """Drop members until the SIC requirements of the cluster all hold."""
    members = sic_order(cluster, gains)
    while members:
        bad = _failing(members, gains, budgets, thresholds)
        if not bad:
            break
        members.remove(bad[0])
    return members


def ath_frame(instance: Instance, frame: int, budgets=None) -> FrameResult:
    """Online adaptation of the clustering grouper.

    ``kappa = ceil(m / M)`` clusters are re-formed every slot from the
    unserved devices; devices outside their window are dropped first, then
    members failing their SINR check, and the largest pruned cluster
    (lowest index on ties) is served.
    """
    budgets = _budgets(instance, budgets)
    m, M = instance.num_devices, instance.group_cap
    kappa = math.ceil(m / M)
    b = instance.thresholds(frame)
    win = instance.window(frame)
    active = (budgets > 0) & (instance.packet_bits[:, frame] > 0)
    unserved = np.ones(m, dtype=bool)
    result = FrameResult(frame)
    for j in range(instance.num_slots):
        g = instance.gains[:, j, frame]
        remaining = np.nonzero(unserved)[0].tolist()
        order = sorted(remaining, key=lambda i: (-g[i], i))
        best: list[int] = []
        for cluster in ath_clusters(order, kappa):
            usable = [i for i in cluster if win[i, j] and active[i]]
            pruned = prune_cluster(usable, g, budgets, b)
            if len(pruned) > len(best):
                best = pruned
        if best:
            unserved[best] = False
            result.groups.append(NomaGroup(j, frame, best, [float(budgets[i]) for i in best]))
    return result


@dataclass
class PairGraph:
    """Conflict graph over (candidate set, slot) nodes."""

    sets: list[tuple[int, ...]]
    slots: np.ndarray
    adjacency: np.ndarray  # (V, V) bool
    parent: np.ndarray  # index of the originating node in G (identity for G)

    def __len__(self):
        return len(self.sets)

    def neighbors(self, v: int) -> set[int]:
        return set(np.nonzero(self.adjacency[v])[0].tolist())


def zz_candidates(instance: Instance, frame: int, budgets=None) -> list[tuple[tuple[int, ...], int]]:
    """Feasible singletons and pairs of every slot, respecting windows."""
    budgets = _budgets(instance, budgets)
    b = instance.thresholds(frame)
    edges = solo_feasible(instance, frame, budgets)
    out = []
    for j in range(instance.num_slots):
        g = instance.gains[:, j, frame]
        order = sic_order(np.nonzero(edges[:, j])[0].tolist(), g)
        for pos, lo in enumerate(order):
            out.append(((lo,), j))
            lo_signal = budgets[lo] * g[lo]
            for hi in order[pos + 1:]:
                if geq(budgets[hi] * g[hi], b[hi] * (1.0 + lo_signal)):
                    out.append(((lo, hi), j))
    return out


def conflict_graph(nodes: list[tuple[tuple[int, ...], int]], m: int) -> PairGraph:
    """G: nodes conflict when they share a slot or a device."""
    V = len(nodes)
    slots = np.array([j for _, j in nodes], dtype=np.int64)
    member = np.zeros((V, m), dtype=np.int32)
    for v, (c, _) in enumerate(nodes):
        member[v, list(c)] = 1
    adj = (slots[:, None] == slots[None, :]) | ((member @ member.T) > 0)
    np.fill_diagonal(adj, False)
    return PairGraph([c for c, _ in nodes], slots, adj, np.arange(V))


def split_graph(G: PairGraph) -> PairGraph:
    """H: every pair node becomes two single-device copies that keep all of
    the pair's neighbors but are not adjacent to each other."""
    sets, parent = [], []
    for v, c in enumerate(G.sets):
        for i in c:
            sets.append((i,))
            parent.append(v)
    parent = np.array(parent, dtype=np.int64)
    adj = G.adjacency[np.ix_(parent, parent)]
    adj &= parent[:, None] != parent[None, :]
    return PairGraph(sets, G.slots[parent], adj, parent)


def greedy_mis(graph: PairGraph) -> list[int]:
    """Minimum-degree greedy independent set; ties by (slot, lowest device id)."""
    V = len(graph)
    if V == 0:
        return []
    alive = np.ones(V, dtype=bool)
    degree = graph.adjacency.sum(axis=1).astype(np.int64)
    key_slot = graph.slots
    key_dev = np.array([min(c) for c in graph.sets], dtype=np.int64)
    chosen = []
    while alive.any():
        idx = np.nonzero(alive)[0]
        v = int(idx[np.lexsort((idx, key_dev[idx], key_slot[idx], degree[idx]))[0]])
        chosen.append(v)
        gone = graph.adjacency[v] & alive
        gone[v] = True
        alive &= ~gone
        degree -= graph.adjacency[gone].sum(axis=0)
    return sorted(chosen)


def zz_frame(instance: Instance, frame: int, budgets=None) -> FrameResult:
    """Offline pairing: greedy independent set on the split conflict graph."""
    if instance.group_cap != 2:
        raise ValueError("the pairing baseline is defined for group_cap == 2 only")
    budgets = _budgets(instance, budgets)
    nodes = zz_candidates(instance, frame, budgets)
    H = split_graph(conflict_graph(nodes, instance.num_devices))
    per_slot: dict[int, set[int]] = {}
    for v in greedy_mis(H):
        per_slot.setdefault(int(H.slots[v]), set()).update(H.sets[v])
    result = FrameResult(frame)
    for j in sorted(per_slot):
        members = sic_order(per_slot[j], instance.gains[:, j, frame])
        result.groups.append(NomaGroup(j, frame, members, [float(budgets[i]) for i in members]))
    return result
