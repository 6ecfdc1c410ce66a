"""Acceptance criteria, each at its stated scale and tolerance.

Every test records a one-line PASS/FAIL verdict that is repeated in the
terminal summary of the pytest run.
"""

import time
from math import comb
from pathlib import Path

import numpy as np

from conftest import make_instance, random_instance, record_criterion
from nomasched.exact import opt_bruteforce_frame, opt_matching_m1
from nomasched.harness import ExperimentSpec, Guards, mean_nsd, run_algorithm, run_experiment
from nomasched.learning import (LearnerConfig, PathDistribution, TransitionGraph,
                                covering_paths, pl_train, ql_train, rl_policy)
from nomasched.model import sic_order, validate_schedule
from nomasched.online import SlotContext, bms, frames_to_schedule, greedy_accept
from nomasched.scenario import ScenarioParams, generate_instance, load_instance

FIXTURES = Path(__file__).parent / "fixtures"


def max_feasible_subset(gains, budgets, thresholds) -> int:
    """Largest feasible subset by enumerating every subset at once."""
    m = len(gains)
    if m == 0:
        return 0
    order = np.array(sic_order(range(m), gains))
    signal = (budgets * gains)[order]
    b = thresholds[order]
    masks = ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(bool)
    taken = masks * signal
    before = np.cumsum(taken, axis=1) - taken
    ok = ~masks | (signal >= b * (1 + before) - 1e-9 * np.abs(b * (1 + before)))
    return int(masks[ok.all(axis=1)].sum(axis=1).max())


def test_criterion_01_greedy_is_maximum():
    rng = np.random.default_rng(1)
    mismatches, slots, greedy_time = 0, 0, 0.0
    while slots < 1000:
        inst = random_instance(rng, int(rng.integers(1, 13)), int(rng.integers(1, 5)))
        budgets = inst.max_energy
        for j in range(inst.num_slots):
            ctx = SlotContext.build(inst, 0, j, budgets)
            start = time.perf_counter()
            got = len(greedy_accept(ctx))
            greedy_time += time.perf_counter() - start
            idx = ctx.eligible
            want = max_feasible_subset(ctx.gains[idx], budgets[idx], ctx.thresholds[idx])
            mismatches += got != want
            slots += 1
    ok = mismatches == 0 and greedy_time < 10
    record_criterion(1, ok, f"{slots} slots, {mismatches} mismatches, greedy {greedy_time:.3f}s")
    assert ok


def test_criterion_02_two_competitive():
    rng = np.random.default_rng(2)
    violations = 0
    for _ in range(500):
        inst = random_instance(rng, int(rng.integers(1, 9)), int(rng.integers(1, 5)),
                               M=int(rng.integers(1, 4)))
        violations += 2 * bms(inst, 0).nsd < opt_bruteforce_frame(inst, 0).nsd
    record_criterion(2, violations == 0, f"500 instances, {violations} violations")
    assert violations == 0


def test_criterion_03_tight_instance():
    inst = load_instance(FIXTURES / "two_device_adversary.json")
    online, offline = bms(inst, 0).nsd, opt_bruteforce_frame(inst, 0).nsd
    # the other continuation: the first-slot decision must not change
    mirrored = make_instance(inst.gains[::-1, :, :], packet_bits=1, rb_bandwidth_hz=1.0)
    same_start = bms(mirrored, 0).groups[0].members == bms(inst, 0).groups[0].members
    both_opt = opt_bruteforce_frame(mirrored, 0).nsd == 2
    ok = online == 1 and offline == 2 and same_start and both_opt
    record_criterion(3, ok, f"BMS {online}, OPT {offline}, ratio {offline / max(online, 1):g}")
    assert ok


def test_criterion_04_matching_oracle():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        inst = random_instance(rng, int(rng.integers(1, 8)), int(rng.integers(1, 8)), M=1)
        mismatches += len(opt_matching_m1(inst, 0)) != opt_bruteforce_frame(inst, 0, guard=None).nsd
    record_criterion(4, mismatches == 0, f"1000 instances, {mismatches} mismatches")
    assert mismatches == 0


def test_criterion_05_small_network_replication():
    spec = ExperimentSpec(name="small_network", scenario={"n": 10, "M": 2}, algorithms=["bms", "ath", "opt"],
                          axis="m", values=[20, 40], seeds=list(range(50)))
    rows = run_experiment(spec)
    assert all(r.error is None for r in rows)
    parts, ok = [], True
    for m in (20, 40):
        b, a, o = (mean_nsd(rows, alg, m) for alg in ("bms", "ath", "opt"))
        ok &= b / o >= 0.85 and b >= a
        parts.append(f"m={m}: BMS {b:.2f} / OPT {o:.2f} = {b / o:.3f}, ATH {a:.2f}")
    record_criterion(5, ok, "; ".join(parts))
    assert ok


def test_criterion_06_large_network_anchor():
    spec = ExperimentSpec(name="large_network", scenario={"n": 20, "M": 20, "l_max_bits": 100_000},
                          algorithms=["bms"], axis="m", values=[2000], seeds=list(range(20)))
    start = time.perf_counter()
    rows = run_experiment(spec)
    wall = time.perf_counter() - start
    mean = mean_nsd(rows, "bms")
    ok = abs(mean - 279.82) <= 0.1 * 279.82 and wall < 60
    record_criterion(6, ok, f"mean BMS {mean:.2f} vs 279.82 ({mean / 279.82 - 1:+.1%}), {wall:.1f}s")
    assert ok


def test_criterion_07_graph_counts():
    mismatches = 0
    for tau in range(1, 7):
        for k in range(1, 11):
            tg = TransitionGraph(0, tau, k)
            ways = np.zeros(tg.num_nodes, dtype=object)
            ways[tg.source] = 1
            for e in np.argsort(tg.node_layer[tg.src], kind="stable"):
                ways[tg.dst[e]] += ways[tg.src[e]]
            mi = tau + 1
            want = (2 + k * mi, mi * (mi * (k - 1) + k + 3) // 2, comb(k + mi - 1, k))
            mismatches += (tg.num_nodes, tg.num_edges, int(ways[tg.sink])) != want
    fig = TransitionGraph(0, 2, 3)
    triple = (fig.num_nodes, fig.num_edges, len(fig.paths()))
    ok = mismatches == 0 and triple == (11, 18, 10)
    record_criterion(7, ok, f"60 graphs, {mismatches} mismatches, three-frame graph {triple}")
    assert ok


def test_criterion_08_path_distribution():
    rng = np.random.default_rng(8)
    worst_sum, worst_z = 0.0, 0.0
    for tau, k in ((1, 3), (2, 3), (2, 4)):
        tg = TransitionGraph(0, tau, k)
        d = PathDistribution(tg, rng.normal(size=tg.num_edges), 0.5, covering_paths(tg))
        paths = tg.paths()
        probs = np.array([d.path_prob(p) for p in paths])
        worst_sum = max(worst_sum, abs(probs.sum() - 1.0))
        draws = 100_000
        index = {p: i for i, p in enumerate(paths)}
        counts = np.bincount([index[d.sample(rng)] for _ in range(draws)], minlength=len(paths))
        sigma = np.sqrt(probs * (1 - probs) / draws)
        worst_z = max(worst_z, float(np.max(np.abs(counts / draws - probs) / sigma)))
    ok = worst_sum <= 1e-12 and worst_z <= 3.0
    record_criterion(8, ok, f"max |sum-1| {worst_sum:.1e}, max deviation {worst_z:.2f} sigma")
    assert ok


def test_criterion_09_learning_ordering():
    final = {"pl": [], "ql": [], "rl": []}
    cfg = LearnerConfig(rounds=200)
    for seed in range(20):
        inst = generate_instance(ScenarioParams(m=10, n=4, k=5, M=2, power_level=2, seed=seed))
        final["pl"].append(pl_train(inst, cfg, seed).nsd[-1])
        final["ql"].append(ql_train(inst, cfg, seed).nsd[-1])
        final["rl"].append(rl_policy(inst, seed, rounds=cfg.rounds).nsd[-1])
    pl, ql, rl = (float(np.mean(final[a])) for a in ("pl", "ql", "rl"))
    ok = pl >= ql >= rl and pl >= 1.2 * rl
    record_criterion(9, ok, f"final-round NSD PL {pl:.2f}, QL {ql:.2f}, RL {rl:.2f}, "
                            f"PL/RL {pl / rl:.3f}")
    assert ok


def test_criterion_10_power_profile():
    cfg = LearnerConfig(rounds=100)
    pl_pc, rl_pc = [], []
    for seed in range(3):
        inst = generate_instance(ScenarioParams(m=100, n=10, k=20, M=2, power_level=1, seed=seed))
        pl_pc.append(pl_train(inst, cfg, seed).mean_power.mean(axis=0))
        rl_pc.append(rl_policy(inst, seed, rounds=cfg.rounds).mean_power.mean(axis=0))
    pl_pc, rl_pc = np.mean(pl_pc, axis=0), np.mean(rl_pc, axis=0)
    rl_ratio = rl_pc[0] / rl_pc[-1] if rl_pc[-1] > 0 else np.inf
    pl_ratio = pl_pc.max() / pl_pc.min()
    ok = rl_ratio >= 5 and pl_ratio <= 2
    record_criterion(10, ok, f"RL frame 1 {rl_pc[0]:.4f} W vs frame 20 {rl_pc[-1]:.4f} W; "
                             f"PL max/min {pl_ratio:.3f}")
    assert ok


def test_criterion_11_conformance_fuzz():
    rng = np.random.default_rng(11)
    learner = LearnerConfig(rounds=2)
    instances, checked, violations = 0, 0, 0
    while instances < 1000:
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        k, tau = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        M = int(rng.integers(1, min(m, 3) + 1))
        inst = random_instance(rng, m, n, k=k, M=M, power_level=tau)
        algorithms = ["bms", "ath", "selfish", "pl", "ql", "rl"]
        algorithms += ["zz"] if M == 2 else ["ranking"] if M == 1 else []
        if k == 1 or m <= 4:
            algorithms.append("opt")
        for alg in algorithms:
            frames, _ = run_algorithm(inst, alg, instances, Guards(), learner)
            violations += len(validate_schedule(inst, frames_to_schedule(inst, frames)))
            checked += 1
        instances += 1
    record_criterion(11, violations == 0,
                     f"{instances} instances, {checked} schedules, {violations} violations")
    assert violations == 0
