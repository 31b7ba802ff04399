"""Acceptance checks, one test per criterion.

Each test prints a single ``[PASS]`` / ``[FAIL]`` line (visible even when
pytest captures output) and then asserts.  Run just this file with::

    pytest tests/test_acceptance.py -v
"""
import math
import time

import numpy as np
import pytest

from mulane import (ApproxConstants, BanditState, Environment, IncrementalEvaluator, beg, bege,
                    build_network, build_table, cucb_max_round, dp_nonoverlapping, marginal_gains,
                    mg, mg_nonoverlapping, opt_enumerate, reward_overlapping)
from mulane.cli import main as cli_main
from mulane.network import dump_network
from mulane.online import SimulationConfig, run_experiment
from mulane.synthetic import random_network
from oracles import enumerate_visit_probs, layer_matrix

from conftest import path_layer


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    return emit


def _overlapping_suite(alpha, count=200, seed=0):
    rng = np.random.default_rng(seed)
    suite = []
    while len(suite) < count:
        m = int(rng.integers(2, 4))
        caps = rng.integers(0, 6, size=m)
        net = random_network(rng, m, (1, 6), overlapping=True, alpha=alpha, caps=caps)
        suite.append((net, build_table(net), caps, rng))
    return suite


@pytest.fixture(scope="module")
def suite_random_start():
    return _overlapping_suite("random", seed=101)


@pytest.fixture(scope="module")
def suite_stationary():
    return _overlapping_suite("stationary", seed=202)


def test_criterion_1_visit_probabilities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, layers = 0.0, 0
    for _ in range(60):
        n, cap = int(rng.integers(1, 6)), int(rng.integers(0, 7))
        net = random_network(rng, 1, (n, n), alpha="random", caps=[cap], weighted=bool(rng.integers(2)))
        layer = net.layers[0]
        expected = enumerate_visit_probs(layer_matrix(layer), layer.alpha, cap)
        worst = max(worst, float(np.abs(build_table(net).probs[0] - expected).max(initial=0.0)))
        layers += 1
    p3 = build_table(build_network([path_layer()], default_weight=1.0)).probs[0][2].tolist()
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and p3 == [0, 0, 0, 0.5, 0.5, 0.75] and elapsed < 10
    report(1, ok, f"{layers} layers, max |P - oracle| = {worst:.2e}, P3 row {p3}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_lemma_suites(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_mono, worst_stat, ergodic = 0.0, 0.0, 0
    for _ in range(150):
        n, cap = int(rng.integers(1, 9)), int(rng.integers(1, 11))
        net = random_network(rng, 1, (n, n), alpha="random", caps=[cap])
        worst_mono = max(worst_mono, float(-np.diff(build_table(net).probs[0], axis=1).min()))
    for _ in range(120):
        n, cap = int(rng.integers(2, 9)), int(rng.integers(2, 11))
        net = random_network(rng, 1, (n, n), alpha="stationary", caps=[cap])
        table = build_table(net)
        worst_mono = max(worst_mono, float(-np.diff(table.probs[0], axis=1).min()))
        g = marginal_gains(table, net.weights).node[0][:, 1:]
        worst_stat = max(worst_stat, float(np.diff(g, axis=1).max()))
        ergodic += 1
    elapsed = time.perf_counter() - t0
    ok = worst_mono <= 1e-12 and worst_stat <= 1e-12 and ergodic >= 100 and elapsed < 30
    report(2, ok, f"largest decrease of P in b {max(worst_mono, 0):.1e}; largest increase of g under "
                  f"stationary start {max(worst_stat, 0):.1e} over {ergodic} ergodic layers; {elapsed:.1f}s")
    assert ok


def test_criterion_3_submodularity(report, suite_random_start, suite_stationary):
    t0 = time.perf_counter()
    lattice, dr, checks_l, checks_d = -np.inf, -np.inf, 0, 0
    for net, table, caps, rng in suite_random_start:
        r = lambda k: reward_overlapping(table, net.weights, k)  # noqa: E731
        for _ in range(15):
            x = np.array([rng.integers(0, c + 1) for c in caps])
            y = np.array([rng.integers(0, c + 1) for c in caps])
            lattice = max(lattice, r(np.maximum(x, y)) + r(np.minimum(x, y)) - r(x) - r(y))
            checks_l += 1
    for net, table, caps, rng in suite_stationary:
        r = lambda k: reward_overlapping(table, net.weights, k)  # noqa: E731
        for _ in range(15):
            y = np.array([rng.integers(0, c + 1) for c in caps])
            x = np.array([rng.integers(0, v + 1) for v in y])
            for i in np.flatnonzero(y < caps):
                ei = np.eye(len(caps), dtype=int)[i]
                dr = max(dr, (r(y + ei) - r(y)) - (r(x + ei) - r(x)))
                checks_d += 1
    elapsed = time.perf_counter() - t0
    ok = lattice <= 1e-9 and dr <= 1e-9 and elapsed < 60
    report(3, ok, f"lattice violation max {lattice:.1e} ({checks_l} pairs / {len(suite_random_start)} "
                  f"instances); DR violation max {dr:.1e} ({checks_d} checks / {len(suite_stationary)} "
                  f"stationary instances); {elapsed:.1f}s")
    assert ok


def test_criterion_4_exact_solvers(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    dp_err = mg_err = 0.0
    for alpha in ("random", "stationary"):
        for _ in range(200):
            m = int(rng.integers(1, 4))
            caps = rng.integers(0, 6, size=m)
            net = random_network(rng, m, (1, 6), overlapping=False, alpha=alpha, caps=caps)
            table = build_table(net)
            B = int(rng.integers(0, caps.sum() + 2))
            opt = opt_enumerate(table, net.weights, B).reward
            dp_err = max(dp_err, abs(dp_nonoverlapping(table, net.weights, B).reward - opt))
            if alpha == "stationary":
                got = mg_nonoverlapping(marginal_gains(table, net.weights), B).reward
                mg_err = max(mg_err, abs(got - opt))
    elapsed = time.perf_counter() - t0
    ok = dp_err <= 1e-9 and mg_err <= 1e-9 and elapsed < 60
    report(4, ok, f"|DP - OPT| max {dp_err:.1e} on 400 instances; |MG-no - OPT| max {mg_err:.1e} "
                  f"on 200 stationary instances; {elapsed:.1f}s")
    assert ok


def test_criterion_5_approximation_ratios(report, suite_random_start, suite_stationary):
    c = ApproxConstants.compute()
    ratios = {"beg": 1.0, "bege": 1.0, "mg": 1.0}
    slack = {"beg": np.inf, "bege": np.inf, "mg": np.inf}
    for name, suite in (("random", suite_random_start), ("stationary", suite_stationary)):
        for net, table, caps, rng in suite:
            B = int(rng.integers(0, caps.sum() + 2))
            opt = opt_enumerate(table, net.weights, B).reward
            runs = {"beg": beg, "bege": bege} if name == "random" else {"beg": beg, "bege": bege, "mg": mg}
            for algo, solver in runs.items():
                got = solver(table, net.weights, B).reward
                bound = (0.357 if algo == "beg" else c.ratio_mg) * opt - (0 if algo == "beg" else 1e-9)
                slack[algo] = min(slack[algo], got - bound)
                if opt > 0:
                    ratios[algo] = min(ratios[algo], got / opt)
    ok = all(s >= 0 for s in slack.values())
    report(5, ok, "worst reward/OPT: " + ", ".join(f"{a} {r:.4f}" for a, r in ratios.items())
           + f" (bounds 0.357 / {c.ratio_mg:.4f}); BEG close to BEGE and OPT is reported only")
    assert ok


def test_criterion_6_incremental_evaluator(report):
    rng = np.random.default_rng(6)
    net = random_network(rng, 4, (4, 8), overlapping=True, alpha="random", caps=[400] * 4)
    table = build_table(net)
    ev = IncrementalEvaluator(table, net.weights)
    worst = 0.0
    for _ in range(1000):
        i = int(rng.integers(4))
        b = int(rng.integers(0, min(3, 400 - ev.k[i]) + 1))
        ev.apply(i, b)
        worst = max(worst, abs(ev.reward - reward_overlapping(table, net.weights, ev.k)))
    ok = worst <= 1e-9
    report(6, ok, f"1000 applies (final k={ev.k.tolist()}), max |incremental - scratch| = {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_7_online_estimates(report):
    rng = np.random.default_rng(7)
    net = random_network(rng, 2, (3, 4), overlapping=True, alpha="random", caps=[3, 3])
    seeds = np.random.SeedSequence(77).spawn(3)
    env = Environment(net, layer_rngs=[np.random.default_rng(s) for s in seeds[:2]],
                      weight_rng=np.random.default_rng(seeds[2]))
    state = BanditState.new((3, 3), net.N)
    monotone = True
    for _ in range(100_000):
        cucb_max_round(state, env, 3)
        for u in state.last_ucb:
            if np.any(u[:, 2:] < u[:, 1:-1]):
                monotone = False
    checked, worst = 0, 0.0
    ids = state.slots.ids
    for i in range(net.m):
        truth = env.table.dense(i)
        for b in range(1, 4):
            n = int(state.T[i][b])
            if n < 10_000:
                continue
            for slot in range(state.slots.used):
                p = truth[ids[slot], b]
                se = math.sqrt(p * (1 - p) / n)
                dev = abs(state.mu[i][slot, b] - p)
                worst = max(worst, dev / se if se > 0 else (0.0 if dev <= 1e-12 else np.inf))
                checked += 1
    ok = monotone and checked > 0 and worst <= 4
    report(7, ok, f"{checked} arms with >= 1e4 plays, max |mu_hat - P| / stderr = {worst:.2f}; "
                  f"UCBs monotone in b every round: {monotone}")
    assert ok


@pytest.mark.slow
def test_criterion_8_regret(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    net = random_network(rng, 3, (6, 10), overlapping=False, caps=[6, 6, 6], weights="random3")
    table = build_table(net)
    B = 6
    assert beg(table, net.weights, B).reward == pytest.approx(opt_enumerate(table, net.weights, B).reward)
    results = {}
    for algo in ("cucb-max", "cucb-mg", "eps-greedy"):
        cfg = SimulationConfig(algo=algo, budget=B, rounds=5000, runs=50, seed=8, epsilon=0.1)
        results[algo] = run_experiment(net, cfg, table=table)
    sub = {}
    for algo in ("cucb-max", "cucb-mg"):
        m = results[algo].mean
        sub[algo] = [(m[2 * T - 1] - m[T - 1], m[T - 1]) for T in (1250, 2500)]
    sublinear = all(inc < base for pairs in sub.values() for inc, base in pairs)
    mg_res, eps_res = results["cucb-mg"], results["eps-greedy"]
    separated = mg_res.ci_high[-1] < eps_res.ci_low[-1]
    elapsed = time.perf_counter() - t0
    ok = sublinear and separated and elapsed < 600
    detail = "; ".join(f"{a} Reg(T')/Reg(2T')-Reg(T') = " + ", ".join(f"{b:.0f}/{i:.0f}" for i, b in p)
                       for a, p in sub.items())
    report(8, ok, f"N={net.N}, B={B}, 50 runs x 5000 rounds; {detail}; final CUCB-MG "
                  f"{mg_res.mean[-1]:.1f} [{mg_res.ci_low[-1]:.1f}, {mg_res.ci_high[-1]:.1f}] vs eps-greedy "
                  f"{eps_res.mean[-1]:.1f} [{eps_res.ci_low[-1]:.1f}, {eps_res.ci_high[-1]:.1f}]; {elapsed:.0f}s")
    assert ok


def test_criterion_9_determinism(report, tmp_path):
    rng = np.random.default_rng(9)
    net = random_network(rng, 3, (3, 6), overlapping=True, alpha="random", caps=[4, 4, 4])
    manifest = dump_network(net, tmp_path / "net")
    outputs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 3)):
        for algo in ("cucb-max", "ts"):
            args = ["simulate", "--network", str(manifest), "--algo", algo, "--budget", "4",
                    "--rounds", "300", "--runs", "4", "--seed", "11", "--workers", str(workers),
                    "--out", str(tmp_path / f"{tag}-{algo}"), "-q"]
            assert cli_main(args) == 0
            outputs.append((tag, algo, (tmp_path / f"{tag}-{algo}" / "regret.csv").read_bytes()))
    by_algo = {}
    for tag, algo, data in outputs:
        by_algo.setdefault(algo, set()).add(data)
    ok = all(len(v) == 1 for v in by_algo.values())
    report(9, ok, "regret.csv byte-identical across two invocations and 1 vs 3 workers "
                  f"for {sorted(by_algo)}: {ok}")
    assert ok
