"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The training-based criteria (7 to 10) share agents trained once per session on
five generated topologies with the desk schedule at beta = 100.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from fogbalance.ddql import DDQLAgent, TrainSchedule, epsilon, run_training
from fogbalance.engine import run_episode
from fogbalance.harness import evaluate, make_agent, make_baseline, make_rl_policy, \
    train_agent
from fogbalance.metrics import export_csv, mean_loop_delay, mean_waiting
from fogbalance.mlp import MLP
from fogbalance.state import dist_update
from fogbalance.topology import generate_topology
from fogbalance.workload import GenConfig, default_apps

from oracles import dist_recurrence, gradient_error
from test_ddql import greedy, mdp_schedule, optimal_policy, play_mdp

TOPO_SEEDS = range(5)
EVAL_SEEDS = (101, 102)
BETA = 100.0
APPS = default_apps()
_CURVES = {}  # training curves, filled alongside the session agents


def _topology(seed):
    return generate_topology(20, 5, seed)


# -- 1. vanishing normalization ---------------------------------------------------

def test_criterion_1_dist_tensor_oracle(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        shape = tuple(int(k) for k in rng.integers(1, 5, size=3))
        n = int(rng.integers(1, 40))
        updates = [tuple(int(rng.integers(k)) for k in shape) for _ in range(n)]
        d = np.zeros(shape)
        for cell in updates:
            d = dist_update(d, *cell)
        exact = dist_recurrence(updates, shape)
        for idx in np.ndindex(shape):
            worst = max(worst, abs(d[idx] - float(exact.get(idx, Fraction(0)))))
    law = True
    for _ in range(200):
        shape = (5, 4, 3)
        n = int(rng.integers(1, 30))
        flat = rng.permutation(60)[:n]
        updates = [np.unravel_index(int(i), shape) for i in flat]
        d = np.zeros(shape)
        for cell in updates:
            d = dist_update(d, *cell)
        for k, cell in enumerate(reversed(updates), start=1):
            law &= bool(d[cell] == (2.0 ** -k if k < n else 2.0 ** -(n - 1)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and law and elapsed < 5.0
    report(1, ok, f"max deviation {worst:.2e}, vanishing law exact={law}, {elapsed:.2f} s")
    assert ok


# -- 2. reward telescoping ----------------------------------------------------------

def test_criterion_2_reward_telescoping(report):
    checked, bad = 0, 0
    for seed in range(12):
        topo = generate_topology(12 + seed, 2 + seed % 4, seed)
        for name in ("random", "rr", "nearest", "fastest"):
            res = evaluate(name, topo, APPS, 40.0 + 20 * seed, 3_000, seed)
            log = res.census_log
            total = sum(int(r) for r in res.rewards)
            exact = all(float(r).is_integer() for r in res.rewards)
            bad += not (exact and log and total == log[0] - log[-1])
            checked += 1
    report(2, bad == 0, f"{checked - bad}/{checked} episodes telescope exactly")
    assert bad == 0


# -- 3. conservation and determinism ------------------------------------------------

def test_criterion_3_conservation_and_determinism(report, tmp_path):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    violations, mismatches = 0, 0
    for i in range(100):
        n = int(rng.integers(8, 24))
        topo = generate_topology(n, int(rng.integers(1, max(2, n // 4))), int(rng.integers(1000)))
        beta = float(rng.uniform(20, 300))
        horizon = float(rng.uniform(500, 3_000))
        name = ("random", "rr", "nearest", "fastest", "fastest-backlog")[i % 5]
        seed = int(rng.integers(10_000))
        res = evaluate(name, topo, APPS, beta, horizon, seed)
        run = run_episode(topo, APPS, GenConfig(beta), make_baseline(name, topo, seed),
                          horizon, seed, check=True)
        c = run.counts
        residual = c["fog_in_transit"] + c["fog_waiting"] + c["fog_in_service"]
        violations += c["generated"] != c["fog_completed"] + residual
        export_csv(res.records, tmp_path / "a.csv")
        export_csv(run.records, tmp_path / "b.csv")
        mismatches += (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()
    elapsed = time.perf_counter() - start
    ok = violations == 0 and mismatches == 0 and elapsed < 30.0
    report(3, ok, f"{violations} conservation violations, {mismatches} CSV mismatches "
                  f"over 100 configs, {elapsed:.1f} s")
    assert ok


# -- 4. gradients -------------------------------------------------------------------

def test_criterion_4_gradient_check(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        sizes = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(2, 5)))]
        sizes.append(int(rng.integers(1, 4)))
        net = MLP.create(sizes, i, dtype=np.float64)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=sizes[0])
        action = int(rng.integers(sizes[-1]))
        worst = max(worst, gradient_error(net, x, action, float(rng.normal()), h=1e-6))
    report(4, worst < 1e-4, f"max relative error {worst:.2e} over 100 nets")
    assert worst < 1e-4


# -- 5. toy MDP ---------------------------------------------------------------------

def test_criterion_5_mdp_oracle(report):
    # default network, learning rate and discount; short periods so 2,000 steps suffice
    sched = mdp_schedule(gamma=0.99, lr=2.5e-4, hidden=(256, 128, 64))
    want = optimal_policy(0.99)
    start = time.perf_counter()
    solved = 0
    for seed in range(10):
        agent = DDQLAgent(2, 2, sched, seed=seed)
        run_training(play_mdp(agent), agent)
        agent.sync()
        solved += greedy(agent) == want
    elapsed = time.perf_counter() - start
    ok = solved == 10 and elapsed < 60.0
    report(5, ok, f"{solved}/10 seeds reach the optimal policy {want}, {elapsed:.1f} s")
    assert ok


# -- 6. schedule ---------------------------------------------------------------------

def test_criterion_6_schedule(report):
    eps_ok = True
    for sched in (TrainSchedule.full(), TrainSchedule.desk()):
        t = int(np.floor(0.75 * sched.total_train_steps))
        eps_ok &= epsilon(0, sched) == 1.0 and epsilon(t, sched) == 0.01

    topo = _topology(0)
    sched = TrainSchedule.desk(total_train_steps=1_500, capacity=2_000, prefill=1_000)
    agent = make_agent("ddql", topo, sched, seed=0)
    checks = []
    original = agent.sync

    def sync():
        before = agent.q_target.same_as(agent.q)
        original()
        checks.append((agent.train_steps, before, agent.q_target.same_as(agent.q)))

    agent.sync = sync

    def play(episode):
        policy = make_rl_policy("ddql", agent, topo)
        return run_episode(topo, APPS, GenConfig(BETA), policy, 10_000, episode)

    run_training(play, agent)
    active = [c for c in checks if 0 < c[0] < sched.total_train_steps]
    steps_ok = agent.sync_steps == list(range(2000, agent.decision_steps + 1, 2000))
    sync_ok = bool(active) and all(after and not before for _, before, after in active)
    ok = eps_ok and steps_ok and sync_ok
    report(6, ok, f"epsilon endpoints ok={eps_ok}; {len(active)} syncs during training, "
                  f"bitwise equal after and different before={sync_ok}; period ok={steps_ok}")
    assert ok


# -- trained agents ------------------------------------------------------------------

@pytest.fixture(scope="session")
def trained():
    agents = {}
    for kind in ("ddql", "plrl-ed", "plrl-edql"):
        for seed in TOPO_SEEDS:
            agents[kind, seed], _CURVES[kind, seed] = train_agent(
                kind, _topology(seed), APPS, BETA, TrainSchedule.desk(), seed=seed)
    return agents


def test_training_improves_on_early_returns(trained):
    curves = [_CURVES["ddql", seed].returns for seed in TOPO_SEEDS]
    early = np.mean([np.mean(c[:10]) for c in curves])
    late = np.mean([np.mean(c[-10:]) for c in curves])
    assert late > early, (early, late)


def _seed_mean(metric, name, beta=BETA, horizon=10_000, agents=None):
    vals = []
    for seed in TOPO_SEEDS:
        agent = None if agents is None else agents.get((name, seed))
        for ev in EVAL_SEEDS:
            vals.append(metric(evaluate(name, _topology(seed), APPS, beta, horizon, ev, agent)))
    return float(np.mean(vals))


def test_criterion_7_policy_ordering(report, trained):
    start = time.perf_counter()
    wait = {name: _seed_mean(lambda r: mean_waiting(r.records), name, agents=trained)
            for name in ("ddql", "random", "rr")}
    total = {name: _seed_mean(lambda r: mean_loop_delay(r.records), name, agents=trained)
             for name in ("ddql", "random", "rr", "nearest", "fastest")}
    fastest_200 = _seed_mean(lambda r: mean_loop_delay(r.records), "fastest", beta=200.0)
    rl_best = wait["ddql"] < wait["random"] and wait["ddql"] < wait["rr"]
    load_ok = total["fastest"] > 2.0 * fastest_200
    not_best = total["fastest"] > min(total.values())
    ok = rl_best and load_ok and not_best
    report(7, ok, "waiting ms " + ", ".join(f"{k}={v:.1f}" for k, v in wait.items())
           + f"; fastest total {total['fastest']:.1f} at beta 100 vs {fastest_200:.1f} at 200"
           f" (load-scaled ok={load_ok}, not best={not_best}); "
           f"{time.perf_counter() - start:.0f} s after training")
    assert ok


def test_criterion_8_long_horizon_reward(report, trained):
    short = _seed_mean(lambda r: r.mean_reward(), "ddql", agents=trained)
    long = _seed_mean(lambda r: r.mean_reward(), "ddql", horizon=100_000, agents=trained)
    ok = abs(long - short) <= 0.25 * abs(short)
    report(8, ok, f"mean reward per decision {short:.5f} at 10,000 vs {long:.5f} at 100,000")
    assert ok


def test_criterion_9_ablation_direction(report, trained):
    loop = {name: _seed_mean(lambda r: mean_loop_delay(r.records), name, agents=trained)
            for name in ("ddql", "plrl-ed", "plrl-edql")}
    ed_worse = loop["plrl-ed"] > loop["ddql"]
    close = abs(loop["ddql"] - loop["plrl-edql"]) <= 0.15 * loop["plrl-edql"]
    ok = ed_worse and close
    report(9, ok, "loop ms " + ", ".join(f"{k}={v:.1f}" for k, v in loop.items())
           + f" (ED worse={ed_worse}, within 15% of EDQL={close})")
    assert ok


def test_criterion_10_checkpoint_round_trip(report, trained, tmp_path):
    agent = trained["ddql", 0]
    agent.save(tmp_path / "a.ckpt", policy="ddql")
    back, _ = DDQLAgent.load(tmp_path / "a.ckpt")
    x = np.random.default_rng(10).normal(size=(64, agent.state_dim)).astype(np.float32)
    forward_ok = all(a.forward(x).tobytes() == b.forward(x).tobytes()
                     for a, b in ((agent.q, back.q), (agent.q_target, back.q_target)))
    topo = _topology(0)
    mem = evaluate("ddql", topo, APPS, BETA, 10_000, 7, agent)
    disk = evaluate("ddql", topo, APPS, BETA, 10_000, 7, back)
    export_csv(mem.records, tmp_path / "mem.csv")
    export_csv(disk.records, tmp_path / "disk.csv")
    eval_ok = (tmp_path / "mem.csv").read_bytes() == (tmp_path / "disk.csv").read_bytes() \
        and mem.rewards == disk.rewards
    ok = forward_ok and eval_ok
    report(10, ok, f"forward bitwise={forward_ok}, evaluation identical={eval_ok}")
    assert ok
