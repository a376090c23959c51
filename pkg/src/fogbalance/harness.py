"""Experiment orchestration: policy factory, agent training, config and grid runs."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .ddql import DDQLAgent, DDQLPolicy, TrainingCurve, TrainSchedule, run_training
from .engine import EpisodeResult, run_episode
from .metrics import CLOUD_LOOP, FOG_LOOP, bootstrap_ci, export_csv, mean_loop_delay, \
    mean_waiting, write_summary
from .policies import ElectrePolicy, FastestPolicy, NearestPolicy, PlacementPolicy, \
    RandomPolicy, RoundRobinPolicy
from .state import ParlEncoder, PlrlEncoder, PlrlRewarder
from .topology import Topology, generate_topology
from .workload import AppSpec, Category, GenConfig, check_apps, default_apps

log = logging.getLogger(__name__)

__all__ = [
    "BASELINES",
    "RL_POLICIES",
    "POLICY_NAMES",
    "ConfigError",
    "ExperimentConfig",
    "make_baseline",
    "make_agent",
    "make_rl_policy",
    "train_agent",
    "evaluate",
    "validate_config",
    "load_config",
    "run_grid",
    "run_path",
]

BASELINES = ("random", "rr", "nearest", "fastest", "fastest-backlog", "electre")
RL_POLICIES = ("ddql", "plrl-ed", "plrl-ql", "plrl-edql")
POLICY_NAMES = BASELINES + RL_POLICIES
_PLRL_FLAVOR = {"plrl-ed": "ED", "plrl-ql": "QL", "plrl-edql": "EDQL"}

TRAIN_HORIZON = 10_000.0


class ConfigError(ValueError):
    """Configuration problems; ``errors`` lists every violation found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- policies and agents -----------------------------------------------------

def make_baseline(name: str, topology: Topology, seed: int = 0) -> PlacementPolicy:
    if name == "random":
        return RandomPolicy(seed)
    if name == "rr":
        return RoundRobinPolicy()
    if name == "nearest":
        return NearestPolicy(topology)
    if name == "fastest":
        return FastestPolicy(topology, use_backlog=False)
    if name == "fastest-backlog":
        return FastestPolicy(topology, use_backlog=True)
    if name == "electre":
        return ElectrePolicy()
    raise ValueError(f"unknown baseline policy {name!r}")


def _encoder(kind: str, topology: Topology, n_categories: int = len(Category)):
    if kind == "ddql":
        return ParlEncoder(topology.fog_ids, topology.cluster_ids, n_categories)
    if kind in _PLRL_FLAVOR:
        return PlrlEncoder(topology.fog_ids, topology.cluster_ids)
    raise ValueError(f"unknown RL policy {kind!r}")


def make_agent(kind: str, topology: Topology, sched: TrainSchedule, seed: int = 0) -> DDQLAgent:
    enc = _encoder(kind, topology)
    return DDQLAgent(enc.dim, enc.n_actions, sched, seed=seed)


def make_rl_policy(kind: str, agent: DDQLAgent, topology: Topology, *,
                   queue_capacity: int = 10, overflow_penalty: float = 1.0) -> DDQLPolicy:
    enc = _encoder(kind, topology)
    if enc.dim != agent.state_dim or enc.n_actions != agent.n_actions:
        raise ValueError(f"agent dims ({agent.state_dim}, {agent.n_actions}) do not fit "
                         f"{kind!r} on this topology ({enc.dim}, {enc.n_actions})")
    if kind == "ddql":
        return DDQLPolicy(agent, enc, name=kind)
    rewarder = PlrlRewarder(_PLRL_FLAVOR[kind], topology, queue_capacity, overflow_penalty)
    return DDQLPolicy(agent, enc, rewarder, name=kind)


def _episode_seed(seed: int, episode: int) -> int:
    # training streams live far away from the small evaluation seeds
    return 1_000_003 * (seed + 1) + episode


def train_agent(kind: str, topology: Topology, apps: Sequence[AppSpec], beta: float,
                sched: TrainSchedule, seed: int = 0, horizon: float = TRAIN_HORIZON,
                **policy_opts) -> tuple[DDQLAgent, TrainingCurve]:
    """Train one RL placement agent on ``horizon``-long episodes at rate ``beta``."""
    agent = make_agent(kind, topology, sched, seed)
    gen = GenConfig(beta)

    def play(episode: int):
        policy = make_rl_policy(kind, agent, topology, **policy_opts)
        return run_episode(topology, apps, gen, policy, horizon, _episode_seed(seed, episode))

    curve = run_training(play, agent)
    log.info("trained %s beta=%g seed=%d: %d train steps, %d episodes",
             kind, beta, seed, agent.train_steps, len(curve.returns))
    return agent, curve


def evaluate(policy_name: str, topology: Topology, apps: Sequence[AppSpec], beta: float,
             horizon: float, seed: int, agent: DDQLAgent | None = None,
             **policy_opts) -> EpisodeResult:
    """One greedy/fixed-policy episode; RL policies need a trained ``agent``."""
    if policy_name in RL_POLICIES:
        if agent is None:
            raise ValueError(f"{policy_name} needs a trained agent")
        agent.mode = "eval"
        policy = make_rl_policy(policy_name, agent, topology, **policy_opts)
    else:
        policy = make_baseline(policy_name, topology, seed)
    return run_episode(topology, apps, GenConfig(beta), policy, horizon, seed)


# -- configuration -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    topology: Topology
    apps: list[AppSpec]
    betas: list[float]
    policies: list[str]
    horizons: list[float]
    seeds: list[int]
    schedule: TrainSchedule
    output: Path
    train_seed: int = 0
    queue_capacity: int = 10
    overflow_penalty: float = 1.0
    topology_source: str = field(default="generated")


_APP_FIELDS = ("id", "category", "fog_instr", "cloud_instr", "req_bytes", "fog_resp_bytes",
               "cloud_agg_bytes", "cloud_resp_bytes", "p_cloud", "p_cloud_feedback")


def _parse_app(raw: dict, errors: list[str]) -> AppSpec | None:
    unknown = set(raw) - set(_APP_FIELDS)
    if unknown:
        errors.append(f"app {raw.get('id')}: unknown fields {sorted(unknown)}")
        return None
    try:
        kw = dict(raw)
        cat = kw["category"]
        kw["category"] = Category[cat.upper()] if isinstance(cat, str) else Category(cat)
        return AppSpec(**kw)
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"app {raw.get('id')}: {exc}")
        return None


def validate_config(path, env: dict | None = None) -> ExperimentConfig:
    """Parse a YAML experiment file and report every violation at once.

    ``FOGBAL_SEEDS`` (comma-separated) and ``FOGBAL_OUTPUT`` in ``env``
    override the file's ``seeds`` and ``output``.
    """
    env = os.environ if env is None else env
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    errors: list[str] = []
    base = path.parent

    apps = default_apps()
    if "apps" in raw:
        parsed = [_parse_app(a, errors) for a in raw["apps"] or []]
        apps = [a for a in parsed if a is not None]
        if not raw["apps"]:
            errors.append("apps must be non-empty")
    errors += check_apps(apps)

    def num_list(key, default, cast=float):
        val = raw.get(key, default)
        if not isinstance(val, list) or not val:
            errors.append(f"{key} must be a non-empty list")
            return []
        try:
            return [cast(v) for v in val]
        except (TypeError, ValueError):
            errors.append(f"{key} entries must be numbers")
            return []

    betas = num_list("betas", [200, 150, 100])
    for b in betas:
        if not b > 0:
            errors.append(f"beta must be positive (got {b:g})")
    horizons = num_list("horizons", [10_000, 100_000])
    for h in horizons:
        if not h > 0:
            errors.append(f"horizon must be positive (got {h:g})")
    seeds = num_list("seeds", [0], int)
    if env.get("FOGBAL_SEEDS"):
        try:
            seeds = [int(s) for s in env["FOGBAL_SEEDS"].split(",")]
        except ValueError:
            errors.append("FOGBAL_SEEDS must be comma-separated integers")
    policies = raw.get("policies", ["random", "rr", "nearest", "fastest", "ddql"])
    if not isinstance(policies, list) or not policies:
        errors.append("policies must be a non-empty list")
        policies = []
    for p in policies:
        if p not in POLICY_NAMES:
            errors.append(f"unknown policy {p!r} (choose from {', '.join(POLICY_NAMES)})")

    sched = None
    sraw = raw.get("schedule", "desk")
    try:
        if isinstance(sraw, str):
            sched = TrainSchedule.preset(sraw)
        elif isinstance(sraw, dict):
            sraw = dict(sraw)
            sched = TrainSchedule.preset(sraw.pop("preset", "desk"), **sraw)
        else:
            errors.append("schedule must be a preset name or a mapping")
    except (TypeError, ValueError) as exc:
        errors.append(f"schedule: {exc}")

    topology = None
    source = "generated"
    traw = raw.get("topology", {})
    ref_bytes = float(np.mean([a.req_bytes for a in apps])) if apps else 2000.0
    if isinstance(traw, str):
        traw = {"file": traw}
    if not isinstance(traw, dict):
        errors.append("topology must be a mapping or a file path")
    elif "file" in traw:
        tpath = Path(traw["file"])
        if not tpath.is_absolute():
            tpath = base / tpath
        source = str(tpath)
        if not tpath.exists():
            errors.append(f"topology file not found: {tpath}")
        else:
            try:
                topology = Topology.load(tpath)
            except ValueError as exc:
                errors.append(f"topology file {tpath}: {exc}")
    else:
        try:
            topology = generate_topology(int(traw.get("nodes", 20)), int(traw.get("clusters", 5)),
                                         int(traw.get("seed", 0)), ref_bytes=ref_bytes)
        except (TypeError, ValueError) as exc:
            errors.append(f"topology: {exc}")

    output = Path(env.get("FOGBAL_OUTPUT") or raw.get("output", "results"))
    if not output.is_absolute():
        output = base / output
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        topology=topology, apps=apps, betas=betas, policies=list(policies),
        horizons=horizons, seeds=seeds, schedule=sched, output=output,
        train_seed=int(raw.get("train_seed", 0)),
        queue_capacity=int(raw.get("queue_capacity", 10)),
        overflow_penalty=float(raw.get("overflow_penalty", 1.0)),
        topology_source=source)


load_config = validate_config


# -- grid --------------------------------------------------------------------------

def run_path(output: Path, policy: str, beta: float, horizon: float, seed: int) -> Path:
    return Path(output) / f"run_{policy}_b{beta:g}_h{horizon:g}_s{seed}.csv"


def run_grid(config: ExperimentConfig) -> Path:
    """Run every (beta, policy, horizon, seed) cell; returns the summary path.

    RL agents are trained once per beta and then only evaluated. A failing
    cell is logged and skipped; if every cell fails a RuntimeError is raised.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    rows, failures, total = [], [], 0
    opts = dict(queue_capacity=config.queue_capacity, overflow_penalty=config.overflow_penalty)
    for beta in config.betas:
        agents: dict[str, DDQLAgent] = {}
        for policy in config.policies:
            if policy in RL_POLICIES:
                try:
                    agent, _ = train_agent(policy, config.topology, config.apps, beta,
                                           config.schedule, config.train_seed, **opts)
                    agent.save(out / f"agent_{policy}_b{beta:g}.ckpt", policy=policy, beta=beta)
                    agents[policy] = agent
                except Exception as exc:  # noqa: BLE001 - recorded, cell skipped
                    log.error("training %s at beta=%g failed: %s", policy, beta, exc)
            for horizon in config.horizons:
                for seed in config.seeds:
                    total += 1
                    try:
                        if policy in RL_POLICIES and policy not in agents:
                            raise RuntimeError("agent training failed")
                        res = evaluate(policy, config.topology, config.apps, beta, horizon, seed,
                                       agents.get(policy), **opts)
                    except Exception as exc:  # noqa: BLE001
                        failures.append((policy, beta, horizon, seed, str(exc)))
                        log.error("cell %s beta=%g horizon=%g seed=%d failed: %s",
                                  policy, beta, horizon, seed, exc)
                        continue
                    export_csv(res.records, run_path(out, policy, beta, horizon, seed))
                    for loop in (FOG_LOOP, CLOUD_LOOP):
                        rows.append(dict(policy=policy, beta=beta, horizon=horizon, seed=seed,
                                         loop=loop,
                                         mean_total_response_ms=mean_loop_delay(res.records, loop),
                                         mean_waiting_ms=mean_waiting(res.records, loop)))
    summary = out / "summary.csv"
    write_summary(rows, summary)
    _write_ci(rows, out / "summary_ci.csv")
    if failures:
        with (out / "failures.txt").open("w") as fh:
            for f in failures:
                fh.write(" ".join(map(str, f)) + "\n")
    if total and len(failures) == total:
        raise RuntimeError(f"all {total} grid cells failed")
    return summary


def _write_ci(rows: list[dict], path: Path) -> None:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["policy"], r["beta"], r["horizon"], r["loop"]), []).append(
            r["mean_total_response_ms"])
    with path.open("w") as fh:
        fh.write("policy,beta,horizon,loop,n_seeds,mean_total_response_ms,ci95_low,ci95_high\n")
        for (policy, beta, horizon, loop), vals in groups.items():
            lo, hi = bootstrap_ci(vals)
            fh.write(f"{policy},{beta:g},{horizon:g},{loop},{len(vals)},"
                     f"{float(np.nanmean(vals)) if vals else float('nan'):.6f},{lo:.6f},{hi:.6f}\n")
