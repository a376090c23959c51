"""Command line entry point: ``fogbal {topo gen|train|eval|bench|validate}``.

Exit codes: 0 on success, 2 for configuration problems (bad flags, invalid
config files, missing inputs), 3 for failures while simulating or training.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .ddql import DDQLAgent
from .harness import (POLICY_NAMES, RL_POLICIES, ConfigError, evaluate, run_grid, train_agent,
                      validate_config)
from .metrics import CLOUD_LOOP, FOG_LOOP, export_csv, mean_loop_delay, mean_waiting
from .topology import generate_topology

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("fogbal")


class _ConfigProblem(Exception):
    pass


def _cmd_topo_gen(args) -> int:
    try:
        topo = generate_topology(args.nodes, args.clusters, args.seed)
    except ValueError as exc:
        raise _ConfigProblem(str(exc)) from exc
    topo.save(args.out)
    print(f"wrote {args.out}: cloud={topo.cloud_id} fog={len(topo.fog_ids)} "
          f"clusters={list(topo.cluster_ids)}")
    return EXIT_OK


def _pick_beta(cfg, beta):
    if beta is not None:
        if beta <= 0:
            raise _ConfigProblem(f"beta must be positive (got {beta:g})")
        return beta
    return min(cfg.betas)


def _cmd_train(args) -> int:
    cfg = validate_config(args.config)
    if args.policy not in RL_POLICIES:
        raise _ConfigProblem(f"train needs an RL policy ({', '.join(RL_POLICIES)})")
    beta = _pick_beta(cfg, args.beta)
    agent, curve = train_agent(args.policy, cfg.topology, cfg.apps, beta, cfg.schedule,
                               args.seed, queue_capacity=cfg.queue_capacity,
                               overflow_penalty=cfg.overflow_penalty)
    agent.save(args.out, policy=args.policy, beta=beta,
               config=Path(args.config).resolve())
    ma = curve.moving_average
    print(f"trained {args.policy} beta={beta:g}: {agent.train_steps} train steps, "
          f"{len(curve.returns)} episodes, final 10-episode mean return "
          f"{ma[-1] if len(ma) else float('nan'):.3f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    agent, meta, policy = None, {}, args.policy
    if args.ckpt:
        if not Path(args.ckpt).exists():
            raise _ConfigProblem(f"checkpoint not found: {args.ckpt}")
        agent, meta = DDQLAgent.load(args.ckpt)
        policy = policy or meta.get("policy", "ddql")
    policy = policy or "ddql"
    if policy in RL_POLICIES and agent is None:
        raise _ConfigProblem(f"{policy} needs --ckpt")
    config = args.config or meta.get("config")
    if not config:
        raise _ConfigProblem("eval needs --config (or a checkpoint that records one)")
    cfg = validate_config(config)
    beta = _pick_beta(cfg, args.beta if args.beta is not None
                      else (float(meta["beta"]) if "beta" in meta else None))
    res = evaluate(policy, cfg.topology, cfg.apps, beta, args.horizon, args.seed, agent,
                   queue_capacity=cfg.queue_capacity, overflow_penalty=cfg.overflow_penalty)
    print(f"policy={policy} beta={beta:g} horizon={args.horizon:g} seed={args.seed} "
          f"decisions={len(res.decisions)} mean_reward={res.mean_reward():.6f}")
    for loop in (FOG_LOOP, CLOUD_LOOP):
        print(f"  {loop}: mean_total_response_ms={mean_loop_delay(res.records, loop):.3f} "
              f"mean_waiting_ms={mean_waiting(res.records, loop):.3f}")
    if args.out:
        export_csv(res.records, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = validate_config(args.config)
    if args.policy:
        cfg.policies = [args.policy]
    summary = run_grid(cfg)
    print(f"wrote {summary}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = validate_config(args.config)
    print(f"ok: {len(cfg.policies)} policies x {len(cfg.betas)} betas x "
          f"{len(cfg.horizons)} horizons x {len(cfg.seeds)} seeds, "
          f"topology {cfg.topology_source} ({len(cfg.topology.nodes)} nodes)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogbal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    topo = sub.add_parser("topo", help="topology utilities")
    tsub = topo.add_subparsers(dest="topo_command", required=True)
    gen = tsub.add_parser("gen", help="generate a scale-free topology file")
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--clusters", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_topo_gen)

    policy_help = "placement policy: " + "|".join(POLICY_NAMES)

    tr = sub.add_parser("train", help="train an RL placement agent")
    tr.add_argument("--config", required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.add_argument("--policy", choices=RL_POLICIES, default="ddql", help=policy_help)
    tr.add_argument("--beta", type=float, help="mean inter-arrival time in ms "
                                               "(default: the config's smallest beta)")
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint or a baseline for one episode")
    ev.add_argument("--ckpt")
    ev.add_argument("--horizon", type=int, choices=(10_000, 100_000), default=10_000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--config")
    ev.add_argument("--policy", choices=POLICY_NAMES, help=policy_help)
    ev.add_argument("--beta", type=float)
    ev.add_argument("--out", help="write the per-workload CSV here")
    ev.set_defaults(func=_cmd_eval)

    be = sub.add_parser("bench", help="run the full experiment grid of a config")
    be.add_argument("--config", required=True)
    be.add_argument("--policy", choices=POLICY_NAMES, help="restrict the grid to one policy")
    be.set_defaults(func=_cmd_bench)

    va = sub.add_parser("validate", help="check a config file and report every problem")
    va.add_argument("--config", required=True)
    va.set_defaults(func=_cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _ConfigProblem as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
