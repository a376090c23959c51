"""Placement interface and the classical baselines.

The engine hands every policy a :class:`DecisionContext`. Only policies that
declare ``privileged = True`` get the per-node load/resource view; for the
others the field is ``None`` so they cannot peek at Fog internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .topology import Topology
from .workload import AppSpec, Category, Workload

__all__ = [
    "PrivilegedView",
    "DecisionContext",
    "PlacementPolicy",
    "RandomPolicy",
    "RoundRobinPolicy",
    "NearestPolicy",
    "FastestPolicy",
    "ElectrePolicy",
]


@dataclass(frozen=True)
class PrivilegedView:
    """Load and resource data that a Fog provider would rather not share."""

    waiting: Mapping[int, int]  # jobs queued (not in service) per Fog node
    backlog_instr: Mapping[int, float]  # queued + remaining in-service instructions
    ipt: Mapping[int, float]


@dataclass(frozen=True)
class DecisionContext:
    workload: Workload
    app: AppSpec
    fog_node_ids: tuple[int, ...]
    now: float
    privileged: PrivilegedView | None = None

    @property
    def cluster(self) -> int:
        return self.workload.source_cluster

    @property
    def category(self) -> Category:
        return self.app.category


class PlacementPolicy:
    """Base class: ``decide`` returns one of ``ctx.fog_node_ids``."""

    name = "base"
    privileged = False

    def decide(self, ctx: DecisionContext, delayed_reward: float) -> int:
        raise NotImplementedError

    def end_episode(self) -> None:
        pass


class RandomPolicy(PlacementPolicy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def decide(self, ctx, delayed_reward):
        return ctx.fog_node_ids[int(self.rng.integers(len(ctx.fog_node_ids)))]


class RoundRobinPolicy(PlacementPolicy):
    """One global cycle shared by all clusters."""

    name = "rr"

    def __init__(self):
        self.counter = 0

    def decide(self, ctx, delayed_reward):
        node = ctx.fog_node_ids[self.counter % len(ctx.fog_node_ids)]
        self.counter += 1
        return node


class NearestPolicy(PlacementPolicy):
    name = "nearest"

    def __init__(self, topology: Topology):
        self.topology = topology
        self._cache: dict[tuple[int, float], int] = {}

    def decide(self, ctx, delayed_reward):
        key = (ctx.cluster, ctx.app.req_bytes)
        node = self._cache.get(key)
        if node is None:
            node = min(ctx.fog_node_ids, key=lambda f: (
                self.topology.transit(ctx.cluster, f, ctx.app.req_bytes), f))
            self._cache[key] = node
        return node


class FastestPolicy(PlacementPolicy):
    """Smallest estimated execution delay: path latency plus compute time.

    With ``use_backlog`` the estimate also charges the instructions already
    queued at each node.
    """

    privileged = True

    def __init__(self, topology: Topology, use_backlog: bool = False):
        self.topology = topology
        self.use_backlog = use_backlog
        self.name = "fastest-backlog" if use_backlog else "fastest"

    def estimate(self, ctx: DecisionContext, node: int) -> float:
        view = ctx.privileged
        if view is None:
            raise ValueError("fastest policy needs the privileged load/resource view")
        ipt = view.ipt[node]
        est = self.topology.transit(ctx.cluster, node, ctx.app.req_bytes) + ctx.app.fog_instr / ipt
        if self.use_backlog:
            est += view.backlog_instr[node] / ipt
        return est

    def decide(self, ctx, delayed_reward):
        return min(ctx.fog_node_ids, key=lambda f: (self.estimate(ctx, f), f))


class ElectrePolicy(PlacementPolicy):
    """Comparison slot for the multi-criteria ELECTRE selector (not provided)."""

    name = "electre"

    def decide(self, ctx, delayed_reward):
        raise NotImplementedError("ELECTRE selection is not part of this package")
