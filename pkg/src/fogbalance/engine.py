"""Discrete-event engine for the fog network.

Events sit in a heap keyed by ``(time, seq)``; ``seq`` grows with every
insertion so simultaneous events run in the order they were scheduled.
Every Fog and Cloud node is a single FIFO server. A decision step happens
on each workload generation: the policy sees the reward for its previous
placement and the current context, and returns the Fog node to use.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .metrics import DelayRecord, cloud_loop_record, record_delays
from .policies import DecisionContext, PlacementPolicy, PrivilegedView
from .topology import Topology
from .workload import AppSpec, FogOutcome, GenConfig, Workload, check_apps, \
    next_interarrival, route_fog_result

__all__ = ["EventKind", "NodeQueue", "Decision", "EpisodeResult", "Engine", "run_episode"]

FOG, CLOUD = 0, 1  # service stage of a job


class EventKind(IntEnum):
    GENERATE = 0
    ARRIVE = 1
    SERVICE_START = 2
    SERVICE_END = 3
    FEEDBACK_ARRIVE = 4
    EPISODE_END = 5


class NodeQueue:
    """Single-server FIFO queue of one compute node."""

    __slots__ = ("node", "ipt", "waiting", "in_service", "start_pending", "queued_instr")

    def __init__(self, node: int, ipt: float):
        self.node = node
        self.ipt = ipt
        self.waiting: deque[tuple[int, int, float]] = deque()  # (uid, stage, instr)
        self.in_service: tuple[int, int, float, float] | None = None  # (uid, stage, instr, end)
        self.start_pending = False
        self.queued_instr = 0.0

    def backlog_instr(self, now: float) -> float:
        rest = 0.0
        if self.in_service is not None:
            rest = max(self.in_service[3] - now, 0.0) * self.ipt
        return self.queued_instr + rest


@dataclass(frozen=True)
class Decision:
    time: float
    uid: int
    cluster: int
    app: int
    node: int
    reward: float
    total_waiting: int


@dataclass
class EpisodeResult:
    horizon: float
    seed: int
    records: list[DelayRecord]
    decisions: list[Decision]
    census: dict[int, int]  # waiting jobs per compute node at the end
    counts: dict[str, int] = field(default_factory=dict)
    workloads: list[Workload] = field(default_factory=list, repr=False)

    @property
    def rewards(self) -> list[float]:
        return [d.reward for d in self.decisions]

    @property
    def census_log(self) -> list[int]:
        return [d.total_waiting for d in self.decisions]

    def mean_reward(self) -> float:
        """Mean reward per decision step (nan without decisions)."""
        if not self.decisions:
            return float("nan")
        return sum(self.rewards) / len(self.decisions)


class Engine:
    def __init__(self, topology: Topology, apps: Sequence[AppSpec], gen_config: GenConfig,
                 policy: PlacementPolicy, horizon: float, seed: int, *,
                 drain: bool = False, check: bool = False,
                 arrivals: Sequence[tuple[float, int, int]] | None = None):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        errors = check_apps(apps)
        if errors:
            raise ValueError("; ".join(errors))
        self.topology = topology
        self.apps = list(apps)
        self.apps_by_id = {a.id: a for a in self.apps}
        self.gen_config = gen_config
        self.policy = policy
        self.horizon = float(horizon)
        self.seed = seed
        self.drain = drain
        self.check = check
        # explicit (time, cluster, app id) arrivals replace the random generators
        self.arrivals = None if arrivals is None else sorted(arrivals, key=lambda t: t[0])

        self.fog_ids = topology.fog_ids
        self._fog_set = frozenset(self.fog_ids)
        self.queues = {n: NodeQueue(n, topology.node(n).ipt)
                       for n in (topology.cloud_id,) + self.fog_ids}

        gen_seq, outcome_seq = np.random.SeedSequence(seed).spawn(2)
        self._generators = [(c, k) for c in topology.cluster_ids for k in range(len(self.apps))]
        self._gen_rngs = [np.random.default_rng(s) for s in gen_seq.spawn(len(self._generators))]
        self._outcome_rng = np.random.default_rng(outcome_seq)

        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.workloads: list[Workload] = []
        self.records: list[DelayRecord] = []
        self.decisions: list[Decision] = []
        self._prev_total: int | None = None
        self.counts = dict(generated=0, fog_in_transit=0, fog_completed=0, forwarded=0,
                           cloud_in_transit=0, cloud_completed=0, feedback_in_transit=0,
                           fog_loops=0, cloud_loops=0)

    # -- bookkeeping ---------------------------------------------------

    def _push(self, time: float, kind: EventKind, a=None, b=None):
        heapq.heappush(self._heap, (time, self._seq, kind, a, b))
        self._seq += 1

    def total_waiting(self) -> int:
        """Jobs waiting (not in service) over the Cloud and all Fog nodes."""
        return sum(len(q.waiting) for q in self.queues.values())

    def census(self) -> dict[str, int]:
        fog_wait = fog_busy = cloud_wait = cloud_busy = 0
        for q in self.queues.values():
            for _, stage, _ in q.waiting:
                if stage == FOG:
                    fog_wait += 1
                else:
                    cloud_wait += 1
            if q.in_service is not None:
                if q.in_service[1] == FOG:
                    fog_busy += 1
                else:
                    cloud_busy += 1
        out = dict(self.counts)
        out.update(fog_waiting=fog_wait, fog_in_service=fog_busy,
                   cloud_waiting=cloud_wait, cloud_in_service=cloud_busy)
        return out

    def _check_conservation(self):
        c = self.census()
        fog_side = c["fog_in_transit"] + c["fog_waiting"] + c["fog_in_service"] + c["fog_completed"]
        cloud_side = (c["cloud_in_transit"] + c["cloud_waiting"] + c["cloud_in_service"]
                      + c["cloud_completed"])
        if fog_side != c["generated"] or cloud_side != c["forwarded"]:
            raise AssertionError(f"conservation violated at t={self.now}: {c}")

    def _privileged_view(self) -> PrivilegedView:
        now = self.now
        qs = self.queues
        return PrivilegedView(
            waiting={f: len(qs[f].waiting) for f in self.fog_ids},
            backlog_instr={f: qs[f].backlog_instr(now) for f in self.fog_ids},
            ipt={f: qs[f].ipt for f in self.fog_ids},
        )

    # -- event handlers ------------------------------------------------

    def _generate(self, gen_index: int | None, cluster: int | None = None, app_id: int | None = None):
        if gen_index is None:
            app = self.apps_by_id[app_id]
        else:
            cluster, k = self._generators[gen_index]
            app = self.apps[k]
        w = Workload(uid=len(self.workloads), app=app.id, source_cluster=cluster,
                     created_at=self.now, outcome=route_fog_result(self._outcome_rng, app))
        self.workloads.append(w)
        self.counts["generated"] += 1

        total = self.total_waiting()
        reward = 0.0 if self._prev_total is None else float(self._prev_total - total)
        self._prev_total = total
        view = self._privileged_view() if self.policy.privileged else None
        ctx = DecisionContext(w, app, self.fog_ids, self.now, view)
        node = self.policy.decide(ctx, reward)
        if node not in self._fog_set:
            raise ValueError(f"policy {self.policy.name!r} returned non-Fog node {node!r}")
        w.assigned_node = node
        self.decisions.append(Decision(self.now, w.uid, cluster, app.id, node, reward, total))

        self.counts["fog_in_transit"] += 1
        self._push(self.now + self.topology.transit(cluster, node, app.req_bytes),
                   EventKind.ARRIVE, w.uid, (node, FOG))
        if gen_index is not None:
            self._schedule_generate(gen_index)

    def _schedule_generate(self, gen_index: int):
        cluster, k = self._generators[gen_index]
        beta = self.gen_config.scale(cluster, k, len(self.apps))
        if beta is None:
            return
        t = self.now + next_interarrival(self._gen_rngs[gen_index], beta)
        if t < self.horizon:
            self._push(t, EventKind.GENERATE, gen_index)

    def _arrive(self, uid: int, node: int, stage: int):
        w = self.workloads[uid]
        app = self.apps_by_id[w.app]
        if stage == FOG:
            w.arrive = self.now
            self.counts["fog_in_transit"] -= 1
            instr = app.fog_instr
        else:
            w.cloud_arrive = self.now
            self.counts["cloud_in_transit"] -= 1
            instr = app.cloud_instr
        q = self.queues[node]
        q.waiting.append((uid, stage, instr))
        q.queued_instr += instr
        if q.in_service is None and not q.start_pending:
            q.start_pending = True
            self._push(self.now, EventKind.SERVICE_START, node)

    def _service_start(self, node: int):
        q = self.queues[node]
        q.start_pending = False
        if q.in_service is not None or not q.waiting:
            return
        uid, stage, instr = q.waiting.popleft()
        q.queued_instr -= instr
        if not q.waiting:
            q.queued_instr = 0.0  # drop float residue
        end = self.now + instr / q.ipt
        q.in_service = (uid, stage, instr, end)
        w = self.workloads[uid]
        if stage == FOG:
            w.service_start = self.now
        else:
            w.cloud_start = self.now
        self._push(end, EventKind.SERVICE_END, node)

    def _service_end(self, node: int):
        q = self.queues[node]
        uid, stage, _, _ = q.in_service
        q.in_service = None
        w = self.workloads[uid]
        app = self.apps_by_id[w.app]
        top = self.topology
        if stage == FOG:
            w.service_end = self.now
            self.counts["fog_completed"] += 1
            self.counts["feedback_in_transit"] += 1
            self._push(self.now + top.transit(node, w.source_cluster, app.fog_resp_bytes),
                       EventKind.FEEDBACK_ARRIVE, uid, FOG)
            if w.outcome is not FogOutcome.DONE:
                self.counts["forwarded"] += 1
                self.counts["cloud_in_transit"] += 1
                cloud = top.cloud_id
                self._push(self.now + top.transit(node, cloud, app.cloud_agg_bytes),
                           EventKind.ARRIVE, uid, (cloud, CLOUD))
        else:
            w.cloud_end = self.now
            self.counts["cloud_completed"] += 1
            if w.outcome is FogOutcome.TO_CLOUD_FEEDBACK:
                self.counts["feedback_in_transit"] += 1
                self._push(self.now + top.transit(node, w.source_cluster, app.cloud_resp_bytes),
                           EventKind.FEEDBACK_ARRIVE, uid, CLOUD)
            else:
                self.records.append(cloud_loop_record(w, app.category))
                self.counts["cloud_loops"] += 1
        if q.waiting and not q.start_pending:
            q.start_pending = True
            self._push(self.now, EventKind.SERVICE_START, node)

    def _feedback(self, uid: int, stage: int):
        w = self.workloads[uid]
        app = self.apps_by_id[w.app]
        self.counts["feedback_in_transit"] -= 1
        if stage == FOG:
            w.feedback_arrive = self.now
            self.records.append(record_delays(w, app.category))
            self.counts["fog_loops"] += 1
        else:
            w.cloud_feedback_arrive = self.now
            self.records.append(cloud_loop_record(w, app.category))
            self.counts["cloud_loops"] += 1

    # -- main loop -----------------------------------------------------

    def run(self) -> EpisodeResult:
        self._push(self.horizon, EventKind.EPISODE_END)
        if self.arrivals is None:
            for i in range(len(self._generators)):
                self._schedule_generate(i)
        else:
            for t, cluster, app_id in self.arrivals:
                if t < self.horizon:
                    self._push(float(t), EventKind.GENERATE, None, (cluster, app_id))
        generating = True
        heap = self._heap
        while heap:
            time, _, kind, a, b = heapq.heappop(heap)
            if time < self.now:
                raise AssertionError(f"event at {time} precedes clock {self.now}")
            self.now = time
            if kind == EventKind.EPISODE_END:
                if not self.drain:
                    break
                generating = False
                continue
            if kind == EventKind.GENERATE:
                if generating:
                    if a is None:
                        self._generate(None, *b)
                    else:
                        self._generate(a)
            elif kind == EventKind.ARRIVE:
                self._arrive(a, b[0], b[1])
            elif kind == EventKind.SERVICE_START:
                self._service_start(a)
            elif kind == EventKind.SERVICE_END:
                self._service_end(a)
            elif kind == EventKind.FEEDBACK_ARRIVE:
                self._feedback(a, b)
            if self.check:
                self._check_conservation()
        self.policy.end_episode()
        return EpisodeResult(
            horizon=self.horizon, seed=self.seed, records=self.records,
            decisions=self.decisions,
            census={n: len(q.waiting) for n, q in self.queues.items()},
            counts=self.census(), workloads=self.workloads)


def run_episode(topology: Topology, apps: Sequence[AppSpec], gen_config: GenConfig,
                policy: PlacementPolicy, horizon: float, seed: int, **kwargs) -> EpisodeResult:
    """Simulate one episode of ``horizon`` ms; see :class:`Engine` for options."""
    return Engine(topology, apps, gen_config, policy, horizon, seed, **kwargs).run()
