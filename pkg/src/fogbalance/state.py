"""State and reward construction for the RL placement agents.

The privacy-aware encoder sees only the requesting cluster, the workload
category and its own recent assignment history; its reward is the drop in
the number of queued jobs system-wide. The privacy-lacking encoders read
per-node queue lengths and node speeds from the privileged view.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .policies import DecisionContext
from .topology import Topology

__all__ = [
    "dist_update",
    "ParlEncoder",
    "PlrlEncoder",
    "parl_reward",
    "plrl_reward",
    "edql_reward",
    "RunningMinMax",
    "PlrlRewarder",
    "PLRL_FLAVORS",
]

PLRL_FLAVORS = ("ED", "QL", "EDQL")
_FLUSH = float(np.finfo(np.float32).tiny)


def dist_update(d: np.ndarray, action: int | None, cluster: int, category: int) -> np.ndarray:
    """Vanishing-normalized load distribution update.

    With no previous action the distribution restarts at zeros. Otherwise
    the ``(action, cluster, category)`` cell gains 1 and the whole tensor is
    divided by its new sum, so an assignment made k decisions ago weighs
    2**-k relative to the total. Weights that fall below the smallest normal
    float32 are flushed to zero: the network runs in float32 and subnormal
    inputs slow its matrix products by orders of magnitude.
    """
    if action is None:
        return np.zeros_like(d)
    n_a, n_c, n_w = d.shape
    if not (0 <= action < n_a and 0 <= cluster < n_c and 0 <= category < n_w):
        raise IndexError(f"index ({action}, {cluster}, {category}) outside {d.shape}")
    out = d.copy()
    out[action, cluster, category] += 1.0
    out /= out.sum()
    out[out < _FLUSH] = 0.0
    return out


def parl_reward(prev_total_waiting: int, curr_total_waiting: int) -> float:
    if prev_total_waiting < 0 or curr_total_waiting < 0:
        raise ValueError("queue totals must be >= 0")
    return float(prev_total_waiting - curr_total_waiting)


class ParlEncoder:
    """``[cluster one-hot | category one-hot | distribution (a, c, w) row-major]``."""

    def __init__(self, fog_ids: Sequence[int], cluster_ids: Sequence[int], n_categories: int = 3):
        self.fog_ids = tuple(fog_ids)
        self.cluster_ids = tuple(cluster_ids)
        self.n_categories = n_categories
        self._fog_index = {f: i for i, f in enumerate(self.fog_ids)}
        self._cluster_index = {c: i for i, c in enumerate(self.cluster_ids)}
        self.reset()

    @property
    def n_actions(self) -> int:
        return len(self.fog_ids)

    @property
    def dim(self) -> int:
        n_c, n_w = len(self.cluster_ids), self.n_categories
        return n_c + n_w + self.n_actions * n_c * n_w

    def reset(self):
        self.d = np.zeros((self.n_actions, len(self.cluster_ids), self.n_categories))
        self._last: tuple[int, int] | None = None
        self._last_action: int | None = None

    def encode(self, ctx: DecisionContext) -> np.ndarray:
        if self._last is not None and self._last_action is not None:
            self.d = dist_update(self.d, self._last_action, *self._last)
        c = self._cluster_index[ctx.cluster]
        w = int(ctx.category)
        self._last = (c, w)
        self._last_action = None
        n_c, n_w = len(self.cluster_ids), self.n_categories
        s = np.zeros(self.dim, dtype=np.float32)
        s[c] = 1.0
        s[n_c + w] = 1.0
        s[n_c + n_w:] = self.d.ravel()
        return s

    def action_index(self, node: int) -> int:
        return self._fog_index[node]

    def commit(self, action: int):
        self._last_action = action


class PlrlEncoder:
    """``[cluster one-hot | waiting jobs per Fog node]`` from the privileged view."""

    def __init__(self, fog_ids: Sequence[int], cluster_ids: Sequence[int]):
        self.fog_ids = tuple(fog_ids)
        self.cluster_ids = tuple(cluster_ids)
        self._cluster_index = {c: i for i, c in enumerate(self.cluster_ids)}

    @property
    def n_actions(self) -> int:
        return len(self.fog_ids)

    @property
    def dim(self) -> int:
        return len(self.cluster_ids) + len(self.fog_ids)

    def reset(self):
        pass

    def encode(self, ctx: DecisionContext) -> np.ndarray:
        view = ctx.privileged
        if view is None:
            raise ValueError("privacy-lacking state needs the privileged view")
        s = np.zeros(self.dim, dtype=np.float32)
        s[self._cluster_index[ctx.cluster]] = 1.0
        n_c = len(self.cluster_ids)
        for i, f in enumerate(self.fog_ids):
            s[n_c + i] = view.waiting[f]
        return s

    def commit(self, action: int):
        pass


class RunningMinMax:
    """Min-max scaling against the extremes seen so far."""

    def __init__(self):
        self.lo = np.inf
        self.hi = -np.inf

    def reset(self):
        self.lo, self.hi = np.inf, -np.inf

    def __call__(self, x: float) -> float:
        self.lo = min(self.lo, x)
        self.hi = max(self.hi, x)
        if self.hi <= self.lo:
            return 0.0
        return (x - self.lo) / (self.hi - self.lo)


def edql_reward(ed_norm: float, ql_norm: float, overflow: bool, penalty: float = 1.0) -> float:
    return -(ed_norm + ql_norm) - (penalty if overflow else 0.0)


def plrl_reward(flavor: str, exec_delay_ms: float, queue_len: int, overflow: bool = False, *,
                ed_scale: RunningMinMax | None = None, ql_scale: RunningMinMax | None = None,
                overflow_penalty: float = 1.0) -> float:
    if exec_delay_ms < 0 or queue_len < 0:
        raise ValueError("execution delay and queue length must be >= 0")
    if flavor == "ED":
        return -float(exec_delay_ms)
    if flavor == "QL":
        return -float(queue_len)
    if flavor == "EDQL":
        ed = ed_scale(exec_delay_ms) if ed_scale is not None else exec_delay_ms
        ql = ql_scale(queue_len) if ql_scale is not None else queue_len
        return edql_reward(ed, ql, overflow, overflow_penalty)
    raise ValueError(f"unknown PLRL flavor {flavor!r}")


class PlrlRewarder:
    """Reward for the previous placement from resource/load information.

    ED is the previous task's latency plus compute time on the chosen node;
    QL is the current waiting count at that node; overflow flags a queue at
    or above ``capacity``. EDQL scales both terms by running min-max over
    the episode.
    """

    def __init__(self, flavor: str, topology: Topology, capacity: int = 10,
                 overflow_penalty: float = 1.0):
        if flavor not in PLRL_FLAVORS:
            raise ValueError(f"unknown PLRL flavor {flavor!r}")
        self.flavor = flavor
        self.topology = topology
        self.capacity = capacity
        self.overflow_penalty = overflow_penalty
        self.ed_scale = RunningMinMax()
        self.ql_scale = RunningMinMax()
        self.reset()

    def reset(self):
        self._prev: tuple[int, float] | None = None
        self.ed_scale.reset()
        self.ql_scale.reset()

    def reward(self, ctx: DecisionContext) -> float:
        if self._prev is None:
            return 0.0
        node, ed = self._prev
        ql = ctx.privileged.waiting[node]
        return plrl_reward(self.flavor, ed, ql, ql >= self.capacity,
                           ed_scale=self.ed_scale, ql_scale=self.ql_scale,
                           overflow_penalty=self.overflow_penalty)

    def commit(self, ctx: DecisionContext, node: int):
        ed = (self.topology.transit(ctx.cluster, node, ctx.app.req_bytes)
              + ctx.app.fog_instr / ctx.privileged.ipt[node])
        self._prev = (node, ed)
