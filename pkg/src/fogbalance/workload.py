"""Distributed applications, workload records and stochastic generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Category",
    "AppSpec",
    "FogOutcome",
    "Workload",
    "GenConfig",
    "default_apps",
    "inverse_exponential",
    "next_interarrival",
    "route_fog_result",
    "check_apps",
]


class Category(IntEnum):
    LIGHT = 0
    MODERATE = 1
    HEAVY = 2


class FogOutcome(Enum):
    DONE = "done"
    TO_CLOUD = "to_cloud"
    TO_CLOUD_FEEDBACK = "to_cloud_feedback"


@dataclass(frozen=True)
class AppSpec:
    """One application: a Fog service plus a probabilistic Cloud aggregation."""

    id: int
    category: Category
    fog_instr: float
    cloud_instr: float
    req_bytes: float
    fog_resp_bytes: float
    cloud_agg_bytes: float
    cloud_resp_bytes: float
    p_cloud: float = 0.10
    p_cloud_feedback: float = 0.50

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        for name in ("p_cloud", "p_cloud_feedback"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"app {self.id}: {name}={p} outside [0, 1]")
        if not self.fog_instr > 0:
            raise ValueError(f"app {self.id}: fog_instr must be positive")
        if self.cloud_instr < 0:
            raise ValueError(f"app {self.id}: cloud_instr must be >= 0")
        for name in ("req_bytes", "fog_resp_bytes", "cloud_agg_bytes", "cloud_resp_bytes"):
            if getattr(self, name) < 0:
                raise ValueError(f"app {self.id}: {name} must be >= 0")


def default_apps() -> list[AppSpec]:
    # placeholder magnitudes; the real values are not published
    return [
        AppSpec(0, Category.LIGHT, 1_000, 2_000, 500, 500, 1_000, 500),
        AppSpec(1, Category.MODERATE, 5_000, 5_000, 1_500, 500, 2_000, 500),
        AppSpec(2, Category.HEAVY, 20_000, 10_000, 4_000, 1_000, 5_000, 1_000),
    ]


def check_apps(apps: Sequence[AppSpec]) -> list[str]:
    """Return every violation of the per-category instruction ordering."""
    errors = []
    ids = [a.id for a in apps]
    if len(set(ids)) != len(ids):
        errors.append("app ids must be unique")
    by_cat: dict[Category, list[float]] = {}
    for a in apps:
        by_cat.setdefault(a.category, []).append(a.fog_instr)
    cats = sorted(by_cat)
    for lo, hi in zip(cats, cats[1:]):
        if max(by_cat[lo]) >= min(by_cat[hi]):
            errors.append(f"fog_instr ordering violated: {lo.name} >= {hi.name}")
    return errors


@dataclass
class Workload:
    """A single request and the timestamps of its lifecycle (ms)."""

    uid: int
    app: int
    source_cluster: int
    created_at: float
    outcome: FogOutcome = FogOutcome.DONE
    assigned_node: int | None = None
    arrive: float | None = None
    service_start: float | None = None
    service_end: float | None = None
    feedback_arrive: float | None = None
    cloud_arrive: float | None = None
    cloud_start: float | None = None
    cloud_end: float | None = None
    cloud_feedback_arrive: float | None = None

    @property
    def emit(self) -> float:
        return self.created_at


@dataclass
class GenConfig:
    """Arrival process settings.

    ``beta`` is the exponential scale of each generator's inter-arrival time.
    Each cluster runs one generator per application; ``mix`` optionally
    gives a per-cluster probability vector over applications, in which case
    app ``k`` fires at ``mix[k] * n_apps / beta`` (uniform mix == plain beta).
    """

    beta: float
    mix: Mapping[int, Sequence[float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        for cluster, probs in self.mix.items():
            if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
                raise ValueError(f"mix for cluster {cluster} must be a probability vector")

    def scale(self, cluster: int, app_index: int, n_apps: int) -> float | None:
        probs = self.mix.get(cluster)
        if probs is None:
            return self.beta
        w = probs[app_index] * n_apps
        return None if w == 0 else self.beta / w


def inverse_exponential(u: float, beta: float) -> float:
    """Exponential(scale=beta) quantile at uniform draw ``u``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return -beta * math.log(u)


def next_interarrival(rng: np.random.Generator, beta: float) -> float:
    if not beta > 0:
        raise ValueError("beta must be positive")
    while True:
        u = 1.0 - rng.random()  # (0, 1]
        dt = -beta * math.log(u)
        if dt > 0:
            return dt


def route_fog_result(rng: np.random.Generator, app: AppSpec) -> FogOutcome:
    # both draws are always taken so the stream position does not depend on the outcome
    u_cloud, u_back = rng.random(2)
    if u_cloud >= app.p_cloud:
        return FogOutcome.DONE
    if u_back < app.p_cloud_feedback:
        return FogOutcome.TO_CLOUD_FEEDBACK
    return FogOutcome.TO_CLOUD
