"""Per-workload delay records, loop aggregates and CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .workload import Category, Workload

__all__ = [
    "FOG_LOOP",
    "CLOUD_LOOP",
    "DelayRecord",
    "DistributionMatrix",
    "record_delays",
    "cloud_loop_record",
    "mean_loop_delay",
    "mean_waiting",
    "export_csv",
    "read_csv",
    "distribution_matrix",
    "bootstrap_ci",
    "SUMMARY_COLUMNS",
    "write_summary",
]

FOG_LOOP = "FogLoop"
CLOUD_LOOP = "CloudLoop"

CSV_COLUMNS = ("uid", "app", "category", "cluster", "node", "loop", "latency_ms",
               "waiting_ms", "service_ms", "response_ms", "total_response_ms")
SUMMARY_COLUMNS = ("policy", "beta", "horizon", "seed", "loop",
                   "mean_total_response_ms", "mean_waiting_ms")


@dataclass(frozen=True)
class DelayRecord:
    uid: int
    app: int
    category: str
    cluster: int
    node: int
    loop: str
    latency_ms: float
    waiting_ms: float
    service_ms: float
    response_ms: float
    total_response_ms: float


def _need(w: Workload, *names: str) -> None:
    missing = [n for n in names if getattr(w, n) is None]
    if missing:
        raise ValueError(f"workload {w.uid} lacks timestamps: {', '.join(missing)}")


def record_delays(w: Workload, category: Category | str = "") -> DelayRecord:
    """Fog-loop record: network latency in, queueing, service and the way back.

    ``total_response`` adds the return leg when the feedback arrival is known.
    """
    _need(w, "arrive", "service_start", "service_end")
    latency = w.arrive - w.emit
    waiting = w.service_start - w.arrive
    service = w.service_end - w.service_start
    back = 0.0 if w.feedback_arrive is None else w.feedback_arrive - w.service_end
    return DelayRecord(w.uid, w.app, _cat_name(category), w.source_cluster,
                       -1 if w.assigned_node is None else w.assigned_node, FOG_LOOP,
                       latency, waiting, service, waiting + service,
                       latency + waiting + service + back)


def cloud_loop_record(w: Workload, category: Category | str = "") -> DelayRecord:
    """IoT -> Fog -> Cloud (-> IoT) record; delays of both compute stops are summed."""
    _need(w, "arrive", "service_start", "service_end", "cloud_arrive", "cloud_start", "cloud_end")
    latency = (w.arrive - w.emit) + (w.cloud_arrive - w.service_end)
    waiting = (w.service_start - w.arrive) + (w.cloud_start - w.cloud_arrive)
    service = (w.service_end - w.service_start) + (w.cloud_end - w.cloud_start)
    end = w.cloud_end if w.cloud_feedback_arrive is None else w.cloud_feedback_arrive
    if w.cloud_feedback_arrive is not None:
        latency += w.cloud_feedback_arrive - w.cloud_end
    return DelayRecord(w.uid, w.app, _cat_name(category), w.source_cluster,
                       -1 if w.assigned_node is None else w.assigned_node, CLOUD_LOOP,
                       latency, waiting, service, waiting + service, end - w.emit)


def _cat_name(category) -> str:
    if isinstance(category, Category):
        return category.name.lower()
    return str(category)


def _select(records: Iterable[DelayRecord], loop: str | None) -> list[DelayRecord]:
    return [r for r in records if loop is None or r.loop == loop]


def mean_loop_delay(records: Iterable[DelayRecord], loop: str = FOG_LOOP) -> float:
    """Mean total response over one loop's records (nan when there are none)."""
    sel = _select(records, loop)
    if not sel:
        return float("nan")
    return float(np.mean([r.total_response_ms for r in sel]))


def mean_waiting(records: Iterable[DelayRecord], loop: str | None = FOG_LOOP,
                 category: str | None = None) -> float:
    sel = [r for r in _select(records, loop) if category is None or r.category == category]
    if not sel:
        return float("nan")
    return float(np.mean([r.waiting_ms for r in sel]))


def export_csv(records: Iterable[DelayRecord], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            fh.write(f"{r.uid},{r.app},{r.category},{r.cluster},{r.node},{r.loop},"
                     f"{r.latency_ms:.6f},{r.waiting_ms:.6f},{r.service_ms:.6f},"
                     f"{r.response_ms:.6f},{r.total_response_ms:.6f}\n")


def read_csv(path) -> list[DelayRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(DelayRecord(
                int(row["uid"]), int(row["app"]), row["category"], int(row["cluster"]),
                int(row["node"]), row["loop"],
                *(float(row[f.name]) for f in fields(DelayRecord)[6:])))
    return out


@dataclass
class DistributionMatrix:
    """Assigned-workload counts indexed ``[app, cluster, fog node]``."""

    app_ids: tuple[int, ...]
    cluster_ids: tuple[int, ...]
    node_ids: tuple[int, ...]
    counts: np.ndarray

    def row(self, app: int, cluster: int) -> np.ndarray:
        return self.counts[self.app_ids.index(app), self.cluster_ids.index(cluster)]


def distribution_matrix(records: Iterable[DelayRecord], app_ids: Sequence[int],
                        cluster_ids: Sequence[int], node_ids: Sequence[int]) -> DistributionMatrix:
    app_ids, cluster_ids, node_ids = tuple(app_ids), tuple(cluster_ids), tuple(node_ids)
    ai = {a: i for i, a in enumerate(app_ids)}
    ci = {c: i for i, c in enumerate(cluster_ids)}
    ni = {n: i for i, n in enumerate(node_ids)}
    counts = np.zeros((len(app_ids), len(cluster_ids), len(node_ids)), dtype=np.int64)
    for r in records:
        if r.loop == FOG_LOOP:
            counts[ai[r.app], ci[r.cluster], ni[r.node]] += 1
    return DistributionMatrix(app_ids, cluster_ids, node_ids, counts)


def bootstrap_ci(values: Sequence[float], level: float = 0.95, n_boot: int = 2000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), float(x[0])
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def write_summary(rows: Iterable[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(f"{row['policy']},{row['beta']:g},{row['horizon']:g},{row['seed']},{row['loop']},"
                     f"{row['mean_total_response_ms']:.6f},{row['mean_waiting_ms']:.6f}\n")
