"""Flat fog network: nodes, links, role assignment and fastest-path routing.

Roles come from betweenness centrality. The most central node hosts the
Cloud, the least central nodes become IoT source clusters and the rest are
Fog nodes. Fog compute speed is assigned inversely to centrality so the
periphery holds the strongest nodes, giving an unbalanced resource layout.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

__all__ = [
    "Role",
    "Node",
    "Link",
    "Route",
    "Topology",
    "TopologyError",
    "betweenness",
    "fastest_path",
    "generate_topology",
    "DEFAULT_FOG_TIERS",
    "DEFAULT_CLOUD_IPT",
]

DEFAULT_FOG_TIERS = (400.0, 200.0, 100.0)  # instr/ms, strongest tier first
DEFAULT_CLOUD_IPT = 1000.0
DEFAULT_BW_TIERS = (2000.0, 5000.0, 10000.0)  # bytes/ms
DEFAULT_PR_RANGE = (1, 5)  # ms, inclusive
DEFAULT_REF_BYTES = 2000.0


class TopologyError(ValueError):
    """Invalid or unroutable topology."""


class Role(str, Enum):
    CLOUD = "cloud"
    FOG = "fog"
    IOT = "iot"


@dataclass(frozen=True)
class Node:
    id: int
    role: Role
    ipt: float  # instructions per ms
    ram: float = 0.0  # MB, metadata only


@dataclass(frozen=True)
class Link:
    u: int
    v: int
    bw: float  # bytes per ms
    pr: float  # propagation delay, ms

    def delay(self, msg_bytes: float) -> float:
        return msg_bytes / self.bw + self.pr


@dataclass(frozen=True)
class Route:
    path: tuple[int, ...]
    links: tuple[Link, ...]

    def latency(self, msg_bytes: float) -> float:
        total = 0.0
        for link in self.links:
            total += msg_bytes / link.bw + link.pr
        return total


def betweenness(graph: Mapping[int, Iterable[int]]) -> dict[int, float]:
    """Unnormalized undirected shortest-path betweenness (Brandes accumulation).

    ``graph`` maps each node to its neighbours. Every unordered pair of
    endpoints contributes once, so the centre of a 3-leaf star scores 3.
    """
    adj = {v: sorted(set(nbrs)) for v, nbrs in graph.items()}
    nodes = sorted(adj)
    if not nodes:
        return {}
    if not _is_connected(adj):
        raise TopologyError("betweenness requires a connected graph")
    cb = dict.fromkeys(nodes, 0.0)
    for s in nodes:
        stack = []
        preds: dict[int, list[int]] = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        sigma[s] = 1
        dist = dict.fromkeys(nodes, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    # each unordered pair was counted from both ends
    return {v: c / 2.0 for v, c in cb.items()}


def _is_connected(adj: Mapping[int, Sequence[int]]) -> bool:
    start = next(iter(adj))
    seen = {start}
    todo = [start]
    while todo:
        v = todo.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return len(seen) == len(adj)


class Topology:
    """Immutable node/link graph with precomputed fastest routes.

    Routes are computed once per ordered node pair for ``ref_bytes`` and then
    reused for every message regardless of its size.
    """

    def __init__(self, nodes: Sequence[Node], links: Sequence[Link],
                 ref_bytes: float = DEFAULT_REF_BYTES):
        self.nodes: tuple[Node, ...] = tuple(sorted(nodes, key=lambda n: n.id))
        self.links: tuple[Link, ...] = tuple(links)
        self.ref_bytes = float(ref_bytes)
        self._by_id = {n.id: n for n in self.nodes}
        self._validate()
        self._adj: dict[int, list[tuple[int, Link]]] = {n.id: [] for n in self.nodes}
        for link in self.links:
            self._adj[link.u].append((link.v, link))
            self._adj[link.v].append((link.u, link))
        for nbrs in self._adj.values():
            nbrs.sort(key=lambda t: t[0])
        self.cloud_id = next(n.id for n in self.nodes if n.role is Role.CLOUD)
        self.fog_ids = tuple(n.id for n in self.nodes if n.role is Role.FOG)
        self.cluster_ids = tuple(n.id for n in self.nodes if n.role is Role.IOT)
        self._routes: dict[tuple[int, int], Route] = {}
        self._transit_cache: dict[tuple[int, int, float], float] = {}
        for src in self._by_id:
            for dst in self._by_id:
                if src != dst:
                    path, _ = self._dijkstra(src, dst, self.ref_bytes)
                    self._routes[src, dst] = self._route_from_path(path)

    def _validate(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        roles = [n.role for n in self.nodes]
        if roles.count(Role.CLOUD) != 1:
            raise TopologyError("topology needs exactly one Cloud node")
        if Role.FOG not in roles or Role.IOT not in roles:
            raise TopologyError("topology needs at least one Fog node and one IoT cluster")
        for n in self.nodes:
            if n.role is not Role.IOT and not n.ipt > 0:
                raise TopologyError(f"node {n.id}: ipt must be positive")
        seen = set()
        for link in self.links:
            if link.u == link.v:
                raise TopologyError(f"self-loop on node {link.u}")
            if link.u not in self._by_id or link.v not in self._by_id:
                raise TopologyError(f"link {link.u}-{link.v} references unknown node")
            if not link.bw > 0 or link.pr < 0:
                raise TopologyError(f"link {link.u}-{link.v}: need bw > 0 and pr >= 0")
            key = frozenset((link.u, link.v))
            if key in seen:
                raise TopologyError(f"duplicate link {link.u}-{link.v}")
            seen.add(key)
        adj = {i: [] for i in ids}
        for link in self.links:
            adj[link.u].append(link.v)
            adj[link.v].append(link.u)
        if not _is_connected(adj):
            raise TopologyError("topology graph is not connected")

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def neighbours(self, node_id: int) -> list[int]:
        return [v for v, _ in self._adj[node_id]]

    def adjacency(self) -> dict[int, list[int]]:
        return {v: [w for w, _ in nbrs] for v, nbrs in self._adj.items()}

    def route(self, src: int, dst: int) -> Route:
        return self._routes[src, dst]

    def transit(self, src: int, dst: int, msg_bytes: float) -> float:
        """Latency of a message over the precomputed route (0 for src == dst)."""
        if src == dst:
            return 0.0
        key = (src, dst, msg_bytes)
        lat = self._transit_cache.get(key)
        if lat is None:
            lat = self._transit_cache[key] = self._routes[src, dst].latency(msg_bytes)
        return lat

    def _route_from_path(self, path: Sequence[int]) -> Route:
        links = []
        for a, b in zip(path, path[1:]):
            links.append(next(l for w, l in self._adj[a] if w == b))
        return Route(tuple(path), tuple(links))

    def _dijkstra(self, src: int, dst: int, msg_bytes: float) -> tuple[tuple[int, ...], float]:
        # (latency, path) keys: equal latencies fall back to lexicographic path order,
        # which survives extension because two simple paths to one node are never prefixes
        heap = [(0.0, (src,))]
        done = set()
        while heap:
            d, path = heapq.heappop(heap)
            v = path[-1]
            if v in done:
                continue
            done.add(v)
            if v == dst:
                return path, d
            for w, link in self._adj[v]:
                if w not in done:
                    heapq.heappush(heap, (d + msg_bytes / link.bw + link.pr, path + (w,)))
        raise TopologyError(f"node {dst} unreachable from {src}")

    # -- serialization -------------------------------------------------

    def to_text(self) -> str:
        lines = ["# fog topology", f"ref_bytes {self.ref_bytes!r}", "[nodes]", "id role ipt ram"]
        for n in self.nodes:
            lines.append(f"{n.id} {n.role.value} {n.ipt!r} {n.ram!r}")
        lines += ["[links]", "u v bw pr"]
        for link in self.links:
            lines.append(f"{link.u} {link.v} {link.bw!r} {link.pr!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Topology":
        section = None
        ref_bytes = DEFAULT_REF_BYTES
        nodes, links = [], []
        header_pending = False
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line in ("[nodes]", "[links]"):
                section = line[1:-1]
                header_pending = True
                continue
            if header_pending:
                header_pending = False
                continue
            parts = line.split()
            try:
                if section is None and parts[0] == "ref_bytes":
                    ref_bytes = float(parts[1])
                elif section == "nodes":
                    nodes.append(Node(int(parts[0]), Role(parts[1]), float(parts[2]), float(parts[3])))
                elif section == "links":
                    links.append(Link(int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
                else:
                    raise ValueError("unexpected line")
            except (ValueError, IndexError) as exc:
                raise TopologyError(f"line {lineno}: cannot parse {raw!r}") from exc
        return cls(nodes, links, ref_bytes=ref_bytes)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Topology":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"topology file not found: {path}")
        return cls.from_text(path.read_text())

    def __eq__(self, other):
        return isinstance(other, Topology) and self.to_text() == other.to_text()

    def __repr__(self):
        return (f"Topology(n_nodes={len(self.nodes)}, fog={len(self.fog_ids)}, "
                f"clusters={len(self.cluster_ids)}, links={len(self.links)})")


def fastest_path(topology: Topology, src: int, dst: int,
                 msg_bytes: float) -> tuple[tuple[int, ...], float]:
    """Path minimizing the sum of ``msg_bytes / bw + pr`` over its links.

    Equal-latency candidates resolve to the lexicographically smallest node
    sequence.
    """
    if src == dst:
        raise ValueError("fastest_path needs src != dst")
    for n in (src, dst):
        if n not in topology._by_id:
            raise KeyError(f"unknown node {n}")
    return topology._dijkstra(src, dst, float(msg_bytes))


def assign_roles(centrality: Mapping[int, float], n_clusters: int) -> dict[int, Role]:
    order = sorted(centrality, key=lambda v: (centrality[v], v))
    cloud = max(centrality, key=lambda v: (centrality[v], -v))
    roles = {}
    clusters = [v for v in order if v != cloud][:n_clusters]
    for v in centrality:
        roles[v] = Role.CLOUD if v == cloud else Role.IOT if v in clusters else Role.FOG
    return roles


def tier_fog_ipt(centrality: Mapping[int, float], fog_ids: Sequence[int],
                 tiers: Sequence[float] = DEFAULT_FOG_TIERS) -> dict[int, float]:
    """Split Fog nodes into rank groups by ascending centrality; first tier to the least central."""
    ranked = sorted(fog_ids, key=lambda v: (centrality[v], v))
    out = {}
    for tier, group in zip(tiers, np.array_split(np.asarray(ranked, dtype=int), len(tiers))):
        for v in group:
            out[int(v)] = float(tier)
    return out


def generate_topology(n_nodes: int, n_clusters: int, seed: int, *,
                      edges: Iterable[tuple[int, int]] | None = None,
                      fog_tiers: Sequence[float] = DEFAULT_FOG_TIERS,
                      cloud_ipt: float = DEFAULT_CLOUD_IPT,
                      bw_tiers: Sequence[float] = DEFAULT_BW_TIERS,
                      pr_range: tuple[int, int] = DEFAULT_PR_RANGE,
                      fog_ram: float = 4096.0, cloud_ram: float = 65536.0,
                      ref_bytes: float = DEFAULT_REF_BYTES,
                      attach: int = 2, max_tries: int = 10) -> Topology:
    """Random scale-free fog topology, a pure function of its arguments.

    A Barabasi-Albert graph (``attach`` edges per new node) stands in for an
    Autonomous System graph unless ``edges`` injects a fixed edge list.
    """
    if n_clusters < 1:
        raise ValueError("need at least one IoT cluster")
    if n_nodes < n_clusters + 2:
        raise ValueError(f"n_nodes={n_nodes} leaves no Fog node for {n_clusters} clusters "
                         "(need n_nodes >= n_clusters + 2)")
    if edges is not None:
        graph = nx.Graph()
        graph.add_nodes_from(range(n_nodes))
        graph.add_edges_from(edges)
        if not nx.is_connected(graph):
            raise TopologyError("injected edge list is not connected")
    else:
        for attempt in range(max_tries):
            graph = nx.barabasi_albert_graph(n_nodes, min(attach, n_nodes - 1),
                                             seed=seed + attempt * 7919)
            if nx.is_connected(graph):
                break
        else:
            raise TopologyError(f"graph disconnected after {max_tries} tries")
    adjacency = {v: list(graph.neighbors(v)) for v in graph.nodes}
    centrality = betweenness(adjacency)
    roles = assign_roles(centrality, n_clusters)
    fog_ids = sorted(v for v, r in roles.items() if r is Role.FOG)
    fog_ipt = tier_fog_ipt(centrality, fog_ids, fog_tiers)

    nodes = []
    for v in sorted(graph.nodes):
        role = roles[v]
        if role is Role.CLOUD:
            nodes.append(Node(v, role, float(cloud_ipt), float(cloud_ram)))
        elif role is Role.FOG:
            nodes.append(Node(v, role, fog_ipt[v], float(fog_ram)))
        else:
            nodes.append(Node(v, role, 0.0, 0.0))

    rng = np.random.default_rng(seed)
    links = []
    for u, v in sorted(tuple(sorted(e)) for e in graph.edges):
        bw = float(bw_tiers[rng.integers(len(bw_tiers))])
        pr = float(rng.integers(pr_range[0], pr_range[1] + 1))
        links.append(Link(u, v, bw, pr))
    return Topology(nodes, links, ref_bytes=ref_bytes)

