"""Peer overlay graphs: Barabasi-Albert generation and a few hand-built shapes."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

PeerId = int


class TopologyError(ValueError):
    """Bad generator parameters or an unknown peer id."""


@dataclass(frozen=True)
class Topology:
    n: int
    adjacency: tuple[frozenset[int], ...]
    m: int = 0
    seed: int | None = None
    name: str = field(default="ba", compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], name: str = "custom") -> Topology:
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise TopologyError(f"self-loop at peer {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise TopologyError(f"edge ({u}, {v}) outside [0, {n})")
            adj[u].add(v)
            adj[v].add(u)
        return cls(n=n, adjacency=tuple(frozenset(a) for a in adj), name=name)

    def neighbors(self, p: PeerId) -> frozenset[int]:
        if not 0 <= p < self.n:
            raise TopologyError(f"unknown peer {p} (n={self.n})")
        return self.adjacency[p]

    def degree(self, p: PeerId) -> int:
        return len(self.neighbors(p))

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in sorted(self.adjacency[u]) if u < v]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return len(bfs_distances(self, 0)) == self.n

    def write_edgelist(self, path: str | Path) -> None:
        """One ``u v`` pair per line, u < v, sorted."""
        with open(path, "w", encoding="utf-8") as fh:
            for u, v in self.edges():
                fh.write(f"{u} {v}\n")

    @classmethod
    def read_edgelist(cls, path: str | Path, n: int | None = None) -> Topology:
        edges = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    u, v = line.split()
                    edges.append((int(u), int(v)))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls.from_edges(n, edges, name="edgelist")


def generate_ba(n: int, m: int, seed: int) -> Topology:
    """Barabasi-Albert graph with ``(n - m) * m`` edges.

    Starts from ``m`` isolated peers; every later peer attaches to ``m`` distinct
    existing peers drawn with probability proportional to ``degree + 1``.
    Duplicate draws are redrawn.
    """
    if m < 1 or n <= m:
        raise TopologyError(f"need n > m >= 1, got n={n}, m={m}")
    rng = random.Random(seed)
    adj: list[set[int]] = [set() for _ in range(n)]
    # one entry per unit of (degree + 1) weight
    pool: list[int] = list(range(m))
    for new in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[rng.randrange(len(pool))])
        for t in sorted(targets):
            adj[new].add(t)
            adj[t].add(new)
            pool.append(t)
        pool.extend([new] * (m + 1))
    topo = Topology(n=n, adjacency=tuple(frozenset(a) for a in adj), m=m, seed=seed)
    assert topo.is_connected()
    return topo


def neighbors(t: Topology, p: PeerId) -> frozenset[int]:
    return t.neighbors(p)


def bfs_distances(t: Topology, source: PeerId) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in t.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_path_hops(t: Topology, a: PeerId, b: PeerId) -> int:
    t.neighbors(a)
    t.neighbors(b)
    if a == b:
        return 0
    dist = bfs_distances(t, a)
    if b not in dist:
        raise TopologyError(f"peers {a} and {b} are disconnected")
    return dist[b]


def path_graph(n: int) -> Topology:
    return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)], name="path")


def ring_graph(n: int) -> Topology:
    return Topology.from_edges(n, [(i, (i + 1) % n) for i in range(n)], name="ring")


def star_graph(leaves: int) -> Topology:
    """Peer 0 is the center, peers 1..leaves are leaves."""
    return Topology.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)], name="star")


def complete_graph(n: int) -> Topology:
    return Topology.from_edges(n, [(u, v) for u in range(n) for v in range(u + 1, n)], name="complete")
