"""Knowledge discovery over the overlay: topic-aware random walk, random walk, flooding.

Message accounting: every query forwarded to a peer other than the origin is
one message, and a successful remote lookup adds one reply. Consulting the
origin's own store is free.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from dragsim.knowledge import (
    DEFAULT_POLICY,
    KnowledgeSnippet,
    PeerStore,
    PrivacyPolicy,
    RetrievalError,
    Scorer,
    privacy_filter,
    query_local,
)
from dragsim.lm import LanguageModel, TopicSet
from dragsim.text import normalize_topic
from dragsim.topology import Topology

SCHEMES = ("tarw", "rw", "fl")


@dataclass(frozen=True)
class SearchParams:
    h_max: int = 6
    k: int = 4
    theta: float = 0.8
    scheme: str = "tarw"

    def __post_init__(self):
        if self.h_max < 0:
            raise ValueError(f"h_max must be >= 0, got {self.h_max}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class ExpertiseCache:
    """What one peer has learned about which peers answered which topics."""

    owner: int
    entries: dict[int, set[str]] = field(default_factory=dict)

    def topics_of(self, peer: int) -> set[str]:
        return self.entries.get(peer, set())

    def __len__(self):
        return len(self.entries)


def update_expertise(cache: ExpertiseCache, contributor: int, topics: Iterable[str]) -> None:
    if contributor == cache.owner:
        return
    cache.entries.setdefault(contributor, set()).update(normalize_topic(t) for t in topics)


def score_neighbors(neighbors: Iterable[int], cache: ExpertiseCache, topics: Iterable[str]) -> dict[int, float]:
    """Share of the query topics each neighbour has contributed before."""
    wanted = set(topics)
    denom = max(1, len(wanted))
    return {p: len(cache.topics_of(p) & wanted) / denom for p in neighbors}


def _shuffled(neighbors: Iterable[int], rng: random.Random) -> list[int]:
    order = sorted(neighbors)
    rng.shuffle(order)
    return order


def select_top_k(neighbors: Iterable[int], scores: Mapping[int, float], k: int, rng: random.Random) -> list[int]:
    """Highest scores first; equal scores in random order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = _shuffled(neighbors, rng)
    order.sort(key=lambda p: -scores.get(p, 0.0))
    return order[:k]


@dataclass
class SearchTrace:
    query_id: str
    scheme: str
    messages_sent: int = 0
    hops_to_hit: int | None = None
    visited: list[int] = field(default_factory=list)
    hit_peer: int | None = None
    hit_snippet: str | None = None
    topic_fallback: bool = False
    lm_error: bool = False
    # cache | local | remote | miss | filtered | error
    resolved_by: str = "miss"

    @property
    def hit(self) -> bool:
        return self.hit_snippet is not None

    @property
    def outcome(self) -> str:
        return "hit" if self.hit else "miss"

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "scheme": self.scheme,
            "messages_sent": self.messages_sent,
            "hops_to_hit": self.hops_to_hit,
            "visited": list(self.visited),
            "outcome": self.outcome,
            "hit_peer": self.hit_peer,
            "hit_snippet": self.hit_snippet,
            "topic_fallback": self.topic_fallback,
            "lm_error": self.lm_error,
            "resolved_by": self.resolved_by,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> SearchTrace:
        return cls(
            query_id=d["query_id"],
            scheme=d["scheme"],
            messages_sent=d["messages_sent"],
            hops_to_hit=d["hops_to_hit"],
            visited=list(d["visited"]),
            hit_peer=d["hit_peer"],
            hit_snippet=d["hit_snippet"],
            topic_fallback=d["topic_fallback"],
            lm_error=d.get("lm_error", False),
            resolved_by=d["resolved_by"],
        )


@dataclass
class Network:
    """Everything a search can touch: overlay, stores, expertise caches, scorer."""

    topology: Topology
    stores: Sequence[PeerStore]
    caches: Sequence[ExpertiseCache]
    scorer: Scorer
    policy: PrivacyPolicy = DEFAULT_POLICY

    @classmethod
    def build(cls, topology: Topology, stores: Sequence[PeerStore], scorer: Scorer, policy: PrivacyPolicy = DEFAULT_POLICY) -> Network:
        if len(stores) != topology.n:
            raise ValueError(f"{len(stores)} stores for {topology.n} peers")
        return cls(topology, stores, [ExpertiseCache(p) for p in range(topology.n)], scorer, policy)

    def consult(self, peer: int, query_text: str, theta: float) -> KnowledgeSnippet | None:
        """Best snippet at ``peer`` if it clears the threshold."""
        try:
            best = query_local(self.stores[peer], query_text, self.scorer)
        except RetrievalError:
            return None
        if best is None or best[1] < theta:
            return None
        return best[0]


SearchResult = tuple["list[KnowledgeSnippet] | None", SearchTrace]


def _record_hit(net: Network, trace: SearchTrace, peer: int, hop: int, snippet: KnowledgeSnippet, origin: int):
    if peer != origin:
        trace.messages_sent += 1
    shared = privacy_filter([snippet], net.policy)
    if not shared:
        trace.resolved_by = "filtered"
        return None, trace
    trace.hops_to_hit = hop
    trace.hit_peer = peer
    trace.hit_snippet = snippet.snippet_id
    trace.resolved_by = "local" if peer == origin else "remote"
    return shared, trace


def _walk(
    net: Network,
    origin: int,
    query_text: str,
    query_id: str,
    params: SearchParams,
    topics: TopicSet,
    choose: Callable[[set[int]], list[int]],
    learn: Callable[[int], None] | None,
) -> SearchResult:
    net.topology.neighbors(origin)
    trace = SearchTrace(query_id, params.scheme, topic_fallback=topics.fallback)
    seen = {origin}
    queue: deque[tuple[int, int]] = deque([(origin, 0)])
    while queue:
        peer, hop = queue.popleft()
        if hop >= params.h_max:
            continue
        if peer != origin:
            trace.messages_sent += 1
        trace.visited.append(peer)
        found = net.consult(peer, query_text, params.theta)
        if found is not None:
            if learn is not None:
                learn(peer)
            return _record_hit(net, trace, peer, hop, found, origin)
        fresh = set(net.topology.neighbors(peer)) - seen
        if not fresh:
            continue
        for nxt in choose(fresh):
            seen.add(nxt)
            queue.append((nxt, hop + 1))
    return None, trace


def tarw_search(
    net: Network,
    origin: int,
    query_text: str,
    params: SearchParams,
    rng: random.Random,
    lm: LanguageModel | None = None,
    topics: TopicSet | None = None,
    query_id: str = "",
    learn: bool = True,
) -> SearchResult:
    """Topic-aware random walk from ``origin``.

    A FIFO queue of (peer, hop) pairs; each consulted peer forwards to its ``k``
    unvisited neighbours whose cached expertise best matches the query topics.
    The origin's expertise cache steers every step and learns the contributor
    on success. ``learn=False`` keeps the cache frozen.
    """
    if params.scheme != "tarw":
        params = SearchParams(params.h_max, params.k, params.theta, "tarw")
    if topics is None:
        if lm is None:
            raise ValueError("need either topics or an lm to extract them")
        topics = lm.extract_topics(query_text)
    cache = net.caches[origin]
    wanted = topics.as_set()

    def choose(fresh: set[int]) -> list[int]:
        return select_top_k(fresh, score_neighbors(fresh, cache, wanted), params.k, rng)

    def remember(peer: int) -> None:
        update_expertise(cache, peer, wanted)

    return _walk(net, origin, query_text, query_id, params, topics, choose, remember if learn else None)


def rw_search(
    net: Network,
    origin: int,
    query_text: str,
    params: SearchParams,
    rng: random.Random,
    query_id: str = "",
    topics: TopicSet | None = None,
) -> SearchResult:
    """Forward to one uniformly random unvisited neighbour per step; ``k`` is ignored."""
    if params.scheme != "rw":
        params = SearchParams(params.h_max, params.k, params.theta, "rw")

    def choose(fresh: set[int]) -> list[int]:
        return _shuffled(fresh, rng)[:1]

    return _walk(net, origin, query_text, query_id, params, topics or TopicSet(()), choose, None)


def flood_search(
    net: Network,
    origin: int,
    query_text: str,
    params: SearchParams,
    query_id: str = "",
    topics: TopicSet | None = None,
) -> SearchResult:
    """Breadth-first broadcast out to ``h_max`` hops.

    Each frontier peer (ascending id) forwards to every neighbour not yet
    reached; one message per forward. All peers of a hop level are tested and
    the lowest-id hit of the first level with any hit wins.
    """
    if params.scheme != "fl":
        params = SearchParams(params.h_max, params.k, params.theta, "fl")
    topo = net.topology
    topo.neighbors(origin)
    trace = SearchTrace(query_id, "fl", topic_fallback=(topics.fallback if topics else False))
    if params.h_max == 0:
        return None, trace
    seen = {origin}
    trace.visited.append(origin)
    found = net.consult(origin, query_text, params.theta)
    if found is not None:
        return _record_hit(net, trace, origin, 0, found, origin)
    frontier = [origin]
    for hop in range(1, params.h_max + 1):
        level: list[int] = []
        for peer in sorted(frontier):
            for nb in sorted(topo.adjacency[peer]):
                if nb not in seen:
                    seen.add(nb)
                    level.append(nb)
        if not level:
            break
        trace.messages_sent += len(level)
        trace.visited.extend(level)
        for peer in sorted(level):
            found = net.consult(peer, query_text, params.theta)
            if found is not None:
                return _record_hit(net, trace, peer, hop, found, origin)
        frontier = level
    return None, trace


def search(
    net: Network,
    origin: int,
    query_text: str,
    params: SearchParams,
    rng: random.Random,
    topics: TopicSet,
    query_id: str = "",
    learn: bool = True,
) -> SearchResult:
    if params.scheme == "tarw":
        return tarw_search(net, origin, query_text, params, rng, topics=topics, query_id=query_id, learn=learn)
    if params.scheme == "rw":
        return rw_search(net, origin, query_text, params, rng, query_id=query_id, topics=topics)
    return flood_search(net, origin, query_text, params, query_id=query_id, topics=topics)
