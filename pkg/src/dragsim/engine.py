"""Per-query pipelines: distributed RAG, centralized RAG and the no-retrieval baseline."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

from dragsim.knowledge import (
    DEFAULT_POLICY,
    KnowledgeSnippet,
    PeerStore,
    PrivacyPolicy,
    Query,
    ResultCacheEntry,
    Scorer,
    cache_key,
    cache_lookup,
    cache_store,
    privacy_filter,
)
from dragsim.lm import UNKNOWN, LanguageModel, LmError
from dragsim.routing import Network, SearchParams, SearchTrace, search

logger = logging.getLogger(__name__)

CRAG_VARIANTS = ("full", "s070", "s050", "t070", "t050")
_VARIANT_PERCENT = {"s070": 70, "s050": 50, "t070": 70, "t050": 50}


@dataclass
class Answer:
    query_id: str
    text: str
    mode: str
    used_snippets: list[str] = field(default_factory=list)
    from_cache: bool = False

    def __post_init__(self):
        if self.mode == "norag" and self.used_snippets:
            raise ValueError("norag answers use no snippets")

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "mode": self.mode,
            "text": self.text,
            "used_snippets": list(self.used_snippets),
            "from_cache": self.from_cache,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _generate(lm: LanguageModel, query_text: str, context: Sequence[KnowledgeSnippet], trace: SearchTrace) -> str:
    try:
        return lm.generate_answer(query_text, context)
    except LmError as exc:
        logger.warning("generation failed for %s: %s", trace.query_id, exc)
        trace.lm_error = True
        return UNKNOWN


def answer_query_drag(
    net: Network,
    q: Query,
    params: SearchParams,
    lm: LanguageModel,
    rng: random.Random,
    learn: bool = True,
) -> tuple[Answer, SearchTrace]:
    """Result cache, then the local store, then a network search; generate; cache."""
    origin = q.origin
    store = net.stores[origin]

    cached = cache_lookup(store, q.text)
    if cached is not None:
        trace = SearchTrace(q.query_id, params.scheme, hops_to_hit=0, resolved_by="cache")
        trace.hit_peer = cached.contributing_peer
        trace.hit_snippet = cached.snippets[0].snippet_id if cached.snippets else None
        ids = [s.snippet_id for s in cached.snippets]
        return Answer(q.query_id, cached.answer, "drag", ids, from_cache=True), trace

    topics = lm.extract_topics(q.text)
    context: list[KnowledgeSnippet] | None = None
    local = net.consult(origin, q.text, params.theta)
    if local is not None:
        context = privacy_filter([local], net.policy) or None
    if context is not None:
        trace = SearchTrace(
            q.query_id, params.scheme, hops_to_hit=0, visited=[origin],
            hit_peer=origin, hit_snippet=local.snippet_id,
            topic_fallback=topics.fallback, resolved_by="local",
        )
    else:
        context, trace = search(net, origin, q.text, params, rng, topics, q.query_id, learn=learn)

    text = _generate(lm, q.text, context or [], trace)
    used = [s.snippet_id for s in context or []]
    if context and not trace.lm_error:
        contributor = trace.hit_peer if trace.hit_peer is not None else origin
        cache_store(store, ResultCacheEntry(cache_key(q.text), text, tuple(context), contributor))
    return Answer(q.query_id, text, "drag", used), trace


@dataclass
class CentralKb:
    snippets: tuple[KnowledgeSnippet, ...]
    variant: str = "full"
    seed: int = 0
    store: PeerStore = field(init=False, repr=False)

    def __post_init__(self):
        self.store = PeerStore(owner=-1, snippets=self.snippets)


def build_central_kb(snippets: Sequence[KnowledgeSnippet], variant: str = "full", seed: int = 0) -> CentralKb:
    """Full collection, or a uniform subsample of snippets (sXXX) or of topics (tXXX).

    Retained counts are floored.
    """
    if variant not in CRAG_VARIANTS:
        raise ValueError(f"unknown CRAG variant {variant!r}")
    snippets = list(snippets)
    if variant == "full":
        return CentralKb(tuple(snippets), variant, seed)
    pct = _VARIANT_PERCENT[variant]
    rng = random.Random(seed)
    if variant.startswith("s"):
        keep = set(rng.sample(range(len(snippets)), len(snippets) * pct // 100))
        kept = [s for i, s in enumerate(snippets) if i in keep]
    else:
        topics = sorted({t for s in snippets for t in s.topics})
        chosen = set(rng.sample(topics, len(topics) * pct // 100))
        kept = [s for s in snippets if s.topics & chosen]
    return CentralKb(tuple(kept), variant, seed)


def answer_query_crag(
    q: Query,
    kb: CentralKb,
    lm: LanguageModel,
    scorer: Scorer,
    theta: float = 0.8,
    policy: PrivacyPolicy = DEFAULT_POLICY,
    top_j: int = 1,
) -> tuple[Answer, SearchTrace]:
    trace = SearchTrace(q.query_id, "crag")
    ranked = sorted(
        ((scorer.score(q.text, s, kb.store), i, s) for i, s in enumerate(kb.store)),
        key=lambda x: (-x[0], x[1]),
    )
    hits = [s for score, _, s in ranked[:top_j] if score >= theta]
    context = privacy_filter(hits, policy)
    if context:
        trace.hit_snippet = context[0].snippet_id
        trace.resolved_by = "central"
    text = _generate(lm, q.text, context, trace)
    return Answer(q.query_id, text, "crag", [s.snippet_id for s in context]), trace


def answer_query_norag(q: Query, lm: LanguageModel) -> tuple[Answer, SearchTrace]:
    trace = SearchTrace(q.query_id, "norag")
    text = _generate(lm, q.text, [], trace)
    return Answer(q.query_id, text, "norag"), trace
