"""Per-peer knowledge stores, relevance scoring, privacy filtering and the result cache."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Protocol, Sequence

from dragsim.text import IdfTable, content_tokens, normalize_topic, tfidf_cosine

if TYPE_CHECKING:
    from dragsim.lm import LanguageModel


class KnowledgeError(ValueError):
    pass


class RetrievalError(RuntimeError):
    """A peer could not score its knowledge (e.g. the embedding server failed)."""


@dataclass(frozen=True)
class KnowledgeSnippet:
    snippet_id: str
    text: str
    topics: frozenset[str]
    source_record: str
    private: bool = False

    def __post_init__(self):
        topics = frozenset(normalize_topic(t) for t in self.topics if t.strip())
        if not topics:
            raise KnowledgeError(f"snippet {self.snippet_id!r} has no topics")
        object.__setattr__(self, "topics", topics)

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "text": self.text,
            "topics": sorted(self.topics),
            "source_record": self.source_record,
            "private": self.private,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> KnowledgeSnippet:
        return cls(
            snippet_id=str(d["snippet_id"]),
            text=str(d["text"]),
            topics=frozenset(d["topics"]),
            source_record=str(d["source_record"]),
            private=bool(d.get("private", False)),
        )


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    origin: int
    # held by the harness for scoring; peer-side code never reads it
    gold_answer: str = field(default="", repr=False)


@dataclass(frozen=True)
class ResultCacheEntry:
    query_key: str
    answer: str
    snippets: tuple[KnowledgeSnippet, ...]
    contributing_peer: int


def cache_key(query_text: str) -> str:
    normalized = " ".join(query_text.lower().split())
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


class PeerStore:
    """Snippets held by one peer plus its cache of past answers."""

    def __init__(self, owner: int = 0, snippets: Iterable[KnowledgeSnippet] = ()):
        self.owner = owner
        self._snippets: dict[str, KnowledgeSnippet] = {}
        self._tokens: dict[str, list[str]] = {}
        self._idf: IdfTable | None = None
        self.results: dict[str, ResultCacheEntry] = {}
        for s in snippets:
            self.insert(s)

    def insert(self, s: KnowledgeSnippet) -> None:
        if s.snippet_id in self._snippets:
            raise KnowledgeError(f"duplicate snippet id {s.snippet_id!r} on peer {self.owner}")
        self._snippets[s.snippet_id] = s
        self._tokens[s.snippet_id] = content_tokens(s.text)
        self._idf = None

    def get(self, snippet_id: str) -> KnowledgeSnippet:
        return self._snippets[snippet_id]

    def __contains__(self, snippet_id: object) -> bool:
        return snippet_id in self._snippets

    def __len__(self) -> int:
        return len(self._snippets)

    def __iter__(self):
        return iter(self._snippets.values())

    def tokens(self, snippet_id: str) -> list[str]:
        return self._tokens[snippet_id]

    @property
    def idf(self) -> IdfTable:
        if self._idf is None:
            self._idf = IdfTable(self._tokens.values())
        return self._idf

    def dump_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self:
                fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path, owner: int = 0) -> PeerStore:
        store = cls(owner)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    store.insert(KnowledgeSnippet.from_dict(json.loads(line)))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise KnowledgeError(f"{path}:{lineno}: {exc}") from exc
        return store


def insert_snippet(store: PeerStore, s: KnowledgeSnippet) -> None:
    store.insert(s)


# -- relevance backends -------------------------------------------------------


class Scorer(Protocol):
    name: str

    def score(self, query_text: str, snippet: KnowledgeSnippet, store: PeerStore | None = None) -> float: ...


class LexicalScorer:
    """TF-IDF cosine. Inside a store the idf comes from that store's snippets."""

    name = "lexical"

    def score(self, query_text, snippet, store=None):
        q = content_tokens(query_text)
        if store is not None and snippet.snippet_id in store:
            return tfidf_cosine(q, store.tokens(snippet.snippet_id), store.idf)
        return tfidf_cosine(q, content_tokens(snippet.text))


class EmbeddingScorer:
    """Cosine over language-model embeddings, rescaled from [-1, 1] to [0, 1]."""

    name = "embedding"

    def __init__(self, lm: LanguageModel):
        self.lm = lm
        self._memo: dict[str, list[float]] = {}

    def _vec(self, text: str) -> list[float]:
        if text not in self._memo:
            try:
                self._memo[text] = self.lm.embed(text)
            except Exception as exc:
                raise RetrievalError(f"embedding failed: {exc}") from exc
        return self._memo[text]

    def score(self, query_text, snippet, store=None):
        return (cosine(self._vec(query_text), self._vec(snippet.text)) + 1.0) / 2.0


class OracleScorer:
    """1.0 when the snippet was derived from the record the question came from, else 0.0.

    Isolates routing behaviour from retrieval quality in simulations.
    """

    name = "oracle"

    def __init__(self, question_to_record: Mapping[str, str]):
        self._lookup = {_norm(q): r for q, r in question_to_record.items()}

    def score(self, query_text, snippet, store=None):
        return 1.0 if self._lookup.get(_norm(query_text)) == snippet.source_record else 0.0


def _norm(text: str) -> str:
    return " ".join(text.lower().split())


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def relevance(query_text: str, snippet: KnowledgeSnippet, scorer: Scorer, store: PeerStore | None = None) -> float:
    return scorer.score(query_text, snippet, store)


def query_local(store: PeerStore, query_text: str, scorer: Scorer) -> tuple[KnowledgeSnippet, float] | None:
    """Best-scoring snippet in the store; ties go to the earliest inserted.

    Thresholding is left to the caller.
    """
    best: tuple[KnowledgeSnippet, float] | None = None
    for s in store:
        value = scorer.score(query_text, s, store)
        if best is None or value > best[1]:
            best = (s, value)
    return best


# -- privacy ------------------------------------------------------------------


@dataclass(frozen=True)
class RedactionRule:
    pattern: str
    replacement: str = "[REDACTED]"

    def apply(self, text: str) -> str:
        return re.sub(self.pattern, self.replacement, text)


@dataclass(frozen=True)
class PrivacyPolicy:
    drop_private: bool = True
    rules: tuple[RedactionRule, ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], drop_private: bool = True) -> PrivacyPolicy:
        return cls(drop_private, tuple(RedactionRule(p, r) for p, r in pairs))


DEFAULT_POLICY = PrivacyPolicy()


def privacy_filter(snippets: Iterable[KnowledgeSnippet], policy: PrivacyPolicy = DEFAULT_POLICY) -> list[KnowledgeSnippet]:
    out = []
    for s in snippets:
        if policy.drop_private and s.private:
            continue
        text = s.text
        for rule in policy.rules:
            text = rule.apply(text)
        out.append(s if text == s.text else KnowledgeSnippet(s.snippet_id, text, s.topics, s.source_record, s.private))
    return out


# -- result cache -------------------------------------------------------------


def cache_lookup(store: PeerStore, query_text: str) -> ResultCacheEntry | None:
    return store.results.get(cache_key(query_text))


def cache_store(store: PeerStore, entry: ResultCacheEntry) -> None:
    store.results[entry.query_key] = entry
