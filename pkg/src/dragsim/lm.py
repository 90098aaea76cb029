"""Language model backends: topic extraction, answer generation and embeddings.

``MockLanguageModel`` answers perfectly from the dataset it was built with and
never touches the network. ``HttpLanguageModel`` talks to a local model server
exposing ``/api/generate`` and ``/api/embeddings``.
"""

from __future__ import annotations

import hashlib
import logging
import random
import time
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import httpx

from dragsim.knowledge import KnowledgeSnippet
from dragsim.text import normalize_topic, top_terms

logger = logging.getLogger(__name__)

UNKNOWN = "UNKNOWN"

TOPIC_PROMPT = (
    "List the key topics of the following question as a short comma-separated list "
    "of at most {max_topics} lowercase noun phrases. Reply with the list only.\n\n"
    "Question: {query}\nTopics:"
)

ANSWER_PROMPT = (
    "Answer the question using the context below. Reply with the answer only, "
    "as briefly as possible.\n\n"
    "Context:\n{context}\n\nQuestion: {query}\nAnswer:"
)

ANSWER_PROMPT_NO_CONTEXT = (
    "Answer the question. Reply with the answer only, as briefly as possible.\n\n"
    "Question: {query}\nAnswer:"
)

FALLBACK_TOPICS = 3


class LmError(RuntimeError):
    """The model server could not be reached or returned garbage."""


class LmConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TopicSet:
    topics: tuple[str, ...]
    fallback: bool = False

    def __iter__(self):
        return iter(self.topics)

    def __len__(self):
        return len(self.topics)

    def as_set(self) -> frozenset[str]:
        return frozenset(self.topics)


def make_topic_set(raw: Iterable[str], max_topics: int, fallback: bool = False) -> TopicSet:
    seen: list[str] = []
    for t in raw:
        t = normalize_topic(t)
        if t and t not in seen:
            seen.append(t)
    return TopicSet(tuple(seen[:max_topics]), fallback)


def parse_topic_list(response: str, max_topics: int) -> TopicSet:
    """``"sports, 2016 Olympics"`` -> ``("sports", "2016 olympics")``."""
    first = response.strip().splitlines()[0] if response.strip() else ""
    parts = [p.strip(" \t.*-\"'") for p in first.split(",")]
    return make_topic_set(parts, max_topics)


def fallback_topics(query_text: str, max_topics: int) -> TopicSet:
    return make_topic_set(top_terms(query_text, min(FALLBACK_TOPICS, max_topics)), max_topics, fallback=True)


@dataclass(frozen=True)
class LmBackendConfig:
    kind: str = "mock"
    base_url: str = ""
    model_name: str = "llama3.2:3b"
    timeout: float = 60.0
    max_retries: int = 2
    backoff: float = 1.0
    max_topics: int = 5

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise LmConfigError(f"unknown lm kind {self.kind!r}")
        if self.kind == "http" and not (self.base_url and self.model_name):
            raise LmConfigError("http backend needs base_url and model_name")


class LanguageModel(Protocol):
    max_topics: int

    def extract_topics(self, query_text: str) -> TopicSet: ...

    def generate_answer(self, query_text: str, context: Sequence[KnowledgeSnippet]) -> str: ...

    def embed(self, text: str) -> list[float]: ...

    def check(self, need_embeddings: bool = False) -> None: ...


class MockLanguageModel:
    """Deterministic stand-in that knows every record's topic and answer.

    Records need ``record_id``, ``question``, ``gold_answer``, ``support_text``
    and ``topic`` attributes.
    """

    def __init__(self, records: Iterable = (), seed: int = 0, max_topics: int = 5, dim: int = 64):
        self.seed = seed
        self.max_topics = max_topics
        self.dim = dim
        self._by_text: dict[str, object] = {}
        for r in records:
            self._by_text[_key(r.question)] = r
            self._by_text.setdefault(_key(r.support_text), r)

    def extract_topics(self, query_text: str) -> TopicSet:
        if not query_text.strip():
            raise ValueError("empty query")
        rec = self._by_text.get(_key(query_text))
        if rec is not None and rec.topic:
            return make_topic_set([rec.topic], self.max_topics)
        return fallback_topics(query_text, self.max_topics)

    def generate_answer(self, query_text: str, context: Sequence[KnowledgeSnippet]) -> str:
        rec = self._by_text.get(_key(query_text))
        if rec is None or _key(rec.question) != _key(query_text):
            return UNKNOWN
        if any(s.source_record == rec.record_id for s in context):
            return rec.gold_answer
        return UNKNOWN

    def embed(self, text: str) -> list[float]:
        """Sum of per-token pseudo-random unit vectors seeded by a hash of the token."""
        vec = [0.0] * self.dim
        tokens = text.lower().split() or [""]
        for tok in tokens:
            digest = hashlib.blake2b(f"{self.seed}:{tok}".encode(), digest_size=8).digest()
            rng = random.Random(int.from_bytes(digest, "big"))
            for i in range(self.dim):
                vec[i] += rng.gauss(0.0, 1.0)
        return vec

    def check(self, need_embeddings: bool = False) -> None:
        return None


def _key(text: str) -> str:
    return " ".join(text.lower().split())


class HttpLanguageModel:
    def __init__(self, config: LmBackendConfig, transport: httpx.BaseTransport | None = None):
        if config.kind != "http":
            raise LmConfigError("HttpLanguageModel needs kind='http'")
        self.config = config
        self.max_topics = config.max_topics
        self._client = httpx.Client(base_url=config.base_url.rstrip("/"), timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff)
            try:
                resp = self._client.post(path, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last = exc
                logger.warning("%s attempt %d failed: %s", path, attempt + 1, exc)
        raise LmError(f"POST {path} failed after {self.config.max_retries + 1} attempts: {last}")

    def _generate(self, prompt: str) -> str:
        body = self._post("/api/generate", {"model": self.config.model_name, "prompt": prompt, "stream": False})
        text = body.get("response")
        if not isinstance(text, str):
            raise LmError("response field missing from /api/generate reply")
        return text

    def extract_topics(self, query_text: str) -> TopicSet:
        if not query_text.strip():
            raise ValueError("empty query")
        try:
            text = self._generate(TOPIC_PROMPT.format(max_topics=self.max_topics, query=query_text))
        except LmError:
            return fallback_topics(query_text, self.max_topics)
        topics = parse_topic_list(text, self.max_topics)
        if not topics.topics:
            return fallback_topics(query_text, self.max_topics)
        return topics

    def generate_answer(self, query_text: str, context: Sequence[KnowledgeSnippet]) -> str:
        if context:
            ctx = "\n".join(f"- {s.text}" for s in context)
            prompt = ANSWER_PROMPT.format(context=ctx, query=query_text)
        else:
            prompt = ANSWER_PROMPT_NO_CONTEXT.format(query=query_text)
        return self._generate(prompt).strip()

    def embed(self, text: str) -> list[float]:
        body = self._post("/api/embeddings", {"model": self.config.model_name, "prompt": text})
        vec = body.get("embedding")
        if not isinstance(vec, list) or not vec:
            raise LmError("embedding field missing from /api/embeddings reply")
        return [float(x) for x in vec]

    def check(self, need_embeddings: bool = False) -> None:
        """Fail fast when the server is down or cannot embed."""
        try:
            self._client.get("/")
        except httpx.HTTPError as exc:
            raise LmError(f"model server at {self.config.base_url} unreachable: {exc}") from exc
        if need_embeddings:
            try:
                self.embed("ping")
            except LmError as exc:
                raise LmConfigError(f"model {self.config.model_name!r} cannot embed: {exc}") from exc


def build_lm(config: LmBackendConfig, records: Iterable = (), seed: int = 0) -> MockLanguageModel | HttpLanguageModel:
    if config.kind == "mock":
        return MockLanguageModel(records, seed=seed, max_topics=config.max_topics)
    return HttpLanguageModel(config)
