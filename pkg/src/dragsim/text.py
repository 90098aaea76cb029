"""Tokenization and TF-IDF helpers shared by relevance scoring and topic fallback."""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable

_WORD = re.compile(r"\w+", re.UNICODE)

STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because been
    before being below between both but by can could did do does doing down during
    each few for from further had has have having he her here hers herself him
    himself his how i if in into is it its itself just me more most my myself no
    nor not now of off on once only or other our ours ourselves out over own same
    she should so some such than that the their theirs them themselves then there
    these they this those through to too under until up very was we were what when
    where which while who whom why will with would you your yours yourself
    yourselves
    """.split()
)


def content_tokens(text: str) -> list[str]:
    """Lowercased word tokens with stopwords removed, in order of appearance."""
    return [t for t in _WORD.findall(text.lower()) if t not in STOPWORDS]


class IdfTable:
    """Smoothed inverse document frequency, ``ln((1 + N) / (1 + df)) + 1``."""

    def __init__(self, documents: Iterable[list[str]]):
        df: Counter[str] = Counter()
        n_docs = 0
        for tokens in documents:
            n_docs += 1
            df.update(set(tokens))
        self.n_docs = n_docs
        self._df = df

    def __getitem__(self, term: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self._df.get(term, 0))) + 1.0


def tfidf_cosine(a: list[str], b: list[str], idf: IdfTable | None = None) -> float:
    """Cosine similarity of the TF-IDF vectors of two token lists.

    Without ``idf`` the corpus is the two documents themselves.
    """
    if not a or not b:
        return 0.0
    if idf is None:
        idf = IdfTable([a, b])
    wa = {t: c * idf[t] for t, c in Counter(a).items()}
    wb = {t: c * idf[t] for t, c in Counter(b).items()}
    dot = sum(w * wb[t] for t, w in wa.items() if t in wb)
    if dot == 0.0:
        return 0.0
    na = math.sqrt(sum(w * w for w in wa.values()))
    nb = math.sqrt(sum(w * w for w in wb.values()))
    return max(0.0, min(1.0, dot / (na * nb)))


def top_terms(text: str, k: int = 3, idf: IdfTable | None = None) -> list[str]:
    """The k highest TF-IDF content tokens of ``text``; ties keep first occurrence."""
    tokens = content_tokens(text)
    if not tokens:
        return []
    tf = Counter(tokens)
    first = {}
    for i, t in enumerate(tokens):
        first.setdefault(t, i)
    weight = {t: c * (idf[t] if idf is not None else 1.0) for t, c in tf.items()}
    ranked = sorted(weight, key=lambda t: (-weight[t], first[t]))
    return ranked[:k]


def normalize_topic(topic: str) -> str:
    return " ".join(topic.strip().lower().split())
