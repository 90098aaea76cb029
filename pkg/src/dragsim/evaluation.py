"""Token-level answer metrics and per-run aggregation of protocol metrics."""

from __future__ import annotations

import csv
import io
import json
import re
import statistics
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from dragsim.engine import Answer
from dragsim.routing import SearchTrace

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str, normalize: bool = True) -> list[str]:
    """SQuAD-style normalization: lowercase, drop punctuation and articles, split."""
    if not normalize:
        return text.split()
    text = text.lower().translate(_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return text.split()


@dataclass(frozen=True)
class TokenMetrics:
    em: float
    f1: float
    precision: float
    recall: float


def token_metrics(prediction: str, gold: str, normalize: bool = True) -> TokenMetrics:
    pred = tokenize(prediction, normalize)
    ref = tokenize(gold, normalize)
    if not pred and not ref:
        return TokenMetrics(1.0, 1.0, 1.0, 1.0)
    em = 1.0 if pred == ref else 0.0
    common = sum((Counter(pred) & Counter(ref)).values())
    if common == 0:
        return TokenMetrics(em, 0.0, 0.0, 0.0)
    p = common / len(pred)
    r = common / len(ref)
    return TokenMetrics(em, 2 * p * r / (p + r), p, r)


CSV_COLUMNS = [
    "scheme", "dataset", "llm", "n", "m", "k", "h_max", "theta", "placement", "crag_variant",
    "seed_topology", "seed_placement", "seed_walk", "n_queries",
    "avg_hops", "avg_messages", "std_messages", "hit_rate",
    "em", "f1", "precision", "recall", "std_f1", "error",
]


@dataclass
class MetricsReport:
    scheme: str
    n_queries: int
    avg_hops: float | None
    avg_messages: float
    std_messages: float
    hit_rate: float
    em: float
    f1: float
    precision: float
    recall: float
    std_f1: float
    config: dict = field(default_factory=dict)
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> dict:
        row = {c: self.config.get(c, "") for c in CSV_COLUMNS}
        row.update(
            scheme=self.scheme, n_queries=self.n_queries,
            avg_hops="" if self.avg_hops is None else self.avg_hops,
            avg_messages=self.avg_messages, std_messages=self.std_messages,
            hit_rate=self.hit_rate, em=self.em, f1=self.f1,
            precision=self.precision, recall=self.recall, std_f1=self.std_f1,
            error=self.error,
        )
        return row


def csv_text(rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


def _std(xs: Sequence[float]) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def aggregate(
    traces: Sequence[SearchTrace],
    answers: Sequence[Answer],
    golds: Mapping[str, str],
    config: Mapping | None = None,
    normalize: bool = True,
) -> MetricsReport:
    """Hit rate and token metrics over all queries; hops over hits only.

    Raises ``ValueError`` when trace, answer and gold ids do not line up.
    """
    by_trace = {t.query_id: t for t in traces}
    by_answer = {a.query_id: a for a in answers}
    if len(by_trace) != len(traces) or len(by_answer) != len(answers):
        raise ValueError("duplicate query ids")
    if set(by_trace) != set(by_answer) or not set(by_trace) <= set(golds):
        raise ValueError("trace, answer and gold query ids do not match")
    ids = sorted(by_trace)
    scheme = traces[0].scheme if traces else (config or {}).get("scheme", "")

    messages = [float(by_trace[i].messages_sent) for i in ids]
    hit_hops = [float(by_trace[i].hops_to_hit) for i in ids if by_trace[i].hit and by_trace[i].hops_to_hit is not None]
    hits = sum(1 for i in ids if by_trace[i].hit)
    scores = [token_metrics(by_answer[i].text, golds[i], normalize) for i in ids]
    f1s = [s.f1 for s in scores]
    n = len(ids)
    return MetricsReport(
        scheme=scheme,
        n_queries=n,
        avg_hops=_mean(hit_hops) if hit_hops else None,
        avg_messages=_mean(messages),
        std_messages=_std(messages),
        hit_rate=hits / n if n else 0.0,
        em=_mean([s.em for s in scores]),
        f1=_mean(f1s),
        precision=_mean([s.precision for s in scores]),
        recall=_mean([s.recall for s in scores]),
        std_f1=_std(f1s),
        config=dict(config or {}),
    )
