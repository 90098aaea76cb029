"""Datasets, knowledge placement, experiment runs and parameter sweeps."""

from __future__ import annotations

import itertools
import json
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from dragsim.engine import (
    CRAG_VARIANTS,
    Answer,
    answer_query_crag,
    answer_query_drag,
    answer_query_norag,
    build_central_kb,
)
from dragsim.evaluation import MetricsReport, aggregate, csv_text
from dragsim.knowledge import (
    EmbeddingScorer,
    KnowledgeSnippet,
    LexicalScorer,
    OracleScorer,
    PeerStore,
    Query,
    Scorer,
)
from dragsim.lm import LanguageModel, LmBackendConfig, build_lm
from dragsim.routing import Network, SearchParams, SearchTrace
from dragsim.topology import Topology, generate_ba

logger = logging.getLogger(__name__)

ALL_SCHEMES = ("tarw", "rw", "fl", "crag", "norag")
PLACEMENTS = ("uniform", "by_topic")
SCORERS = ("oracle", "lexical", "embedding")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    record_id: str
    question: str
    gold_answer: str
    support_text: str
    topic: str | None = None
    private: bool = False

    def snippet(self, topics: Iterable[str]) -> KnowledgeSnippet:
        return KnowledgeSnippet(f"s-{self.record_id}", self.support_text, frozenset(topics), self.record_id, self.private)


_REQUIRED = ("record_id", "question", "gold_answer", "support_text")


def ingest(path: str | Path, fmt: str = "jsonl") -> list[DatasetRecord]:
    """Read normalized JSON-lines records, one object per line."""
    if fmt != "jsonl":
        raise DatasetError(f"unsupported dataset format {fmt!r}")
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: expected a JSON object")
            for name in _REQUIRED:
                value = obj.get(name)
                if value is None or not str(value).strip():
                    raise DatasetError(f"line {lineno}: missing field {name!r}")
            rid = str(obj["record_id"])
            if rid in seen:
                raise DatasetError(f"line {lineno}: duplicate record_id {rid!r}")
            seen.add(rid)
            topic = obj.get("topic")
            records.append(
                DatasetRecord(
                    rid, str(obj["question"]), str(obj["gold_answer"]), str(obj["support_text"]),
                    str(topic) if topic else None, bool(obj.get("private", False)),
                )
            )
    return records


def write_records(records: Iterable[DatasetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            d = {k: v for k, v in asdict(r).items() if v not in (None, False)}
            fh.write(json.dumps(d, sort_keys=True) + "\n")


_SYLLABLES = ["zor", "vex", "lan", "tri", "mel", "quo", "dar", "nis", "pha", "kel", "ost", "umi", "bre", "syl", "tor", "gan"]
_SPECIALTIES = [
    "cardiology", "neurology", "dermatology", "oncology", "pulmonology", "nephrology",
    "hepatology", "hematology", "endocrinology", "rheumatology", "ophthalmology", "urology",
]
_SYMPTOMS = ["fatigue", "fever", "dizziness", "rash", "joint pain", "blurred vision", "cough", "nausea", "tremor", "chest pain"]


def synthetic_records(n_records: int = 400, n_topics: int = 40, seed: int = 0) -> list[DatasetRecord]:
    """Fabricated condition/treatment question-answer pairs with ``n_topics`` topics."""
    rng = random.Random(seed)
    topics = [f"{_SPECIALTIES[i % len(_SPECIALTIES)]} {i // len(_SPECIALTIES) + 1}" for i in range(n_topics)]
    names: set[str] = set()
    out = []
    for i in range(n_records):
        while True:
            name = "".join(rng.choice(_SYLLABLES) for _ in range(3)).capitalize()
            if name not in names:
                names.add(name)
                break
        drug = "".join(rng.choice(_SYLLABLES) for _ in range(2)) + "amab"
        topic = topics[i % n_topics]
        symptom = rng.choice(_SYMPTOMS)
        out.append(
            DatasetRecord(
                record_id=f"r{i:05d}",
                question=f"What is the recommended treatment for {name} syndrome?",
                gold_answer=f"{drug} therapy",
                support_text=f"{name} syndrome is a {topic} condition presenting with {symptom}. It is treated with {drug} therapy.",
                topic=topic,
            )
        )
    return out


# -- placement ----------------------------------------------------------------


def record_topics(record: DatasetRecord, lm: LanguageModel | None) -> tuple[str, ...]:
    if record.topic:
        return (record.topic,)
    if lm is None:
        raise DatasetError(f"record {record.record_id} has no topic and no lm to extract one")
    return lm.extract_topics(record.support_text).topics


def place_knowledge(
    records: Sequence[DatasetRecord],
    topology: Topology,
    strategy: str = "uniform",
    seed: int = 0,
    lm: LanguageModel | None = None,
) -> tuple[list[PeerStore], dict[str, int]]:
    """Distribute one snippet per record over the peers.

    ``uniform`` puts each snippet on a uniformly random peer. ``by_topic`` deals
    topics round-robin over a seeded shuffle of the peers, so each peer hosts
    whole topics. Returns the stores and a record_id -> peer index that only the
    harness may read.
    """
    if strategy not in PLACEMENTS:
        raise ValueError(f"unknown placement {strategy!r}")
    rng = random.Random(seed)
    n = topology.n
    stores = [PeerStore(p) for p in range(n)]
    index: dict[str, int] = {}
    tagged = [(r, record_topics(r, lm)) for r in records]
    if strategy == "uniform":
        for r, topics in tagged:
            index[r.record_id] = rng.randrange(n)
    else:
        peers = list(range(n))
        rng.shuffle(peers)
        primary = sorted({topics[0] for _, topics in tagged})
        owner = {t: peers[i % n] for i, t in enumerate(primary)}
        for r, topics in tagged:
            index[r.record_id] = owner[topics[0]]
    for r, topics in tagged:
        stores[index[r.record_id]].insert(r.snippet(topics))
    return stores, index


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    dataset_format: str = "jsonl"
    synthetic_records: int = 400
    synthetic_topics: int = 40
    synthetic_seed: int = 0
    scheme: str = "tarw"
    n: int = 20
    m: int = 4
    k: int = 4
    h_max: int = 6
    theta: float = 0.8
    lm: str = "mock"
    lm_url: str = ""
    model: str = "llama3.2:3b"
    lm_timeout: float = 60.0
    scorer: str = "oracle"
    placement: str = "uniform"
    crag_variant: str = "full"
    n_queries: int = 1000
    seed_topology: int = 1
    seed_placement: int = 1
    seed_walk: int = 1
    normalize: bool = True
    learn: bool = True
    out_dir: str | None = None

    def __post_init__(self):
        if self.scheme not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.crag_variant not in CRAG_VARIANTS:
            raise ValueError(f"unknown CRAG variant {self.crag_variant!r}")
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}")
        if self.n_queries < 0:
            raise ValueError("n_queries must be >= 0")
        self.search_params()
        self.lm_config()

    def search_params(self) -> SearchParams:
        scheme = self.scheme if self.scheme in ("tarw", "rw", "fl") else "tarw"
        return SearchParams(self.h_max, self.k, self.theta, scheme)

    def lm_config(self) -> LmBackendConfig:
        return LmBackendConfig(kind=self.lm, base_url=self.lm_url, model_name=self.model, timeout=self.lm_timeout)

    def echo(self) -> dict:
        return {
            "scheme": self.scheme,
            "dataset": self.dataset or f"synthetic-{self.synthetic_records}x{self.synthetic_topics}",
            "llm": self.lm if self.lm == "mock" else self.model,
            "n": self.n, "m": self.m, "k": self.k, "h_max": self.h_max, "theta": self.theta,
            "placement": self.placement, "crag_variant": self.crag_variant,
            "seed_topology": self.seed_topology, "seed_placement": self.seed_placement,
            "seed_walk": self.seed_walk, "scorer": self.scorer,
        }


@dataclass
class RunOutput:
    report: MetricsReport
    traces: list[SearchTrace]
    answers: list[Answer]
    index: dict[str, int] = field(default_factory=dict)


def load_records(cfg: ExperimentConfig) -> list[DatasetRecord]:
    if cfg.dataset:
        return ingest(cfg.dataset, cfg.dataset_format)
    return synthetic_records(cfg.synthetic_records, cfg.synthetic_topics, cfg.synthetic_seed)


def build_scorer(kind: str, records: Sequence[DatasetRecord], lm: LanguageModel) -> Scorer:
    if kind == "oracle":
        return OracleScorer({r.question: r.record_id for r in records})
    if kind == "lexical":
        return LexicalScorer()
    return EmbeddingScorer(lm)


def query_stream(records: Sequence[DatasetRecord], n_queries: int, n_peers: int, seed_walk: int) -> list[Query]:
    """Questions round-robin over the records; origins uniform from a walk-seeded stream."""
    if n_queries and not records:
        raise DatasetError("no records to draw queries from")
    origin_rng = random.Random(f"origins:{seed_walk}")
    out = []
    for i in range(n_queries):
        r = records[i % len(records)]
        out.append(Query(f"q{i:06d}", r.question, origin_rng.randrange(n_peers), r.gold_answer))
    return out


def simulate(cfg: ExperimentConfig, records: Sequence[DatasetRecord] | None = None, lm: LanguageModel | None = None) -> RunOutput:
    """Run one experiment cell in memory."""
    if records is None:
        records = load_records(cfg)
    if lm is None:
        lm = build_lm(cfg.lm_config(), records, seed=cfg.seed_walk)
    lm.check(need_embeddings=cfg.scorer == "embedding")
    scorer = build_scorer(cfg.scorer, records, lm)
    topology = generate_ba(cfg.n, cfg.m, cfg.seed_topology)
    stores, index = place_knowledge(records, topology, cfg.placement, cfg.seed_placement, lm)
    queries = query_stream(records, cfg.n_queries, topology.n, cfg.seed_walk)
    params = cfg.search_params()
    traces: list[SearchTrace] = []
    answers: list[Answer] = []

    if cfg.scheme in ("tarw", "rw", "fl"):
        net = Network.build(topology, stores, scorer)
        walk_rng = random.Random(cfg.seed_walk)
        for q in queries:
            ans, tr = answer_query_drag(net, q, params, lm, walk_rng, learn=cfg.learn)
            answers.append(ans)
            traces.append(tr)
    elif cfg.scheme == "crag":
        snippets = [s for store in stores for s in store]
        snippets.sort(key=lambda s: s.snippet_id)
        kb = build_central_kb(snippets, cfg.crag_variant, cfg.seed_placement)
        for q in queries:
            ans, tr = answer_query_crag(q, kb, lm, scorer, cfg.theta)
            answers.append(ans)
            traces.append(tr)
    else:
        for q in queries:
            ans, tr = answer_query_norag(q, lm)
            answers.append(ans)
            traces.append(tr)

    golds = {q.query_id: q.gold_answer for q in queries}
    report = aggregate(traces, answers, golds, cfg.echo(), cfg.normalize)
    report.scheme = cfg.scheme
    return RunOutput(report, traces, answers, index)


def write_outputs(out: RunOutput, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "traces.jsonl", "w", encoding="utf-8") as fh:
        for t in out.traces:
            fh.write(t.to_json() + "\n")
    with open(out_dir / "answers.jsonl", "w", encoding="utf-8") as fh:
        for a in out.answers:
            fh.write(a.to_json() + "\n")
    (out_dir / "report.json").write_text(out.report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(csv_text([out.report.csv_row()]), encoding="utf-8")


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    out = simulate(cfg)
    if cfg.out_dir:
        write_outputs(out, cfg.out_dir)
    return out.report


# -- sweeps -------------------------------------------------------------------


def expand_grid(base: ExperimentConfig, axes: Mapping[str, Sequence]) -> list[ExperimentConfig]:
    """Cartesian product of ``axes`` over ``base``; the last axis varies fastest."""
    names = list(axes)
    known = {f.name for f in fields(ExperimentConfig)}
    for name in names:
        if name not in known:
            raise ValueError(f"unknown sweep axis {name!r}")
    cells = []
    for combo in itertools.product(*(axes[n] for n in names)):
        cells.append(replace(base, out_dir=None, **dict(zip(names, combo))))
    return cells


def _run_cell(cfg: ExperimentConfig) -> dict:
    try:
        return run_experiment(cfg).csv_row()
    except Exception as exc:  # a failed cell becomes an error row
        logger.exception("sweep cell failed")
        row = MetricsReport(cfg.scheme, 0, None, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, cfg.echo(), f"{type(exc).__name__}: {exc}")
        return row.csv_row()


def run_sweep(cells: Sequence[ExperimentConfig], workers: int = 1, out_path: str | Path | None = None) -> str:
    """One CSV row per cell, in cell order."""
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    text = csv_text(rows)
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8")
    return text
