from __future__ import annotations

import pytest

from dragsim.harness import DatasetRecord
from dragsim.knowledge import KnowledgeSnippet, OracleScorer, PeerStore
from dragsim.lm import MockLanguageModel
from dragsim.routing import Network

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def record(i: int, topic: str = "flu") -> DatasetRecord:
    return DatasetRecord(
        record_id=f"r{i}",
        question=f"question number {i} about {topic}?",
        gold_answer=f"answer {i}",
        support_text=f"support text {i} on {topic}",
        topic=topic,
    )


def snippet_for(rec: DatasetRecord, private: bool = False) -> KnowledgeSnippet:
    return KnowledgeSnippet(f"s-{rec.record_id}", rec.support_text, frozenset([rec.topic]), rec.record_id, private)


def make_net(topology, placement: dict[int, list[DatasetRecord]], records, private=frozenset()):
    """Network with an oracle scorer; ``placement`` maps peer -> records it hosts."""
    stores = [PeerStore(p) for p in range(topology.n)]
    for peer, recs in placement.items():
        for r in recs:
            stores[peer].insert(snippet_for(r, r.record_id in private))
    scorer = OracleScorer({r.question: r.record_id for r in records})
    return Network.build(topology, stores, scorer)


@pytest.fixture
def records():
    return [record(i, topic=["flu", "cardiology", "oncology"][i % 3]) for i in range(9)]


@pytest.fixture
def mock_lm(records):
    return MockLanguageModel(records)
