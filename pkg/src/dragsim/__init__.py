"""Simulator and experiment harness for retrieval-augmented generation over a
peer-to-peer overlay."""

from dragsim.topology import Topology, generate_ba
from dragsim.knowledge import KnowledgeSnippet, PeerStore, Query
from dragsim.routing import ExpertiseCache, SearchParams, SearchTrace

__all__ = [
    "ExpertiseCache",
    "KnowledgeSnippet",
    "PeerStore",
    "Query",
    "SearchParams",
    "SearchTrace",
    "Topology",
    "generate_ba",
]

__version__ = "0.1.0"
