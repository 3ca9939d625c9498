"""Retrieval-augmented generation over a hypergraph-structured knowledge base.

Text is chunked, an LLM extracts entities plus pairwise (low-order) and
multi-entity (high-order) correlations, and the result is stored as a
hypergraph with vector indexes over chunks, vertices and hyperedges. At query
time keywords are matched against vertices and hyperedges, expanded by one
hop of incidence, and packed into the prompt under a token budget.
"""

from .corpus import Chunk, ChunkingConfig, Document, chunk_corpus, load_corpus, tokenize
from .errors import (
    ConfigurationError,
    EmptyDocumentError,
    ExtractionEmptyError,
    HyperRAGError,
    IntegrityError,
    InvalidNameError,
    MissingBindingError,
    TransportError,
)
from .evaluation import GeneratedQuestion, ScoreCard, VoteCard, aggregate, generate_questions, score_response, select_better
from .extraction import ExtractionConfig, ExtractionReport, build_knowledge_base, ingest
from .hypergraph import Hyperedge, KnowledgeBase, Vertex, canonical_name
from .llm import LLMGateway, MockLLM, mock_gateway
from .retrieval import MODES, ModeMask, RetrievalConfig, Retriever, assemble_context
from .vector_index import EmbeddingRecord, QueryVector, VectorIndex
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "ChunkingConfig",
    "ConfigurationError",
    "Document",
    "EmbeddingRecord",
    "EmptyDocumentError",
    "ExtractionConfig",
    "ExtractionEmptyError",
    "ExtractionReport",
    "GeneratedQuestion",
    "HyperRAGError",
    "Hyperedge",
    "IntegrityError",
    "InvalidNameError",
    "KnowledgeBase",
    "LLMGateway",
    "MODES",
    "MissingBindingError",
    "MockLLM",
    "ModeMask",
    "QueryVector",
    "RetrievalConfig",
    "Retriever",
    "ScoreCard",
    "TransportError",
    "Vertex",
    "VectorIndex",
    "VoteCard",
    "Workspace",
    "aggregate",
    "assemble_context",
    "build_knowledge_base",
    "canonical_name",
    "chunk_corpus",
    "generate_questions",
    "ingest",
    "load_corpus",
    "mock_gateway",
    "score_response",
    "select_better",
    "tokenize",
]
