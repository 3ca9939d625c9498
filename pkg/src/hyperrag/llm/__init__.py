from .gateway import (
    API_KEY_ENV,
    CompletionRequest,
    CompletionResult,
    HashEmbedder,
    LLMGateway,
    OpenAICompatibleBackend,
    RemoteEmbedder,
    TransientError,
    Usage,
)
from .mock import MockLLM
from .prompts import CATALOG, DEFAULT_ENTITY_TYPES, PromptTemplate, TemplateId, render_prompt
from .records import ExtractionRecord, ParsedRecords, parse_records, parse_strength, serialize_records


def mock_gateway(fixture_dir=None, *, dim: int = 256, seed: int = 0, **kwargs) -> LLMGateway:
    """Gateway wired to the offline mock model and hash embeddings."""
    return LLMGateway(MockLLM(fixture_dir), HashEmbedder(dim, seed), model="mock", **kwargs)


__all__ = [
    "API_KEY_ENV",
    "CATALOG",
    "CompletionRequest",
    "CompletionResult",
    "DEFAULT_ENTITY_TYPES",
    "ExtractionRecord",
    "HashEmbedder",
    "LLMGateway",
    "MockLLM",
    "OpenAICompatibleBackend",
    "ParsedRecords",
    "PromptTemplate",
    "RemoteEmbedder",
    "TemplateId",
    "TransientError",
    "Usage",
    "mock_gateway",
    "parse_records",
    "parse_strength",
    "render_prompt",
    "serialize_records",
]
