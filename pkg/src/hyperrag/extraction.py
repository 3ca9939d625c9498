"""Corpus structuring: chunks -> entities, low/high-order correlations -> store + index."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import Chunk, ChunkingConfig, chunk_corpus, load_corpus, tokenize
from .errors import ExtractionEmptyError, InvalidNameError
from .hypergraph import Hyperedge, KnowledgeBase, Vertex, canonical_name, edge_id
from .llm.gateway import LLMGateway
from .llm.prompts import DEFAULT_ENTITY_TYPES, TemplateId
from .llm.records import ExtractionRecord, parse_records, parse_strength
from .vector_index import EmbeddingRecord, VectorIndex
from .workspace import REPORT_FILE, Workspace, dump_json

logger = logging.getLogger(__name__)

REPROMPT_SUFFIX = (
    "\nYour previous reply contained no record that follows the Output Format. "
    "Reply again using exactly the block layout described above.\n"
)


@dataclass
class ExtractionConfig:
    entity_types: tuple[str, ...] = DEFAULT_ENTITY_TYPES
    parallelism: int = 4
    reprompt: bool = True
    # LLM-merge descriptions only when an item has more fragments than this
    summarize: bool = False
    summarize_threshold: int = 6
    embed_max_tokens: int = 512
    payload_chars: int = 200


@dataclass
class ExtractionReport:
    chunks_processed: int = 0
    entities: int = 0
    low_edges: int = 0
    high_edges: int = 0
    stub_vertices: int = 0
    entity_free_chunks: int = 0
    raw_records: int = 0
    accepted_records: int = 0
    dropped_records: int = 0
    reprompts: int = 0
    elapsed: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        data = asdict(self)
        if not include_timing:
            data.pop("elapsed")
        return data


@dataclass
class Tally:
    """Per-chunk record accounting; raw_records == accepted + dropped."""

    raw_records: int = 0
    accepted_records: int = 0
    dropped_records: int = 0
    reprompts: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def drop(self, message: str) -> None:
        self.dropped_records += 1
        self.accepted_records -= 1
        self.diagnostics.append(message)


def _ask_records(
    gateway: LLMGateway,
    template: TemplateId,
    bindings: dict,
    kind: str,
    tally: Tally,
    reprompt: bool,
) -> list[ExtractionRecord]:
    attempts = 2 if reprompt else 1
    for attempt in range(attempts):
        suffix = REPROMPT_SUFFIX if attempt else ""
        if attempt:
            tally.reprompts += 1
        raw = gateway.ask(template, bindings, suffix=suffix).text
        try:
            parsed = parse_records(raw, kind)
        except ExtractionEmptyError as exc:
            tally.diagnostics.extend(exc.diagnostics)
            n_dropped = sum("dropped" in d for d in exc.diagnostics)
            tally.raw_records += n_dropped
            tally.dropped_records += n_dropped
            continue
        tally.raw_records += parsed.raw_count
        tally.accepted_records += len(parsed.records)
        tally.dropped_records += parsed.dropped
        tally.diagnostics.extend(parsed.diagnostics)
        return parsed.records
    tally.diagnostics.append(f"no {kind} records after {attempts} attempt(s)")
    return []


def _names_binding(names: Iterable[str]) -> str:
    return ", ".join(names)


def extract_entities(
    gateway: LLMGateway,
    chunk: Chunk,
    *,
    entity_types: Iterable[str] = DEFAULT_ENTITY_TYPES,
    tally: Tally | None = None,
    reprompt: bool = True,
) -> list[ExtractionRecord]:
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} is empty")
    tally = tally if tally is not None else Tally()
    records = _ask_records(
        gateway,
        TemplateId.EXT_ENTITY,
        {"entity_types": ", ".join(entity_types), "chunk": chunk.text},
        "entity",
        tally,
        reprompt,
    )
    kept = []
    for rec in records:
        try:
            canonical_name(rec.get("entity_name"))
        except InvalidNameError:
            tally.drop(f"{chunk.chunk_id}: entity with blank name")
            continue
        kept.append(rec)
    return kept


def extract_low_order(
    gateway: LLMGateway,
    chunk: Chunk,
    entities: list[str],
    *,
    tally: Tally | None = None,
    reprompt: bool = True,
) -> list[ExtractionRecord]:
    """Pairwise correlations among the chunk's own entities."""
    tally = tally if tally is not None else Tally()
    if len(entities) < 2:
        return []
    known = {canonical_name(e) for e in entities}
    records = _ask_records(
        gateway,
        TemplateId.EXT_LOW,
        {"entities": _names_binding(entities), "chunk": chunk.text},
        "low_order",
        tally,
        reprompt,
    )
    kept = []
    for rec in records:
        try:
            names = [canonical_name(n) for n in rec.values("entities_pair")]
        except InvalidNameError:
            names = []
        if len(names) != 2:
            tally.drop(f"{chunk.chunk_id}: low-order record names {len(names)} entities, expected 2")
            continue
        if names[0] == names[1]:
            tally.drop(f"{chunk.chunk_id}: low-order record relates {names[0]} to itself")
            continue
        if parse_strength(rec.get("low_order_relationship_strength")) is None:
            tally.drop(f"{chunk.chunk_id}: low-order record with unreadable strength")
            continue
        unknown = [n for n in names if n not in known]
        if unknown:
            tally.diagnostics.append(f"{chunk.chunk_id}: low-order record references unlisted {unknown}")
        kept.append(rec)
    return kept


def extract_high_order(
    gateway: LLMGateway,
    chunk: Chunk,
    entities: list[str],
    *,
    tally: Tally | None = None,
    reprompt: bool = True,
) -> list[ExtractionRecord]:
    """Beyond-pairwise entity sets; duplicates inside a set are collapsed."""
    tally = tally if tally is not None else Tally()
    if len(entities) < 3:
        return []
    known = {canonical_name(e) for e in entities}
    records = _ask_records(
        gateway,
        TemplateId.EXT_HIGH,
        {"entities": _names_binding(entities), "chunk": chunk.text},
        "high_order",
        tally,
        reprompt,
    )
    kept = []
    for rec in records:
        try:
            members = sorted({canonical_name(n) for n in rec.values("entities_set")})
        except InvalidNameError:
            members = []
        if len(members) < 3:
            tally.drop(f"{chunk.chunk_id}: high-order record has {len(members)} distinct entities, expected >= 3")
            continue
        if parse_strength(rec.get("high_order_relationship_strength")) is None:
            tally.drop(f"{chunk.chunk_id}: high-order record with unreadable strength")
            continue
        unknown = [n for n in members if n not in known]
        if unknown:
            tally.diagnostics.append(f"{chunk.chunk_id}: high-order record references unlisted {unknown}")
        fields = dict(rec.fields, entities_set=", ".join(members))
        kept.append(ExtractionRecord("high_order", fields))
    return kept


@dataclass
class ChunkExtraction:
    chunk_id: str
    entities: list[ExtractionRecord]
    low: list[ExtractionRecord]
    high: list[ExtractionRecord]
    tally: Tally


def process_chunk(gateway: LLMGateway, chunk: Chunk, cfg: ExtractionConfig) -> ChunkExtraction:
    tally = Tally()
    entities = extract_entities(gateway, chunk, entity_types=cfg.entity_types, tally=tally, reprompt=cfg.reprompt)
    names = list(dict.fromkeys(canonical_name(r.get("entity_name")) for r in entities))
    low = extract_low_order(gateway, chunk, names, tally=tally, reprompt=cfg.reprompt)
    high = extract_high_order(gateway, chunk, names, tally=tally, reprompt=cfg.reprompt)
    return ChunkExtraction(chunk.chunk_id, entities, low, high, tally)


def _truncate(text: str, max_tokens: int) -> str:
    tokens = tokenize(text)
    return text if len(tokens) <= max_tokens else " ".join(tokens[:max_tokens])


def vertex_embedding_text(v: Vertex, max_tokens: int = 512) -> str:
    return _truncate(f"{v.name}: {v.description}" if v.description else v.name, max_tokens)


def edge_embedding_text(e: Hyperedge, max_tokens: int = 512) -> str:
    head = " | ".join(e.key)
    return _truncate(f"{head}: {e.description}" if e.description else head, max_tokens)


def _summarize(gateway: LLMGateway, kb: KnowledgeBase, cfg: ExtractionConfig) -> None:
    for v in kb.vertices.values():
        if len(v.description_fragments) > cfg.summarize_threshold:
            v.summary = gateway.ask(
                TemplateId.MERGE_DESCRIPTIONS,
                {"item_kind": "entity", "name": v.name, "descriptions": "\n".join(t for _, t in v.description_fragments)},
            ).text.strip()
    for e in kb.hyperedges.values():
        if len(e.description_fragments) > cfg.summarize_threshold:
            e.summary = gateway.ask(
                TemplateId.MERGE_DESCRIPTIONS,
                {
                    "item_kind": "relationship",
                    "name": " | ".join(e.key),
                    "descriptions": "\n".join(t for _, t in e.description_fragments),
                },
            ).text.strip()


def embed_workspace(gateway: LLMGateway, kb: KnowledgeBase, chunks: Iterable[Chunk], cfg: ExtractionConfig) -> VectorIndex:
    """Embed every chunk, vertex and hyperedge into a fresh index."""
    items: list[tuple[str, str, str, dict]] = []
    for c in sorted(chunks, key=lambda c: c.chunk_id):
        items.append(("chunks", c.chunk_id, c.text, {"doc_id": c.doc_id}))
    for name in sorted(kb.vertices):
        v = kb.vertices[name]
        items.append(("vertices", name, vertex_embedding_text(v, cfg.embed_max_tokens), {"entity_type": v.entity_type}))
    for key in sorted(kb.hyperedges):
        e = kb.hyperedges[key]
        items.append(
            ("hyperedges", edge_id(key), edge_embedding_text(e, cfg.embed_max_tokens), {"order_class": e.order_class, "arity": e.arity})
        )
    with ThreadPoolExecutor(max_workers=max(1, cfg.parallelism)) as pool:
        vectors = list(pool.map(lambda item: gateway.embed(item[2]), items))
    index = VectorIndex(gateway.dim)
    for (collection, id_, text, meta), vec in zip(items, vectors):
        index.insert(EmbeddingRecord(collection, id_, vec, text[: cfg.payload_chars], meta))
    return index


def build_knowledge_base(
    chunks: list[Chunk],
    gateway: LLMGateway,
    cfg: ExtractionConfig | None = None,
) -> tuple[KnowledgeBase, VectorIndex, ExtractionReport]:
    """Extract, merge and embed a chunked corpus.

    Model calls run in a bounded worker pool; merging happens on the calling
    thread in chunk-id order, so the store has a single writer.
    """
    cfg = cfg or ExtractionConfig()
    start = time.perf_counter()
    kb = KnowledgeBase()
    report = ExtractionReport()
    ordered = sorted(chunks, key=lambda c: c.chunk_id)

    def work(chunk: Chunk) -> ChunkExtraction:
        return process_chunk(gateway, chunk, cfg)

    with ThreadPoolExecutor(max_workers=max(1, cfg.parallelism)) as pool:
        results = list(pool.map(work, ordered))

    for res in results:
        report.chunks_processed += 1
        if not res.entities:
            report.entity_free_chunks += 1
        for rec in res.entities:
            kb.upsert_vertex(rec, res.chunk_id)
        for rec in res.low + res.high:
            if kb.upsert_hyperedge(rec, res.chunk_id) is None:
                res.tally.drop(f"{res.chunk_id}: store rejected correlation record")
        report.raw_records += res.tally.raw_records
        report.accepted_records += res.tally.accepted_records
        report.dropped_records += res.tally.dropped_records
        report.reprompts += res.tally.reprompts
        for message in res.tally.diagnostics:
            logger.debug(message)

    if cfg.summarize:
        _summarize(gateway, kb, cfg)
    kb.check_invariants()
    index = embed_workspace(gateway, kb, ordered, cfg)

    stats = kb.stats()
    report.entities = stats["vertices"]
    report.low_edges = stats["low_edges"]
    report.high_edges = stats["high_edges"]
    report.stub_vertices = stats["stub_vertices"]
    report.elapsed = time.perf_counter() - start
    return kb, index, report


def ingest(
    corpus_path: str | Path,
    workdir: str | Path,
    gateway: LLMGateway,
    *,
    chunking: ChunkingConfig | None = None,
    cfg: ExtractionConfig | None = None,
    include_timing: bool = True,
    extra: dict | None = None,
) -> ExtractionReport:
    """Load, chunk, structure and persist a corpus into ``workdir``.

    ``extra`` entries (for example the embedder settings) are merged into
    ``report.json``.
    """
    docs = load_corpus(corpus_path)
    chunks = chunk_corpus(docs, chunking or ChunkingConfig())
    kb, index, report = build_knowledge_base(chunks, gateway, cfg)
    workdir = Path(workdir)
    Workspace(kb=kb, index=index, chunks={c.chunk_id: c for c in chunks}).persist(workdir)
    dump_json(workdir / REPORT_FILE, {**report.to_dict(include_timing), **(extra or {})})
    logger.info("ingested %d chunks: %d vertices, %d low / %d high edges", len(chunks), report.entities, report.low_edges, report.high_edges)
    return report

