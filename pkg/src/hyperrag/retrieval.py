"""Query-time retrieval: keywords -> vector hits -> one-hop diffusion -> packed context -> answer."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import count_tokens
from .errors import ExtractionEmptyError
from .hypergraph import EdgeKey, KnowledgeBase, edge_id, parse_edge_id
from .llm.gateway import LLMGateway
from .llm.prompts import TemplateId, render_prompt
from .llm.records import parse_records
from .vector_index import QueryVector
from .workspace import Workspace

logger = logging.getLogger(__name__)

SECTION_ORDER = ("entities", "low_edges", "high_edges", "chunks")
SECTION_HEADERS = {
    "entities": "---Entities---",
    "low_edges": "---Low-Order Correlations---",
    "high_edges": "---High-Order Correlations---",
    "chunks": "---Source Text---",
}


@dataclass(frozen=True)
class ModeMask:
    use_chunks: bool = False
    use_low: bool = False
    use_high: bool = False
    lite: bool = False

    @classmethod
    def from_bits(cls, bits: str, lite: bool = False) -> "ModeMask":
        """Parse a ``DLH`` string such as ``"011"`` (chunks, low, high)."""
        if len(bits) != 3 or set(bits) - {"0", "1"}:
            raise ValueError(f"mask must be three 0/1 digits (chunks, low, high), got {bits!r}")
        return cls(bits[0] == "1", bits[1] == "1", bits[2] == "1", lite)

    @classmethod
    def from_mode(cls, mode: str) -> "ModeMask":
        try:
            return MODES[mode]
        except KeyError:
            raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}") from None

    @property
    def bits(self) -> str:
        return "".join("1" if f else "0" for f in (self.use_chunks, self.use_low, self.use_high))

    @property
    def uses_structure(self) -> bool:
        return self.use_low or self.use_high

    @property
    def is_plain(self) -> bool:
        return not (self.use_chunks or self.uses_structure)

    @property
    def label(self) -> str:
        return self.bits + ("-lite" if self.lite else "")


MODES: dict[str, ModeMask] = {
    "llm": ModeMask(),
    "rag": ModeMask(use_chunks=True),
    "graph": ModeMask(use_chunks=True, use_low=True),
    "hyper": ModeMask(True, True, True),
    "hyper-lite": ModeMask(True, True, True, lite=True),
}

ALL_MASKS = tuple(ModeMask.from_bits(f"{i:03b}") for i in range(8))


@dataclass
class RetrievalConfig:
    k_vertices: int = 20
    k_edges: int = 20
    k_chunks: int = 5
    budget: int | None = 6000
    structure_share: float = 0.5
    metric: str = "cosine"
    strength_scale: float = 10.0


@dataclass
class KeywordSets:
    entity_keywords: list[str] = field(default_factory=list)
    correlation_keywords: list[str] = field(default_factory=list)


@dataclass
class RetrievalBundle:
    v_rel: dict[str, float] = field(default_factory=dict)
    e_more: dict[EdgeKey, float] = field(default_factory=dict)
    e_rel: dict[EdgeKey, float] = field(default_factory=dict)
    v_more: dict[str, float] = field(default_factory=dict)
    chunk_hits: dict[str, float] = field(default_factory=dict)


@dataclass
class ContextItem:
    section: str
    item_id: str
    score: float
    strength: float | None
    text: str
    source_chunks: tuple[str, ...] = ()


@dataclass
class RetrievalContext:
    sections: list[tuple[str, str]] = field(default_factory=list)
    token_total: int = 0
    provenance: list[tuple[str, float, float | None]] = field(default_factory=list)
    items: list[ContextItem] = field(default_factory=list)

    def render(self) -> str:
        return "\n".join(f"{SECTION_HEADERS[kind]}\n{text}" for kind, text in self.sections)

    def knowledge_section(self) -> str:
        return f"---Knowledge---\n{self.render()}\n" if self.sections else ""


def _dedupe(words: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for w in words:
        w = w.strip()
        if w and w.lower() not in seen:
            seen.add(w.lower())
            out.append(w)
    return out


def _one_line(text: str) -> str:
    return " ".join(text.split())


def diffuse_from_vertices(
    kb: KnowledgeBase, v_rel: Mapping[str, float], strength_scale: float = 10.0
) -> dict[EdgeKey, float]:
    """All hyperedges incident to any retrieved vertex, scored parent-sim x strength."""
    out: dict[EdgeKey, float] = {}
    for name, sim in v_rel.items():
        for edge in kb.incident_edges(name):
            score = sim * edge.strength / strength_scale
            if edge.key not in out or score > out[edge.key]:
                out[edge.key] = score
    return out


def diffuse_from_edges(
    kb: KnowledgeBase, e_rel: Mapping[EdgeKey, float], strength_scale: float = 10.0
) -> dict[str, float]:
    """All member vertices of the retrieved hyperedges."""
    out: dict[str, float] = {}
    for key, sim in e_rel.items():
        edge = kb.hyperedges[key]
        score = sim * edge.strength / strength_scale
        for name in key:
            if name not in out or score > out[name]:
                out[name] = score
    return out


def _candidate_items(ws: Workspace, bundle: RetrievalBundle, mask: ModeMask) -> list[ContextItem]:
    kb = ws.kb
    items: list[ContextItem] = []
    if mask.uses_structure:
        vertices: dict[str, float] = {}
        for source in (bundle.v_rel, bundle.v_more):
            for name, score in source.items():
                vertices[name] = max(score, vertices.get(name, float("-inf")))
        for name, score in vertices.items():
            v = kb.vertices[name]
            desc = _one_line(v.description) or "(no description)"
            items.append(
                ContextItem("entities", f"vertex:{name}", score, None, f"{name} ({v.entity_type}): {desc}", tuple(sorted(v.source_chunks)))
            )
        edges: dict[EdgeKey, float] = {}
        for source in (bundle.e_rel, bundle.e_more):
            for key, score in source.items():
                edges[key] = max(score, edges.get(key, float("-inf")))
        for key, score in edges.items():
            e = kb.hyperedges[key]
            if (e.order_class == "low" and not mask.use_low) or (e.order_class == "high" and not mask.use_high):
                continue
            section = "low_edges" if e.order_class == "low" else "high_edges"
            kw = f" (keywords: {', '.join(sorted(e.keywords))})" if e.keywords else ""
            text = f"{' | '.join(key)} [strength {e.strength:.1f}]: {_one_line(e.description)}{kw}"
            items.append(ContextItem(section, f"edge:{edge_id(key)}", score, e.strength, text, tuple(sorted(e.source_chunks))))
    items.sort(key=lambda it: (-it.score, SECTION_ORDER.index(it.section), it.item_id))
    return items


class _Packer:
    def __init__(self):
        self.opened: set[str] = set()
        self.used = 0
        self.chosen: list[ContextItem] = []

    def cost(self, item: ContextItem) -> int:
        header = 0 if item.section in self.opened else count_tokens(SECTION_HEADERS[item.section])
        return header + count_tokens(item.text)

    def fill(self, items: list[ContextItem], limit: float) -> None:
        for item in items:
            c = self.cost(item)
            if self.used + c > limit:
                break
            self.used += c
            self.opened.add(item.section)
            self.chosen.append(item)


def assemble_context(
    ws: Workspace,
    bundle: RetrievalBundle,
    mask: ModeMask,
    budget: int | None,
    structure_share: float = 0.5,
) -> RetrievalContext:
    """Rank retrieved items and pack them greedily under a token budget.

    Structure-derived items take at most ``structure_share`` of the budget
    when chunks are enabled; chunks get whatever remains. ``budget=None``
    means unbounded.
    """
    if budget is not None and budget < 0:
        raise ValueError("budget must be >= 0")
    total = float("inf") if budget is None else budget
    packer = _Packer()
    structural = _candidate_items(ws, bundle, mask)
    packer.fill(structural, total * structure_share if mask.use_chunks else total)

    if mask.use_chunks:
        chunk_scores = dict(bundle.chunk_hits)
        for item in packer.chosen:
            for cid in item.source_chunks:
                if cid in ws.chunks:
                    chunk_scores[cid] = max(item.score, chunk_scores.get(cid, float("-inf")))
        chunk_items = [
            ContextItem("chunks", f"chunk:{cid}", score, None, f"[{cid}] {_one_line(ws.chunks[cid].text)}")
            for cid, score in chunk_scores.items()
        ]
        chunk_items.sort(key=lambda it: (-it.score, it.item_id))
        packer.fill(chunk_items, total)

    by_section: dict[str, list[ContextItem]] = {s: [] for s in SECTION_ORDER}
    for item in packer.chosen:
        by_section[item.section].append(item)
    ctx = RetrievalContext(token_total=packer.used)
    for section in SECTION_ORDER:
        if by_section[section]:
            ctx.sections.append((section, "\n".join(it.text for it in by_section[section])))
            ctx.items.extend(by_section[section])
    ctx.provenance = [(it.item_id, it.score, it.strength) for it in ctx.items]
    return ctx


@dataclass
class Answer:
    question: str
    mask: ModeMask
    response: str
    prompt: str
    context: RetrievalContext
    keywords: KeywordSets
    bundle: RetrievalBundle
    retrieval_seconds: float
    model_seconds: float
    vector_queries: dict[str, int]

    def trace(self, include_timing: bool = True) -> dict:
        b = self.bundle
        ranked = lambda d, fmt=str: [[fmt(k), round(v, 12)] for k, v in sorted(d.items(), key=lambda kv: (-kv[1], str(kv[0])))]  # noqa: E731
        return {
            "question": self.question,
            "mask": self.mask.label,
            "keywords": {"entity": self.keywords.entity_keywords, "correlation": self.keywords.correlation_keywords},
            "retrieved": {
                "v_rel": ranked(b.v_rel),
                "e_more": ranked(b.e_more, edge_id),
                "e_rel": ranked(b.e_rel, edge_id),
                "v_more": ranked(b.v_more),
                "chunks": ranked(b.chunk_hits),
            },
            "context_items": [p[0] for p in self.context.provenance],
            "context_token_total": self.context.token_total,
            "vector_queries": dict(sorted(self.vector_queries.items())),
            "retrieval_ms": round(self.retrieval_seconds * 1000, 3) if include_timing else None,
            "model_ms": round(self.model_seconds * 1000, 3) if include_timing else None,
            "response": self.response,
        }


class Retriever:
    """Read-only query engine over a loaded workspace."""

    def __init__(self, workspace: Workspace, gateway: LLMGateway, cfg: RetrievalConfig | None = None):
        self.ws = workspace
        self.gateway = gateway
        self.cfg = cfg or RetrievalConfig()

    def _query(self, text: str) -> QueryVector:
        return QueryVector(self.gateway.embed(text), self.cfg.metric)

    def extract_keywords(self, q: str) -> KeywordSets:
        if not q.strip():
            raise ValueError("query is empty")
        for attempt in range(2):
            raw = self.gateway.ask(TemplateId.EXT_KEY, {"query": q}, suffix="\nReply in the Output Format.\n" if attempt else "").text
            try:
                rec = parse_records(raw, "keywords").records[0]
            except ExtractionEmptyError:
                continue
            return KeywordSets(_dedupe(rec.values("low_level_keywords")), _dedupe(rec.values("high_level_keywords")))
        logger.warning("keyword extraction failed for %r; continuing without keywords", q)
        return KeywordSets()

    def retrieve_entities(self, keywords: list[str], k: int | None = None) -> tuple[dict[str, float], dict[EdgeKey, float]]:
        k = k or self.cfg.k_vertices
        v_rel: dict[str, float] = {}
        for kw in keywords:
            for name, score in self.ws.index.top_k(self._query(kw), "vertices", k):
                if name not in v_rel or score > v_rel[name]:
                    v_rel[name] = score
        return v_rel, diffuse_from_vertices(self.ws.kb, v_rel, self.cfg.strength_scale)

    def retrieve_correlations(
        self, keywords: list[str], mask: ModeMask, k: int | None = None
    ) -> tuple[dict[EdgeKey, float], dict[str, float]]:
        if mask.lite:
            raise ValueError("correlation retrieval is disabled in lite mode")
        k = k or self.cfg.k_edges
        classes = [c for c, on in (("low", mask.use_low), ("high", mask.use_high)) if on]
        e_rel: dict[EdgeKey, float] = {}
        for kw in keywords:
            qv = self._query(kw)
            # one search per order class keeps each class's hits independent of the other
            for cls in classes:
                hits = self.ws.index.top_k(qv, "hyperedges", k, where=lambda m, cls=cls: m.get("order_class") == cls)
                for id_, score in hits:
                    key = parse_edge_id(id_)
                    if key not in e_rel or score > e_rel[key]:
                        e_rel[key] = score
        return e_rel, diffuse_from_edges(self.ws.kb, e_rel, self.cfg.strength_scale)

    def retrieve_chunks(self, q: str, k: int | None = None) -> dict[str, float]:
        return dict(self.ws.index.top_k(self._query(q), "chunks", k or self.cfg.k_chunks))

    def retrieve(self, q: str, keywords: KeywordSets, mask: ModeMask) -> RetrievalBundle:
        bundle = RetrievalBundle()
        if mask.use_chunks:
            bundle.chunk_hits = self.retrieve_chunks(q)
        if mask.uses_structure:
            bundle.v_rel, bundle.e_more = self.retrieve_entities(keywords.entity_keywords)
            if not mask.lite:
                bundle.e_rel, bundle.v_more = self.retrieve_correlations(keywords.correlation_keywords, mask)
        return bundle

    def answer(self, q: str, mask: ModeMask, budget: int | None = ..., temperature: float = 0.0) -> Answer:  # type: ignore[assignment]
        """Produce a response under ``mask``; timing separates retrieval from model calls."""
        if not q.strip():
            raise ValueError("query is empty")
        budget = self.cfg.budget if budget is ... else budget
        before = dict(self.ws.index.query_counts)
        model_s = retrieval_s = 0.0
        keywords = KeywordSets()
        bundle = RetrievalBundle()
        context = RetrievalContext()
        if not mask.is_plain:
            if mask.uses_structure:
                t = time.perf_counter()
                keywords = self.extract_keywords(q)
                model_s += time.perf_counter() - t
            t = time.perf_counter()
            bundle = self.retrieve(q, keywords, mask)
            context = assemble_context(self.ws, bundle, mask, budget, self.cfg.structure_share)
            retrieval_s = time.perf_counter() - t
        bindings = {"question": q, "knowledge_section": context.knowledge_section()}
        t = time.perf_counter()
        result = self.gateway.ask(TemplateId.ANSWER_WITH_CONTEXT, bindings, temperature=temperature)
        model_s += time.perf_counter() - t
        after = self.ws.index.query_counts
        queries = {c: after.get(c, 0) - before.get(c, 0) for c in ("chunks", "vertices", "hyperedges")}
        return Answer(
            question=q,
            mask=mask,
            response=result.text,
            prompt=render_prompt(TemplateId.ANSWER_WITH_CONTEXT, bindings),
            context=context,
            keywords=keywords,
            bundle=bundle,
            retrieval_seconds=retrieval_s,
            model_seconds=model_s,
            vector_queries=queries,
        )


def dumps_trace(trace: dict) -> str:
    return json.dumps(trace, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
