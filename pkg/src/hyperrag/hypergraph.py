"""Hypergraph knowledge store: entities, hyperedges and incidence lists.

Every merge is order-independent: fragments are kept as sorted sets, an
entity's type comes from its smallest (chunk_id, type) observation, and edge
strength is the mean over distinct observations. Any permutation of the same
upserts therefore persists to identical bytes.
"""

from __future__ import annotations

import bisect
import json
import logging
import re
import threading
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import IntegrityError, InvalidNameError
from .llm.records import ExtractionRecord, parse_strength

logger = logging.getLogger(__name__)

VERTICES_FILE = "vertices.jsonl"
HYPEREDGES_FILE = "hyperedges.jsonl"
STUB_TYPE = "UNKNOWN"

EdgeKey = tuple[str, ...]

_WS = re.compile(r"\s+")


def canonical_name(raw: str) -> str:
    """Trim, collapse whitespace and upper-case Latin letters. Idempotent."""
    name = _WS.sub(" ", raw).strip().strip("\"'`").strip()
    name = "".join(ch.upper() if "LATIN" in unicodedata.name(ch, "") else ch for ch in name)
    if not name:
        raise InvalidNameError(f"empty entity name: {raw!r}")
    return name


def order_class(arity: int) -> str:
    return "low" if arity <= 2 else "high"


def edge_id(key: EdgeKey) -> str:
    """Stable string id for a hyperedge key (used in the vector index)."""
    return json.dumps(list(key), ensure_ascii=False)


def parse_edge_id(text: str) -> EdgeKey:
    return tuple(json.loads(text))


def _insert_unique(items: list, item) -> bool:
    i = bisect.bisect_left(items, item)
    if i < len(items) and items[i] == item:
        return False
    items.insert(i, item)
    return True


@dataclass
class Vertex:
    name: str
    entity_type: str = STUB_TYPE
    type_chunk: str | None = None
    description_fragments: list[tuple[str, str]] = field(default_factory=list)
    additional_properties: list[tuple[str, str]] = field(default_factory=list)
    summary: str | None = None

    @property
    def source_chunks(self) -> set[str]:
        return {c for c, _ in self.description_fragments}

    @property
    def is_stub(self) -> bool:
        return not self.description_fragments

    @property
    def description(self) -> str:
        if self.summary:
            return self.summary
        return "\n".join(dict.fromkeys(text for _, text in self.description_fragments))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "entity_type": self.entity_type,
            "type_chunk": self.type_chunk,
            "description_fragments": [list(f) for f in self.description_fragments],
            "additional_properties": [list(p) for p in self.additional_properties],
            "source_chunks": sorted(self.source_chunks),
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "Vertex":
        v = cls(
            name=row["name"],
            entity_type=row["entity_type"],
            type_chunk=row.get("type_chunk"),
            description_fragments=[tuple(f) for f in row["description_fragments"]],
            additional_properties=[tuple(p) for p in row.get("additional_properties", [])],
            summary=row.get("summary"),
        )
        if sorted(row.get("source_chunks", [])) != sorted(v.source_chunks):
            raise ValueError("source_chunks disagree with fragments")
        if v.description_fragments != sorted(set(v.description_fragments)):
            raise ValueError("fragments not sorted/unique")
        return v


@dataclass
class Hyperedge:
    key: EdgeKey
    # (chunk_id, description, strength), sorted and unique
    observations: list[tuple[str, str, float]] = field(default_factory=list)
    generalizations: list[tuple[str, str]] = field(default_factory=list)
    keywords: set[str] = field(default_factory=set)
    summary: str | None = None

    @property
    def arity(self) -> int:
        return len(self.key)

    @property
    def order_class(self) -> str:
        return order_class(len(self.key))

    @property
    def description_fragments(self) -> list[tuple[str, str]]:
        return sorted({(c, t) for c, t, _ in self.observations})

    @property
    def strength(self) -> float:
        if not self.observations:
            return 1.0
        return sum(s for _, _, s in self.observations) / len(self.observations)

    @property
    def source_chunks(self) -> set[str]:
        return {c for c, _, _ in self.observations}

    @property
    def description(self) -> str:
        if self.summary:
            return self.summary
        return "\n".join(dict.fromkeys(t for _, t in self.description_fragments))

    def to_dict(self) -> dict:
        return {
            "key": list(self.key),
            "order_class": self.order_class,
            "observations": [list(o) for o in self.observations],
            "generalizations": [list(g) for g in self.generalizations],
            "keywords": sorted(self.keywords),
            "strength": self.strength,
            "source_chunks": sorted(self.source_chunks),
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "Hyperedge":
        e = cls(
            key=tuple(row["key"]),
            observations=[(c, t, float(s)) for c, t, s in row["observations"]],
            generalizations=[tuple(g) for g in row.get("generalizations", [])],
            keywords=set(row.get("keywords", [])),
            summary=row.get("summary"),
        )
        if list(e.key) != sorted(set(e.key)) or not e.key:
            raise ValueError("key must be a non-empty sorted tuple of distinct names")
        if row.get("order_class", e.order_class) != e.order_class:
            raise ValueError("order_class disagrees with arity")
        return e


class KnowledgeBase:
    """Vertices, hyperedges and the vertex -> incident-edge adjacency."""

    def __init__(self):
        self.vertices: dict[str, Vertex] = {}
        self.hyperedges: dict[EdgeKey, Hyperedge] = {}
        self.vertex_adjacency: dict[str, set[EdgeKey]] = {}
        self.diagnostics: list[str] = []
        self._lock = threading.RLock()

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self.vertices == other.vertices and self.hyperedges == other.hyperedges

    def _diag(self, message: str) -> None:
        self.diagnostics.append(message)
        logger.debug(message)

    # -- vertices ---------------------------------------------------------

    def _ensure_vertex(self, name: str) -> Vertex:
        vertex = self.vertices.get(name)
        if vertex is None:
            vertex = self.vertices[name] = Vertex(name=name)
            self.vertex_adjacency[name] = set()
        return vertex

    def add_vertex(
        self,
        name: str,
        entity_type: str,
        description: str,
        chunk_id: str,
        additional_properties: str = "",
    ) -> Vertex:
        name = canonical_name(name)
        entity_type = entity_type.strip().lower() or STUB_TYPE
        with self._lock:
            vertex = self._ensure_vertex(name)
            if description.strip():
                _insert_unique(vertex.description_fragments, (chunk_id, description.strip()))
            if additional_properties.strip():
                _insert_unique(vertex.additional_properties, (chunk_id, additional_properties.strip()))
            observed = (chunk_id, entity_type)
            if vertex.type_chunk is None or observed < (vertex.type_chunk, vertex.entity_type):
                if vertex.type_chunk is not None and vertex.entity_type != entity_type:
                    self._diag(f"type conflict for {name}: {vertex.entity_type!r} vs {entity_type!r}")
                vertex.entity_type, vertex.type_chunk = entity_type, chunk_id
            elif entity_type != vertex.entity_type:
                self._diag(f"type conflict for {name}: keeping {vertex.entity_type!r}, saw {entity_type!r}")
            return vertex

    def upsert_vertex(self, record: ExtractionRecord, chunk_id: str) -> Vertex:
        if record.kind != "entity":
            raise ValueError(f"expected an entity record, got {record.kind}")
        return self.add_vertex(
            record.get("entity_name"),
            record.get("entity_type"),
            record.get("entity_description"),
            chunk_id,
            record.get("additional_properties"),
        )

    # -- hyperedges -------------------------------------------------------

    def add_hyperedge(
        self,
        members: Iterable[str],
        description: str,
        chunk_id: str,
        *,
        keywords: Iterable[str] = (),
        strength: float = 1.0,
        generalization: str = "",
        min_arity: int = 1,
    ) -> Hyperedge | None:
        key: EdgeKey = tuple(sorted({canonical_name(m) for m in members}))
        if len(key) < min_arity:
            self._diag(f"rejected edge {list(key)} from {chunk_id}: arity {len(key)} < {min_arity}")
            return None
        strength = min(10.0, max(1.0, float(strength)))
        with self._lock:
            for name in key:
                if name not in self.vertices:
                    self._diag(f"stub vertex {name} created for edge {list(key)} in {chunk_id}")
                    self._ensure_vertex(name)
            edge = self.hyperedges.get(key)
            if edge is None:
                edge = self.hyperedges[key] = Hyperedge(key=key)
                for name in key:
                    self.vertex_adjacency[name].add(key)
            _insert_unique(edge.observations, (chunk_id, description.strip(), strength))
            if generalization.strip():
                _insert_unique(edge.generalizations, (chunk_id, generalization.strip()))
            edge.keywords.update(k.strip() for k in keywords if k.strip())
            return edge

    def upsert_hyperedge(self, record: ExtractionRecord, chunk_id: str) -> Hyperedge | None:
        """Merge a low/high-order extraction record; returns None when rejected."""
        if record.kind == "low_order":
            prefix, members = "low_order", record.values("entities_pair")
        elif record.kind == "high_order":
            prefix, members = "high_order", record.values("entities_set")
        else:
            raise ValueError(f"expected a correlation record, got {record.kind}")
        strength = parse_strength(record.get(f"{prefix}_relationship_strength"))
        if strength is None:
            self._diag(f"rejected edge {members} from {chunk_id}: unreadable strength")
            return None
        return self.add_hyperedge(
            members,
            record.get(f"{prefix}_relationship_description"),
            chunk_id,
            keywords=record.values(f"{prefix}_relationship_keywords"),
            strength=strength,
            generalization=record.get(f"{prefix}_relationship_generalization"),
            min_arity=2,
        )

    # -- queries ----------------------------------------------------------

    def incident_edges(self, name: str) -> list[Hyperedge]:
        """Hyperedges containing ``name``, sorted by key; empty if unknown."""
        return [self.hyperedges[k] for k in sorted(self.vertex_adjacency.get(name, ()))]

    def edge_members(self, key: EdgeKey) -> list[Vertex]:
        key = tuple(key)
        if key not in self.hyperedges:
            raise KeyError(f"unknown hyperedge {list(key)}")
        return [self.vertices[name] for name in key]

    def stats(self) -> dict:
        arity = Counter(e.arity for e in self.hyperedges.values())
        return {
            "vertices": len(self.vertices),
            "stub_vertices": sum(v.is_stub for v in self.vertices.values()),
            "low_edges": sum(e.order_class == "low" for e in self.hyperedges.values()),
            "high_edges": sum(e.order_class == "high" for e in self.hyperedges.values()),
            "arity_histogram": {str(k): arity[k] for k in sorted(arity)},
        }

    def check_invariants(self) -> None:
        """Raise IntegrityError if any structural invariant is broken."""
        for key, edge in self.hyperedges.items():
            if edge.key != key or list(key) != sorted(set(key)) or not key:
                raise IntegrityError(f"bad edge key {list(key)}")
            for name in key:
                if name not in self.vertices:
                    raise IntegrityError(f"edge {list(key)} references missing vertex {name}")
                if key not in self.vertex_adjacency.get(name, ()):
                    raise IntegrityError(f"adjacency of {name} lacks {list(key)}")
        for name, keys in self.vertex_adjacency.items():
            for key in keys:
                if key not in self.hyperedges or name not in key:
                    raise IntegrityError(f"adjacency of {name} lists foreign edge {list(key)}")

    # -- persistence ------------------------------------------------------

    def dumps(self) -> tuple[str, str]:
        dump = lambda d: json.dumps(d, ensure_ascii=False, sort_keys=True)  # noqa: E731
        vertices = "".join(dump(self.vertices[n].to_dict()) + "\n" for n in sorted(self.vertices))
        edges = "".join(dump(self.hyperedges[k].to_dict()) + "\n" for k in sorted(self.hyperedges))
        return vertices, edges

    def persist(self, workdir: str | Path) -> None:
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        vertices, edges = self.dumps()
        (workdir / VERTICES_FILE).write_text(vertices, encoding="utf-8", newline="\n")
        (workdir / HYPEREDGES_FILE).write_text(edges, encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, workdir: str | Path) -> "KnowledgeBase":
        workdir = Path(workdir)
        kb = cls()
        for fname, builder in ((VERTICES_FILE, Vertex.from_dict), (HYPEREDGES_FILE, Hyperedge.from_dict)):
            path = workdir / fname
            if not path.exists():
                raise IntegrityError(f"{path}: missing")
            with path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        item = builder(json.loads(line))
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        raise IntegrityError(f"{path}:{lineno}: {exc}") from exc
                    if isinstance(item, Vertex):
                        kb.vertices[item.name] = item
                        kb.vertex_adjacency[item.name] = set()
                    else:
                        kb.hyperedges[item.key] = item
        for key in kb.hyperedges:
            for name in key:
                if name not in kb.vertices:
                    raise IntegrityError(f"{workdir / HYPEREDGES_FILE}: edge {list(key)} references missing vertex {name}")
                kb.vertex_adjacency[name].add(key)
        return kb
