"""On-disk layout of a knowledge-base working directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Chunk, read_chunks, write_chunks
from .errors import IntegrityError
from .hypergraph import HYPEREDGES_FILE, VERTICES_FILE, KnowledgeBase
from .vector_index import VectorIndex

CHUNKS_FILE = "chunks.jsonl"
INDEX_DIR = "index"
REPORT_FILE = "report.json"


def dump_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@dataclass
class Workspace:
    """A loaded, read-only snapshot: chunks, hypergraph and vector index."""

    kb: KnowledgeBase
    index: VectorIndex
    chunks: dict[str, Chunk] = field(default_factory=dict)

    def persist(self, workdir: str | Path) -> None:
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        write_chunks(workdir / CHUNKS_FILE, [self.chunks[c] for c in sorted(self.chunks)])
        self.kb.persist(workdir)
        self.index.persist(workdir / INDEX_DIR)

    @classmethod
    def load(cls, workdir: str | Path) -> "Workspace":
        workdir = Path(workdir)
        for name in (CHUNKS_FILE, VERTICES_FILE, HYPEREDGES_FILE, INDEX_DIR):
            if not (workdir / name).exists():
                raise IntegrityError(f"{workdir / name}: missing; run ingest first")
        chunks = {c.chunk_id: c for c in read_chunks(workdir / CHUNKS_FILE)}
        return cls(kb=KnowledgeBase.load(workdir), index=VectorIndex.load(workdir / INDEX_DIR), chunks=chunks)
