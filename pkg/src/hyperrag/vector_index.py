"""Exact top-k vector search over named collections.

Each collection persists to ``<name>.bin``: a little-endian header
``(magic b"HRVI", version u32, d u32, n u32)`` followed by ``n`` rows of
``(id length u32, id utf-8 bytes, d float32)``, plus a JSON-lines sidecar
``<name>.payload.jsonl`` of ``{id, payload, meta}``.
"""

from __future__ import annotations

import json
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import IntegrityError

COLLECTIONS = ("chunks", "vertices", "hyperedges")
MAGIC = b"HRVI"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_IDLEN = struct.Struct("<I")


@dataclass(frozen=True)
class EmbeddingRecord:
    collection: str
    id: str
    vector: np.ndarray
    payload: str = ""
    meta: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class QueryVector:
    vector: np.ndarray
    metric: str = "cosine"

    def __post_init__(self):
        if self.metric not in ("cosine", "euclidean"):
            raise ValueError(f"unknown metric {self.metric!r}")


class _Collection:
    def __init__(self, dim: int):
        self.dim = dim
        self.ids: list[str] = []
        self.rows: dict[str, int] = {}
        self.vectors: list[np.ndarray] = []
        self.payloads: dict[str, str] = {}
        self.meta: dict[str, dict] = {}
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._id_rank: np.ndarray | None = None

    def put(self, rec: EmbeddingRecord, vec: np.ndarray) -> None:
        row = self.rows.get(rec.id)
        if row is None:
            self.rows[rec.id] = len(self.ids)
            self.ids.append(rec.id)
            self.vectors.append(vec)
        else:
            self.vectors[row] = vec
        self.payloads[rec.id] = rec.payload
        self.meta[rec.id] = dict(rec.meta)
        self._matrix = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._matrix is None:
            self._matrix = np.vstack(self.vectors) if self.vectors else np.zeros((0, self.dim))
            self._norms = np.linalg.norm(self._matrix, axis=1)
            rank = np.empty(len(self.ids), dtype=np.int64)
            rank[np.argsort(np.array(self.ids, dtype=object), kind="stable")] = np.arange(len(self.ids))
            self._id_rank = rank
        return self._matrix, self._norms, self._id_rank


class VectorIndex:
    """In-memory exact index; inserts during ingestion, concurrent reads after."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._collections: dict[str, _Collection] = {}
        self._lock = threading.Lock()
        self.query_counts: Counter[str] = Counter()

    def collection_size(self, collection: str) -> int:
        col = self._collections.get(collection)
        return len(col.ids) if col else 0

    def ids(self, collection: str) -> list[str]:
        col = self._collections.get(collection)
        return list(col.ids) if col else []

    def payload(self, collection: str, id_: str) -> str:
        return self._collections[collection].payloads[id_]

    def meta(self, collection: str, id_: str) -> dict:
        return self._collections[collection].meta[id_]

    def vector(self, collection: str, id_: str) -> np.ndarray:
        col = self._collections[collection]
        return col.vectors[col.rows[id_]]

    def insert(self, rec: EmbeddingRecord) -> None:
        vec = np.asarray(rec.vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {rec.collection}/{rec.id} has shape {vec.shape}, expected ({self.dim},)")
        with self._lock:
            col = self._collections.setdefault(rec.collection, _Collection(self.dim))
            col.put(rec, vec)

    def top_k(
        self,
        q: QueryVector | np.ndarray,
        collection: str,
        k: int,
        where: Callable[[dict], bool] | None = None,
    ) -> list[tuple[str, float]]:
        """Rank by cosine (descending) or euclidean distance (ascending).

        Ties break by ascending id. ``where`` filters candidates on their
        stored metadata before ranking.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if not isinstance(q, QueryVector):
            q = QueryVector(np.asarray(q, dtype=np.float64))
        qv = np.asarray(q.vector, dtype=np.float64)
        if qv.shape != (self.dim,):
            raise ValueError(f"query has shape {qv.shape}, expected ({self.dim},)")
        self.query_counts[collection] += 1
        col = self._collections.get(collection)
        if col is None or not col.ids:
            return []
        matrix, norms, id_rank = col.arrays()
        candidates = np.arange(len(col.ids))
        if where is not None:
            candidates = np.array([i for i in candidates if where(col.meta[col.ids[i]])], dtype=np.int64)
            if candidates.size == 0:
                return []
        sub = matrix[candidates]
        if q.metric == "cosine":
            qn = np.linalg.norm(qv)
            denom = norms[candidates] * qn
            dots = sub @ qv
            scores = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
            scores = np.clip(scores, -1.0, 1.0)
            primary = -scores
        else:
            scores = np.linalg.norm(sub - qv, axis=1)
            primary = scores
        order = np.lexsort((id_rank[candidates], primary))[:k]
        return [(col.ids[candidates[i]], float(scores[i])) for i in order]

    # -- persistence ------------------------------------------------------

    def persist(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in sorted(self._collections):
            col = self._collections[name]
            order = sorted(col.ids)
            with (directory / f"{name}.bin").open("wb") as fh:
                fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, len(order)))
                for id_ in order:
                    raw = id_.encode("utf-8")
                    fh.write(_IDLEN.pack(len(raw)))
                    fh.write(raw)
                    fh.write(np.asarray(col.vectors[col.rows[id_]], dtype="<f4").tobytes())
            with (directory / f"{name}.payload.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
                for id_ in order:
                    row = {"id": id_, "payload": col.payloads[id_], "meta": col.meta[id_]}
                    fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "VectorIndex":
        directory = Path(directory)
        files = sorted(directory.glob("*.bin"))
        if not files:
            raise IntegrityError(f"{directory}: no vector collections found")
        index: VectorIndex | None = None
        for path in files:
            data = path.read_bytes()
            if len(data) < _HEADER.size:
                raise IntegrityError(f"{path}: truncated header")
            magic, version, dim, n = _HEADER.unpack_from(data, 0)
            if magic != MAGIC or version != VERSION:
                raise IntegrityError(f"{path}: bad magic/version")
            if index is None:
                index = cls(dim)
            elif dim != index.dim:
                raise IntegrityError(f"{path}: dimension {dim} differs from {index.dim}")
            payloads = _read_sidecar(directory / f"{path.stem}.payload.jsonl")
            offset = _HEADER.size
            for row in range(n):
                try:
                    (id_len,) = _IDLEN.unpack_from(data, offset)
                    offset += _IDLEN.size
                    id_ = data[offset : offset + id_len].decode("utf-8")
                    offset += id_len
                    vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float64)
                    offset += 4 * dim
                except (struct.error, ValueError, UnicodeDecodeError) as exc:
                    raise IntegrityError(f"{path}: row {row}: {exc}") from exc
                payload, meta = payloads.get(id_, ("", {}))
                index.insert(EmbeddingRecord(path.stem, id_, vec, payload, meta))
            if offset != len(data):
                raise IntegrityError(f"{path}: {len(data) - offset} trailing bytes")
        return index


def _read_sidecar(path: Path) -> dict[str, tuple[str, dict]]:
    out: dict[str, tuple[str, dict]] = {}
    if not path.exists():
        return out
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out[row["id"]] = (row.get("payload", ""), row.get("meta", {}))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IntegrityError(f"{path}:{lineno}: {exc}") from exc
    return out
