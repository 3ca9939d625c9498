"""Corpus normalization and overlapping fixed-size token chunking."""

from __future__ import annotations

import json
import logging
import math
import re
import unicodedata
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyDocumentError, IntegrityError

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")
_SPACE_RUN = re.compile(r"[^\S\n]+")
_DOC_ID_FORBIDDEN = re.compile(r"[\x00-\x23\s]")


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 1200
    overlap: int = 100

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError(
                f"overlap must satisfy 0 <= overlap < chunk_size, got {self.overlap}"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


def _keep_char(ch: str) -> str:
    # Tabs and other non-newline whitespace become a space; the rest of the
    # control/format characters (NUL, form feed, BOM, zero-width) are dropped.
    if ch == "\n":
        return ch
    if ch == "\t":
        return " "
    cat = unicodedata.category(ch)
    if cat in ("Cc", "Cf"):
        return ""
    if cat in ("Zl", "Zp"):
        return "\n"
    return ch


def normalize_text(raw: str) -> str:
    """Strip control characters and collapse whitespace.

    Newlines survive as paragraph separators; spaces around them are trimmed.
    Raises EmptyDocumentError when nothing textual remains.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    text = "".join(_keep_char(ch) for ch in text)
    text = _SPACE_RUN.sub(" ", text)
    text = "\n".join(line.strip(" ") for line in text.split("\n")).strip("\n")
    if not text.strip():
        raise EmptyDocumentError("document is empty after normalization")
    return text


def tokenize(text: str) -> list[str]:
    """Split into maximal alphanumeric runs and single punctuation marks."""
    return TOKEN_RE.findall(text)


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def count_tokens(text: str) -> int:
    return sum(1 for _ in TOKEN_RE.finditer(text))


def expected_chunk_count(n_tokens: int, cfg: ChunkingConfig) -> int:
    """Closed-form chunk count for a single document of ``n_tokens`` tokens."""
    if n_tokens <= 0:
        return 0
    if n_tokens <= cfg.chunk_size:
        return 1
    return math.ceil((n_tokens - cfg.chunk_size) / cfg.stride) + 1


def chunk_spans(n_tokens: int, cfg: ChunkingConfig) -> Iterator[tuple[int, int]]:
    """Yield half-open token spans ``[start, end)`` covering a token stream."""
    if n_tokens <= 0:
        return
    start = 0
    while True:
        end = min(start + cfg.chunk_size, n_tokens)
        yield start, end
        if end >= n_tokens:
            return
        start += cfg.stride


def make_chunk_id(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}#{ordinal:06d}"


def validate_doc_id(doc_id: str) -> str:
    # '#' and everything below it are reserved so that chunk ids sort by
    # (doc_id, ordinal) under plain string comparison.
    if not doc_id or _DOC_ID_FORBIDDEN.search(doc_id):
        raise ValueError(f"invalid doc_id {doc_id!r}: must be non-empty with no whitespace or '!\"#'")
    return doc_id


def chunk_document(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    tokens = tokenize(doc.body)
    return [
        Chunk(
            chunk_id=make_chunk_id(doc.doc_id, i),
            doc_id=doc.doc_id,
            ordinal=i,
            text=detokenize(tokens[start:end]),
            token_count=end - start,
        )
        for i, (start, end) in enumerate(chunk_spans(len(tokens), cfg))
    ]


def chunk_corpus(docs: Iterable[Document], cfg: ChunkingConfig | None = None) -> list[Chunk]:
    """Chunk every document independently; overlap never crosses documents."""
    cfg = cfg or ChunkingConfig()
    seen: set[str] = set()
    chunks: list[Chunk] = []
    for doc in docs:
        validate_doc_id(doc.doc_id)
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        chunks.extend(chunk_document(doc, cfg))
    chunks.sort(key=lambda c: c.chunk_id)
    return chunks


def reconstruct_tokens(chunks: list[Chunk], overlap: int) -> list[str]:
    """Inverse of chunking for one document's chunks, in ordinal order."""
    out: list[str] = []
    for chunk in sorted(chunks, key=lambda c: c.ordinal):
        toks = tokenize(chunk.text)
        out.extend(toks if chunk.ordinal == 0 else toks[overlap:])
    return out


def load_corpus(path: str | Path) -> list[Document]:
    """Read a directory of ``.txt`` files or a JSON-lines file.

    Documents that normalize to nothing are skipped with a warning.
    """
    path = Path(path)
    raw_docs: list[tuple[str, str, str]] = []
    if path.is_dir():
        for f in sorted(path.glob("*.txt")):
            raw_docs.append((f.stem, f.stem, f.read_text(encoding="utf-8")))
    elif path.is_file():
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    raw_docs.append((str(row["doc_id"]), str(row.get("title", "")), row["body"]))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise IntegrityError(f"{path}:{lineno}: bad document row ({exc})") from exc
    else:
        raise FileNotFoundError(str(path))

    docs = []
    for doc_id, title, body in raw_docs:
        try:
            docs.append(Document(doc_id=validate_doc_id(doc_id), title=title, body=normalize_text(body)))
        except EmptyDocumentError:
            logger.warning("skipping empty document %s", doc_id)
    return docs


def write_chunks(path: str | Path, chunks: Iterable[Chunk]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for chunk in chunks:
            fh.write(chunk.to_json() + "\n")


def read_chunks(path: str | Path) -> list[Chunk]:
    path = Path(path)
    chunks = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                chunks.append(Chunk(**json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise IntegrityError(f"{path}:{lineno}: bad chunk row ({exc})") from exc
    return chunks
