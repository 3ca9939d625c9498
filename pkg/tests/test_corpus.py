from __future__ import annotations

import json
import math
import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperrag.corpus import (
    Chunk,
    ChunkingConfig,
    Document,
    chunk_corpus,
    chunk_document,
    detokenize,
    expected_chunk_count,
    load_corpus,
    normalize_text,
    read_chunks,
    reconstruct_tokens,
    tokenize,
    write_chunks,
)
from hyperrag.errors import EmptyDocumentError, IntegrityError


def reference_segmenter(text: str) -> list[str]:
    """Character walk: alphanumeric runs, one token per other non-space char."""
    out, run = [], []
    for ch in text:
        if ch.isalnum():
            run.append(ch)
            continue
        if run:
            out.append("".join(run))
            run = []
        if not ch.isspace():
            out.append(ch)
    if run:
        out.append("".join(run))
    return out


def reference_filter(raw: str) -> str:
    kept = []
    for ch in raw.replace("\r\n", "\n"):
        cat = unicodedata.category(ch)
        if ch == "\n" or cat in ("Zl", "Zp"):
            kept.append("\n")
        elif ch == "\t" or cat == "Zs":
            kept.append(" ")
        elif cat[0] == "C":
            continue
        else:
            kept.append(ch)
    lines = [" ".join(line.split(" ")).strip() for line in "".join(kept).split("\n")]
    lines = [" ".join(w for w in line.split(" ") if w) for line in lines]
    return "\n".join(lines).strip("\n")


def sliding_window_oracle(n: int, size: int, overlap: int) -> int:
    count, start = 0, 0
    while True:
        count += 1
        if start + size >= n:
            return count
        start += size - overlap


# -- normalization -----------------------------------------------------------


def test_normalize_examples():
    assert normalize_text("A\u0000B  C") == "AB C"
    assert normalize_text("plain text") == "plain text"


def test_normalize_page_with_tabs_and_form_feeds():
    page = "Chapter 1\t\tIntro\f\nLine  two\t has\ttabs \x0c\n\nNext   para\f"
    assert normalize_text(page) == reference_filter(page)
    assert "\f" not in normalize_text(page) and "\t" not in normalize_text(page)


def test_normalize_rejects_empty():
    with pytest.raises(EmptyDocumentError):
        normalize_text(" \x00\t\f ")


# -- tokenizer ---------------------------------------------------------------


def test_tokenize_examples():
    assert tokenize("Sleep-wake cycles.") == ["Sleep", "-", "wake", "cycles", "."]
    assert tokenize("") == []


def test_tokenize_paragraph_matches_reference():
    words = ("The brainstem, thalamus and cortex; each region (see note 3) matters! " * 50).split()[:500]
    para = " ".join(words)
    assert len(tokenize(para)) == len(reference_segmenter(para))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd", "Po", "Ps", "Pe", "Sm", "Zs"))))
def test_tokenize_matches_reference_segmenter(text):
    tokens = tokenize(text)
    assert tokens == reference_segmenter(text)
    assert tokenize(detokenize(tokens)) == tokens


# -- chunking ----------------------------------------------------------------


@pytest.mark.parametrize("n_tokens, expected", [(1_968_716, 1_790), (3_863_538, 3_513), (2_179_328, 1_982)])
def test_chunk_count_reference_corpus_sizes(n_tokens, expected):
    assert expected_chunk_count(n_tokens, ChunkingConfig(1200, 100)) == expected


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 20_000), st.integers(1, 400), st.data())
def test_chunk_count_law(n, size, data):
    overlap = data.draw(st.integers(0, size - 1))
    cfg = ChunkingConfig(size, overlap)
    closed = 0 if n == 0 else (1 if n <= size else math.ceil((n - size) / (size - overlap)) + 1)
    assert expected_chunk_count(n, cfg) == closed
    if n:
        assert closed == sliding_window_oracle(n, size, overlap)


def test_short_document_single_chunk():
    doc = Document("short", "", " ".join(f"w{i}" for i in range(800)))
    chunks = chunk_document(doc, ChunkingConfig())
    assert len(chunks) == 1 and chunks[0].token_count == 800


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 600), st.integers(2, 60), st.data())
def test_chunks_reconstruct_and_overlap(n, size, data):
    overlap = data.draw(st.integers(0, size - 1))
    cfg = ChunkingConfig(size, overlap)
    tokens = [f"t{i}" for i in range(n)]
    chunks = chunk_document(Document("d", "", " ".join(tokens)), cfg)
    assert len(chunks) == expected_chunk_count(n, cfg)
    assert reconstruct_tokens(chunks, overlap) == tokens
    for a, b in zip(chunks, chunks[1:]):
        assert a.token_count == size
        if overlap:
            assert tokenize(a.text)[-overlap:] == tokenize(b.text)[:overlap]


def test_chunk_ids_sorted_and_deterministic():
    docs = [Document(d, "", " ".join(["word"] * 3000)) for d in ("beta", "alpha", "alpha-2")]
    first = chunk_corpus(docs, ChunkingConfig(500, 50))
    assert [c.chunk_id for c in first] == sorted(c.chunk_id for c in first)
    assert [(c.doc_id, c.ordinal) for c in first] == sorted((c.doc_id, c.ordinal) for c in first)
    assert first == chunk_corpus(list(reversed(docs)), ChunkingConfig(500, 50))
    assert first[0].chunk_id == "alpha#000000"


def test_duplicate_doc_ids_rejected():
    with pytest.raises(ValueError):
        chunk_corpus([Document("a", "", "x"), Document("a", "", "y")])


def test_invalid_config():
    with pytest.raises(ValueError):
        ChunkingConfig(100, 100)


# -- I/O ---------------------------------------------------------------------


def test_load_corpus_dir_and_jsonl(tmp_path):
    d = tmp_path / "docs"
    d.mkdir()
    (d / "one.txt").write_text("Hello   world", encoding="utf-8")
    (d / "blank.txt").write_text(" \t ", encoding="utf-8")
    docs = load_corpus(d)
    assert [(x.doc_id, x.body) for x in docs] == [("one", "Hello world")]

    j = tmp_path / "c.jsonl"
    j.write_text(json.dumps({"doc_id": "x1", "title": "T", "body": "Body\ttext"}) + "\n", encoding="utf-8")
    assert load_corpus(j) == [Document("x1", "T", "Body text")]

    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "missing")


def test_chunks_roundtrip_and_corruption(tmp_path):
    chunks = chunk_corpus([Document("d", "", "alpha beta gamma delta")], ChunkingConfig(2, 1))
    path = tmp_path / "chunks.jsonl"
    write_chunks(path, chunks)
    assert read_chunks(path) == chunks
    path.write_text(path.read_text() + "{not json\n", encoding="utf-8")
    with pytest.raises(IntegrityError, match=r"chunks.jsonl:4"):
        read_chunks(path)


def test_chunk_to_json_fields():
    row = json.loads(Chunk("d#000000", "d", 0, "x", 1).to_json())
    assert set(row) == {"chunk_id", "doc_id", "ordinal", "text", "token_count"}
