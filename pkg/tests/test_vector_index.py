from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperrag.errors import IntegrityError
from hyperrag.vector_index import EmbeddingRecord, QueryVector, VectorIndex


def scan_oracle(rows: dict[str, list[float]], q: list[float], k: int, metric: str):
    """Exhaustive scan in plain Python."""
    scored = []
    qn = math.sqrt(sum(x * x for x in q))
    for id_, v in rows.items():
        if metric == "cosine":
            vn = math.sqrt(sum(x * x for x in v))
            s = sum(a * b for a, b in zip(v, q)) / (vn * qn) if vn and qn else 0.0
            scored.append((-max(-1.0, min(1.0, s)), id_, s))
        else:
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(v, q)))
            scored.append((d, id_, d))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [(id_, s) for _, id_, s in scored[:k]]


def build(rows, dim, collection="c"):
    index = VectorIndex(dim)
    for id_, v in rows.items():
        index.insert(EmbeddingRecord(collection, id_, np.array(v)))
    return index


def random_rows(rng: random.Random, n: int, d: int, dup: bool = False):
    rows = {f"id{rng.randrange(10**6):06d}-{i}": [rng.gauss(0, 1) for _ in range(d)] for i in range(n)}
    if dup and len(rows) > 1:
        # exact ties exercise the id tie-break
        ids = sorted(rows)
        rows[ids[-1]] = list(rows[ids[0]])
    return rows


def test_self_is_first_and_replace_semantics():
    index = VectorIndex(3)
    index.insert(EmbeddingRecord("c", "a", np.array([1.0, 0, 0])))
    index.insert(EmbeddingRecord("c", "b", np.array([0, 1.0, 0])))
    assert index.top_k(QueryVector(np.array([1.0, 0, 0])), "c", 1) == [("a", 1.0)]
    index.insert(EmbeddingRecord("c", "a", np.array([0, 0, 1.0])))
    assert index.collection_size("c") == 2
    assert index.top_k(QueryVector(np.array([0, 0, 1.0])), "c", 1)[0] == ("a", 1.0)


def test_truncation_empty_and_bad_k():
    index = build({"x": [1, 0], "y": [0, 1], "z": [1, 1]}, 2)
    assert len(index.top_k(np.array([1.0, 0.0]), "c", 10)) == 3
    assert index.top_k(np.array([1.0, 0.0]), "missing", 5) == []
    with pytest.raises(ValueError):
        index.top_k(np.array([1.0, 0.0]), "c", 0)
    with pytest.raises(ValueError):
        index.insert(EmbeddingRecord("c", "w", np.zeros(3)))


def test_twenty_unit_vectors_match_scan():
    rng = random.Random(7)
    rows = {}
    for i in range(20):
        v = [rng.gauss(0, 1) for _ in range(16)]
        n = math.sqrt(sum(x * x for x in v))
        rows[f"v{i:02d}"] = [x / n for x in v]
    q = [rng.gauss(0, 1) for _ in range(16)]
    got = build(rows, 16).top_k(QueryVector(np.array(q)), "c", 5)
    assert [i for i, _ in got] == [i for i, _ in scan_oracle(rows, q, 5, "cosine")]


def test_collection_size_at_corpus_scale():
    index = VectorIndex(8)
    rng = np.random.default_rng(0)
    for i in range(1790):
        index.insert(EmbeddingRecord("chunks", f"neuro#{i:06d}", rng.standard_normal(8)))
    assert index.collection_size("chunks") == 1790


def test_where_filter_and_query_counts():
    index = VectorIndex(2)
    index.insert(EmbeddingRecord("e", "lo", np.array([1.0, 0]), meta={"order_class": "low"}))
    index.insert(EmbeddingRecord("e", "hi", np.array([1.0, 0.1]), meta={"order_class": "high"}))
    hits = index.top_k(np.array([1.0, 0]), "e", 5, where=lambda m: m["order_class"] == "high")
    assert [h[0] for h in hits] == ["hi"]
    assert index.top_k(np.array([1.0, 0]), "e", 5, where=lambda m: False) == []
    assert index.query_counts["e"] == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.sampled_from(["cosine", "euclidean"]))
def test_oracle_equivalence_and_prefix(seed, metric):
    rng = random.Random(seed)
    d, n, k = rng.randint(1, 12), rng.randint(1, 60), rng.randint(1, 10)
    rows = random_rows(rng, n, d, dup=True)
    q = [rng.gauss(0, 1) for _ in range(d)]
    index = build(rows, d)
    got = index.top_k(QueryVector(np.array(q), metric), "c", k)
    want = scan_oracle(rows, q, k, metric)
    assert [i for i, _ in got] == [i for i, _ in want]
    assert all(abs(a - b) <= 1e-9 for (_, a), (_, b) in zip(got, want))
    longer = index.top_k(QueryVector(np.array(q), metric), "c", k + 1)
    assert longer[: len(got)] == got
    if metric == "cosine":
        assert all(-1.0 <= s <= 1.0 for _, s in got)


def test_persist_roundtrip(tmp_path):
    rng = random.Random(1)
    index = VectorIndex(5)
    for coll in ("chunks", "vertices"):
        for i in range(30):
            index.insert(EmbeddingRecord(coll, f"{coll}-{i}", np.array([rng.gauss(0, 1) for _ in range(5)]), f"p{i}", {"n": i}))
    index.persist(tmp_path)
    loaded = VectorIndex.load(tmp_path)
    assert loaded.dim == 5 and loaded.collection_size("vertices") == 30
    assert loaded.payload("chunks", "chunks-3") == "p3" and loaded.meta("chunks", "chunks-3") == {"n": 3}
    np.testing.assert_array_equal(loaded.vector("chunks", "chunks-7"), index.vector("chunks", "chunks-7").astype(np.float32))
    q = np.array([rng.gauss(0, 1) for _ in range(5)])
    assert [i for i, _ in loaded.top_k(q, "vertices", 10)] == [i for i, _ in index.top_k(q, "vertices", 10)]
    first = (tmp_path / "chunks.bin").read_bytes()
    loaded.persist(tmp_path)
    assert (tmp_path / "chunks.bin").read_bytes() == first


@pytest.mark.parametrize("damage", ["truncate", "magic", "trailing"])
def test_corrupt_file_is_integrity_error(tmp_path, damage):
    index = build({"a": [1.0, 2.0], "b": [3.0, 4.0]}, 2, "chunks")
    index.persist(tmp_path)
    path = tmp_path / "chunks.bin"
    data = path.read_bytes()
    data = {"truncate": data[:-3], "magic": b"XXXX" + data[4:], "trailing": data + b"\0"}[damage]
    path.write_bytes(data)
    with pytest.raises(IntegrityError, match="chunks.bin"):
        VectorIndex.load(tmp_path)
