from __future__ import annotations

import json
from pathlib import Path

import pytest

from hyperrag.cli import main
from hyperrag.config import load_config
from hyperrag.errors import ConfigurationError

from conftest import NEURO, make_corpus, tree_digest


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os

    for key in list(os.environ):
        if key.startswith("HYPERRAG_"):
            monkeypatch.delenv(key)


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture
def neuro_kb(tmp_path):
    workdir = tmp_path / "kb"
    assert run("ingest", "--corpus", NEURO, "--workdir", workdir, "--mock", "--fixtures", "neurology") == 0
    return workdir


def trace_of(workdir: Path, capsys, *extra) -> dict:
    path = workdir / "t.json"
    assert run("query", "How do neurologic lesions relate to hyperventilation?", "--workdir", workdir, "--mock",
               "--fixtures", "neurology", "--trace", path, *extra) == 0
    capsys.readouterr()
    return json.loads(path.read_text())


def test_ingest_and_stats(neuro_kb, capsys):
    capsys.readouterr()
    assert run("stats", "--workdir", neuro_kb) == 0
    stats = json.loads(capsys.readouterr().out)
    assert (stats["vertices"], stats["low_edges"], stats["high_edges"]) == (7, 1, 1)
    assert stats["arity_histogram"] == {"2": 1, "4": 1} and stats["chunks"] == 1
    report = json.loads((neuro_kb / "report.json").read_text())
    assert "elapsed" not in report and report["embedding"]["kind"] == "hash"


def test_reingest_digest_stable(neuro_kb):
    before = tree_digest(neuro_kb)
    assert run("ingest", "--corpus", NEURO, "--workdir", neuro_kb, "--mock", "--fixtures", "neurology") == 0
    assert tree_digest(neuro_kb) == before


def test_missing_inputs_exit_2(tmp_path, capsys):
    assert run("ingest", "--corpus", tmp_path / "nope", "--workdir", tmp_path / "w", "--mock") == 2
    assert run("stats", "--workdir", tmp_path / "absent") == 2
    assert run("query", "q", "--workdir", tmp_path / "absent", "--mock", "--mode", "hyper") == 2
    assert "error" in capsys.readouterr().err


def test_no_backend_exit_2(tmp_path, capsys):
    corpus = make_corpus(tmp_path / "c", n_docs=1, n_sentences=5)
    assert run("ingest", "--corpus", corpus, "--workdir", tmp_path / "w") == 2
    assert "no model backend" in capsys.readouterr().err


def test_query_modes(neuro_kb, capsys):
    plain = trace_of(neuro_kb, capsys, "--mode", "llm")
    assert all(v == [] for v in plain["retrieved"].values())
    assert plain["context_items"] == [] and plain["retrieval_ms"] is None

    structure = trace_of(neuro_kb, capsys, "--mask", "011")
    assert structure["retrieved"]["chunks"] == []
    assert not any(i.startswith("chunk:") for i in structure["context_items"])

    lite = trace_of(neuro_kb, capsys, "--mode", "hyper-lite")
    assert lite["vector_queries"]["hyperedges"] == 0 and lite["mask"] == "111-lite"
    assert any("POSTMORTEM" in e for e, _ in lite["retrieved"]["e_more"])

    full = trace_of(neuro_kb, capsys, "--mode", "hyper")
    assert full["vector_queries"]["hyperedges"] > 0
    assert trace_of(neuro_kb, capsys, "--mode", "hyper") == full


def test_query_prints_response_and_default_trace(neuro_kb, capsys):
    assert run("query", "What is hyperventilation?", "--workdir", neuro_kb, "--mock", "--fixtures", "neurology") == 0
    out = capsys.readouterr()
    assert out.out.strip() and "trace:" in out.err
    assert len(list((neuro_kb / "traces").glob("*.json"))) == 1


def test_mode_and_mask_are_exclusive(neuro_kb):
    with pytest.raises(SystemExit):
        run("query", "q", "--workdir", neuro_kb, "--mock", "--mode", "rag", "--mask", "100")
    assert run("query", "q", "--workdir", neuro_kb, "--mock", "--mask", "1x1") == 2


def test_question_answer_and_eval_pipeline(tmp_path, capsys):
    corpus = make_corpus(tmp_path / "c", n_docs=4, n_sentences=120, seed=2)
    w = tmp_path / "w"
    common = ["--workdir", w, "--mock", "--chunk-size", 60, "--overlap", 10]
    assert run("ingest", "--corpus", corpus, *common) == 0
    assert run("gen-questions", "-n", 50, *common) == 0
    lines = (w / "questions.jsonl").read_text().splitlines()
    assert len(lines) == 50 and len({json.loads(x)["origin_chunk_id"] for x in lines}) == 50

    for mode in ("llm", "hyper"):
        assert run("answer", "--questions", w / "questions.jsonl", "--out", w / f"{mode}.jsonl", "--mode", mode, *common) == 0
    capsys.readouterr()
    assert run("eval-score", "--questions", w / "questions.jsonl", "--answers", w / "hyper.jsonl", *common) == 0
    score = json.loads((w / "eval" / "score" / "report.json").read_text())
    assert score["valid"] == 50
    assert run("eval-select", "--questions", w / "questions.jsonl", "--a", w / "llm.jsonl", "--b", w / "hyper.jsonl", *common) == 0
    select = json.loads((w / "eval" / "select" / "report.json").read_text())
    assert len(select["criteria"]) == 8 and select["mode_a"] == "llm" and select["mode_b"] == "hyper"
    assert len((w / "eval" / "select" / "votes.jsonl").read_text().splitlines()) == 50


def test_gen_questions_shortfall(neuro_kb, capsys):
    assert run("gen-questions", "-n", 5, "--workdir", neuro_kb, "--mock", "--fixtures", "neurology") == 0
    assert "shortfall: generated 1 of 5" in capsys.readouterr().err


# -- configuration -----------------------------------------------------------


def test_config_precedence(tmp_path):
    (tmp_path / "hyperrag.toml").write_text("budget = 100\nk_chunks = 3\nmock = true\nseed = 4\n")
    env = {"HYPERRAG_BUDGET": "200", "HYPERRAG_K_CHUNKS": "7"}
    cfg = load_config({"workdir": str(tmp_path), "budget": 300}, env)
    assert (cfg.budget, cfg.k_chunks, cfg.seed, cfg.mock) == (300, 7, 4, True)
    assert load_config({"workdir": str(tmp_path)}, env).budget == 200
    assert load_config({"workdir": str(tmp_path)}, {}).budget == 100
    assert load_config({"workdir": str(tmp_path / "none")}, {}).budget == 6000


def test_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config({"mock": True, "base_url": "http://localhost:1"}, {})
    (tmp_path / "hyperrag.toml").write_text("bugdet = 1\n")
    with pytest.raises(ConfigurationError, match="bugdet"):
        load_config({"workdir": str(tmp_path)}, {})
    with pytest.raises(ConfigurationError):
        load_config({"overlap": 2000}, {})
    with pytest.raises(ConfigurationError):
        load_config({}, {"HYPERRAG_DIM": "lots"})


def test_config_errors_exit_2(tmp_path, monkeypatch):
    (tmp_path / "hyperrag.toml").write_text("bugdet = 1\n")
    assert run("stats", "--workdir", tmp_path) == 2
    monkeypatch.setenv("HYPERRAG_BASE_URL", "http://localhost:1")
    assert run("stats", "--workdir", tmp_path / "x", "--mock") == 2


def test_env_drives_cli(neuro_kb, monkeypatch, capsys):
    monkeypatch.setenv("HYPERRAG_WORKDIR", str(neuro_kb))
    capsys.readouterr()
    assert run("stats") == 0
    assert json.loads(capsys.readouterr().out)["vertices"] == 7


def test_embedding_mismatch_rejected(neuro_kb, capsys):
    assert run("query", "q", "--workdir", neuro_kb, "--mock", "--fixtures", "neurology", "--dim", 32) == 2
    assert "embedding" in capsys.readouterr().err
