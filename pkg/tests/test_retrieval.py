from __future__ import annotations

import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperrag.corpus import Chunk, count_tokens
from hyperrag.hypergraph import KnowledgeBase
from hyperrag.retrieval import (
    ALL_MASKS,
    MODES,
    ModeMask,
    RetrievalBundle,
    RetrievalConfig,
    Retriever,
    assemble_context,
    diffuse_from_edges,
    diffuse_from_vertices,
)
from hyperrag.vector_index import VectorIndex
from hyperrag.workspace import Workspace

from conftest import apply_ops, brute_incident, random_upserts

LESIONS = "NEUROLOGIC LESIONS"
PAIR = ("HYPERVENTILATION", LESIONS)
QUAD = ("BRAINSTEM", "NEUROLOGIC LESIONS", "POSTMORTEM EXAMINATION", "PRIMARY CEREBRAL LYMPHOMA")
QUESTION = "How do neurologic lesions relate to hyperventilation and the brainstem?"


@pytest.fixture
def retriever(neuro_ws, neuro_gateway):
    return Retriever(neuro_ws, neuro_gateway)


# -- masks -------------------------------------------------------------------


def test_mask_parsing_and_named_modes():
    assert ModeMask.from_bits("011") == ModeMask(False, True, True)
    assert MODES["llm"].bits == "000" and MODES["rag"].bits == "100" and MODES["hyper"].bits == "111"
    assert MODES["hyper-lite"].lite and MODES["hyper-lite"].bits == "111"
    assert len(set(ALL_MASKS)) == 8 and ModeMask().is_plain
    for bad in ("11", "012", "1111"):
        with pytest.raises(ValueError):
            ModeMask.from_bits(bad)
    with pytest.raises(ValueError):
        ModeMask.from_mode("turbo")


# -- keywords and retrieval --------------------------------------------------


def test_keywords_split_and_stable(retriever):
    q = "What is the role of the ventrolateral preoptic nucleus in the flip-flop mechanism?"
    first = retriever.extract_keywords(q)
    assert "ventrolateral preoptic nucleus" in first.entity_keywords
    assert first == retriever.extract_keywords(q)
    assert len({k.lower() for k in first.entity_keywords}) == len(first.entity_keywords)
    with pytest.raises(ValueError):
        retriever.extract_keywords("  ")


def test_keyword_parse_failure_degrades_to_empty(neuro_ws):
    from conftest import ScriptedLLM, gateway_for

    backend = ScriptedLLM(script={"ext_key": lambda r: "no idea"})
    r = Retriever(neuro_ws, gateway_for(backend))
    kw = r.extract_keywords("anything")
    assert kw.entity_keywords == [] and kw.correlation_keywords == []
    assert len(backend.calls_for("ext_key")) == 2


def test_entity_retrieval_diffuses_to_both_edges(retriever, neuro_ws):
    v_rel, e_more = retriever.retrieve_entities(["neurologic lesions"])
    assert LESIONS in v_rel
    assert set(e_more) == set().union(*(brute_incident(neuro_ws.kb, n) for n in v_rel))
    assert {PAIR, QUAD} <= set(e_more)
    assert retriever.retrieve_entities([]) == ({}, {})


def test_duplicate_keywords_keep_max_similarity(retriever):
    once, _ = retriever.retrieve_entities(["neurologic lesions"])
    twice, _ = retriever.retrieve_entities(["neurologic lesions", "lesions"])
    assert twice[LESIONS] == max(once[LESIONS], retriever.retrieve_entities(["lesions"])[0][LESIONS])
    assert len(twice) == len(set(twice))


def test_correlation_retrieval_member_union_and_filters(retriever, neuro_ws):
    e_rel, v_more = retriever.retrieve_correlations(["lymphoma autopsy"], ModeMask(True, True, True))
    assert set(e_rel) == {PAIR, QUAD}
    assert set(v_more) == set(PAIR) | set(QUAD)
    e_low, v_low = retriever.retrieve_correlations(["lymphoma autopsy"], ModeMask(False, True, False))
    assert set(e_low) == {PAIR} and set(v_low) == set(PAIR)
    with pytest.raises(ValueError):
        retriever.retrieve_correlations(["x"], MODES["hyper-lite"])


def test_diffusion_from_single_edge_gives_its_members(neuro_ws):
    assert set(diffuse_from_edges(neuro_ws.kb, {QUAD: 0.5})) == set(QUAD)
    score = diffuse_from_edges(neuro_ws.kb, {QUAD: 0.5})["BRAINSTEM"]
    assert score == pytest.approx(0.5 * neuro_ws.kb.hyperedges[QUAD].strength / 10)


# -- context assembly --------------------------------------------------------


def _random_workspace(seed: int) -> tuple[Workspace, RetrievalBundle]:
    rng = random.Random(seed)
    kb = apply_ops(KnowledgeBase(), random_upserts(rng, n_vertices=rng.randint(2, 15), n_edges=rng.randint(0, 20)))
    chunks = {f"doc#{i:06d}": Chunk(f"doc#{i:06d}", "doc", i, f"chunk {i} text " * rng.randint(1, 30), 0) for i in range(5)}
    ws = Workspace(kb, VectorIndex(4), chunks)
    pick = lambda pool: {x: rng.random() for x in pool if rng.random() < 0.6}  # noqa: E731
    v_rel = pick(kb.vertices)
    e_rel = pick(kb.hyperedges)
    bundle = RetrievalBundle(
        v_rel=v_rel,
        e_more=diffuse_from_vertices(kb, v_rel),
        e_rel=e_rel,
        v_more=diffuse_from_edges(kb, e_rel),
        chunk_hits=pick(chunks),
    )
    return ws, bundle


def test_budget_zero_and_unbounded(neuro_ws, retriever):
    mask = ModeMask(True, True, True)
    bundle = retriever.retrieve(QUESTION, retriever.extract_keywords(QUESTION), mask)
    empty = assemble_context(neuro_ws, bundle, mask, 0)
    assert empty.token_total == 0 and empty.sections == [] and empty.knowledge_section() == ""
    full = assemble_context(neuro_ws, bundle, mask, None)
    ids = {p[0] for p in full.provenance}
    expected = {f"vertex:{n}" for n in set(bundle.v_rel) | set(bundle.v_more)}
    assert expected <= ids
    assert sum(i.startswith("edge:") for i in ids) == len(set(bundle.e_rel) | set(bundle.e_more))
    assert full.token_total == count_tokens(full.render())


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 400), st.sampled_from(ALL_MASKS))
def test_budget_safety_and_rank_order(seed, budget, mask):
    ws, bundle = _random_workspace(seed)
    ctx = assemble_context(ws, bundle, mask, budget)
    assert ctx.token_total <= budget
    assert ctx.token_total == count_tokens(ctx.render())
    assert len(ctx.provenance) == len(ctx.items)
    for kind, _ in ctx.sections:
        scores = [it.score for it in ctx.items if it.section == kind]
        assert scores == sorted(scores, reverse=True)
    if not mask.use_chunks:
        assert all(it.section != "chunks" for it in ctx.items)
    if not mask.uses_structure:
        assert all(it.section == "chunks" for it in ctx.items)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_mask_monotonicity_unbounded(seed):
    ws, bundle = _random_workspace(seed)
    selected = {m: {p[0] for p in assemble_context(ws, bundle, m, None).provenance} for m in ALL_MASKS}
    for small, big in itertools.product(ALL_MASKS, repeat=2):
        flags_s = (small.use_chunks, small.use_low, small.use_high)
        flags_b = (big.use_chunks, big.use_low, big.use_high)
        if all(b or not s for s, b in zip(flags_s, flags_b)):
            assert selected[small] <= selected[big]


# -- answers -----------------------------------------------------------------


def test_plain_llm_has_no_knowledge(retriever, neuro_ws):
    ans = retriever.answer(QUESTION, MODES["llm"])
    assert "---Knowledge---" not in ans.prompt
    assert sum(ans.vector_queries.values()) == 0
    assert ans.trace()["retrieved"] == {"v_rel": [], "e_more": [], "e_rel": [], "v_more": [], "chunks": []}


def test_rag_mode_uses_only_chunks(retriever):
    ans = retriever.answer(QUESTION, MODES["rag"])
    assert [k for k, _ in ans.context.sections] == ["chunks"]
    assert ans.vector_queries == {"chunks": 1, "vertices": 0, "hyperedges": 0}
    assert ans.keywords.entity_keywords == []


def test_structure_only_mask_has_no_chunks(retriever):
    ans = retriever.answer(QUESTION, ModeMask.from_bits("011"))
    kinds = [k for k, _ in ans.context.sections]
    assert "chunks" not in kinds and {"entities", "low_edges", "high_edges"} <= set(kinds)


def test_lite_mode_skips_edge_search_but_keeps_high_order(retriever):
    ans = retriever.answer(QUESTION, MODES["hyper-lite"])
    assert ans.vector_queries["hyperedges"] == 0
    assert ans.vector_queries["vertices"] > 0
    assert QUAD in ans.bundle.e_more
    assert any(k == "high_edges" for k, _ in ans.context.sections)
    full = retriever.answer(QUESTION, MODES["hyper"])
    assert full.vector_queries["hyperedges"] > 0


def test_hyper_answer_is_stable(neuro_workdir, neuro_ws, neuro_gateway):
    from conftest import NEURO, gateway_for
    from hyperrag.llm import MockLLM

    a = Retriever(neuro_ws, neuro_gateway).answer(QUESTION, MODES["hyper"])
    b = Retriever(Workspace.load(neuro_workdir), gateway_for(MockLLM(NEURO))).answer(QUESTION, MODES["hyper"])
    assert a.trace(include_timing=False) == b.trace(include_timing=False)
    assert a.prompt == b.prompt


def test_trace_fields_and_timing(retriever):
    trace = retriever.answer(QUESTION, MODES["hyper"]).trace()
    assert {"keywords", "retrieved", "context_token_total", "retrieval_ms", "model_ms", "response"} <= set(trace)
    assert trace["retrieval_ms"] >= 0 and trace["model_ms"] >= 0
    assert any(LESIONS in e for e, _ in trace["retrieved"]["e_more"])


def test_empty_question_rejected(retriever):
    with pytest.raises(ValueError):
        retriever.answer("", MODES["hyper"])


def test_retrieval_config_k(neuro_ws, neuro_gateway):
    r = Retriever(neuro_ws, neuro_gateway, RetrievalConfig(k_vertices=1))
    v_rel, _ = r.retrieve_entities(["neurologic lesions"])
    assert list(v_rel) == [LESIONS]
    assert isinstance(next(iter(v_rel.values())), float)
    assert np.isfinite(list(v_rel.values())).all()
