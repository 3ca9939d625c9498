"""Command-line entry point.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
configuration error. Every command prints a single-line cause on failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import RunConfig, load_config
from .corpus import ChunkingConfig, read_chunks
from .errors import ConfigurationError, HyperRAGError
from .evaluation import (
    generate_questions,
    read_answers,
    read_questions,
    run_scoring,
    run_selection,
    write_jsonl,
)
from .extraction import ExtractionConfig, ingest
from .hypergraph import KnowledgeBase
from .llm import HashEmbedder, LLMGateway, MockLLM, OpenAICompatibleBackend, RemoteEmbedder
from .retrieval import MODES, ModeMask, RetrievalConfig, Retriever, dumps_trace
from .vector_index import VectorIndex
from .workspace import CHUNKS_FILE, REPORT_FILE, Workspace, dump_json

logger = logging.getLogger("hyperrag")


def build_gateway(cfg: RunConfig) -> LLMGateway:
    cfg.require_backend()
    if cfg.mock:
        return LLMGateway(MockLLM(cfg.fixture_dir()), HashEmbedder(cfg.dim, cfg.seed), model="mock", max_in_flight=cfg.parallelism)
    backend = OpenAICompatibleBackend(cfg.base_url, embedding_model=cfg.embedding_model)
    return LLMGateway(backend, RemoteEmbedder(backend, cfg.dim), model=cfg.model, max_in_flight=cfg.parallelism)


def embedding_info(cfg: RunConfig) -> dict:
    if cfg.mock:
        return {"kind": "hash", "dim": cfg.dim, "seed": cfg.seed}
    return {"kind": "remote", "dim": cfg.dim, "model": cfg.embedding_model}


def _load_workspace(cfg: RunConfig) -> Workspace:
    if not (cfg.workdir / CHUNKS_FILE).exists():
        raise ConfigurationError(f"{cfg.workdir}: not a populated workdir; run ingest first")
    report_path = cfg.workdir / REPORT_FILE
    if report_path.exists():
        built = json.loads(report_path.read_text(encoding="utf-8")).get("embedding")
        if built and built != embedding_info(cfg):
            raise ConfigurationError(f"{cfg.workdir} was built with embedding {built}, current settings give {embedding_info(cfg)}")
    return Workspace.load(cfg.workdir)


def _mask(cfg: RunConfig, args) -> tuple[ModeMask, str]:
    if getattr(args, "mode", None):
        return ModeMask.from_mode(args.mode), args.mode
    mask = ModeMask.from_bits(cfg.mask, cfg.lite)
    return mask, mask.label


def _retriever(cfg: RunConfig, mask: ModeMask) -> Retriever:
    gateway = build_gateway(cfg)
    if mask.is_plain and not (cfg.workdir / CHUNKS_FILE).exists():
        ws = Workspace(KnowledgeBase(), VectorIndex(cfg.dim))
    else:
        ws = _load_workspace(cfg)
    rcfg = RetrievalConfig(k_vertices=cfg.k_vertices, k_edges=cfg.k_edges, k_chunks=cfg.k_chunks, budget=cfg.budget)
    return Retriever(ws, gateway, rcfg)


# -- commands ----------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus)
    if not corpus.exists():
        raise ConfigurationError(f"corpus path does not exist: {corpus}")
    report = ingest(
        corpus,
        cfg.workdir,
        build_gateway(cfg),
        chunking=ChunkingConfig(cfg.chunk_size, cfg.overlap),
        cfg=ExtractionConfig(parallelism=cfg.parallelism),
        include_timing=not cfg.mock,
        extra={"embedding": embedding_info(cfg)},
    )
    print(json.dumps(report.to_dict(not cfg.mock), sort_keys=True))
    return 0


def cmd_query(cfg: RunConfig, args) -> int:
    mask, _ = _mask(cfg, args)
    result = _retriever(cfg, mask).answer(args.question, mask)
    trace_path = Path(args.trace) if args.trace else (
        cfg.workdir / "traces" / f"{hashlib.sha256(f'{mask.label}|{args.question}'.encode()).hexdigest()[:16]}.json"
    )
    trace_path.parent.mkdir(parents=True, exist_ok=True)
    trace_path.write_text(dumps_trace(result.trace(include_timing=not cfg.mock)), encoding="utf-8")
    print(result.response)
    print(f"trace: {trace_path}", file=sys.stderr)
    return 0


def cmd_answer(cfg: RunConfig, args) -> int:
    mask, label = _mask(cfg, args)
    retriever = _retriever(cfg, mask)
    questions = read_questions(args.questions)
    rows, traces = [], []
    for q in questions:
        result = retriever.answer(q.text, mask)
        rows.append({"question_id": q.question_id, "mode": label, "response": result.response})
        traces.append({"question_id": q.question_id, **result.trace(include_timing=not cfg.mock)})
    write_jsonl(args.out, rows)
    if args.traces:
        write_jsonl(args.traces, traces)
    print(f"wrote {len(rows)} answers to {args.out}", file=sys.stderr)
    return 0


def cmd_gen_questions(cfg: RunConfig, args) -> int:
    chunks = {c.chunk_id: c for c in read_chunks(_require(cfg.workdir / CHUNKS_FILE))}
    questions = generate_questions(chunks, build_gateway(cfg), args.n, stage=args.stage, seed=cfg.seed)
    out = Path(args.out) if args.out else cfg.workdir / "questions.jsonl"
    write_jsonl(out, [q.to_json() for q in questions])
    if len(questions) < args.n:
        print(f"shortfall: generated {len(questions)} of {args.n} questions", file=sys.stderr)
    print(f"wrote {len(questions)} questions to {out}", file=sys.stderr)
    return 0


def _write_eval(out_dir: Path, rows_name: str, rows: list[dict], report: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / rows_name, rows)
    dump_json(out_dir / REPORT_FILE, report)
    print(json.dumps(report, sort_keys=True, indent=2))


def cmd_eval_score(cfg: RunConfig, args) -> int:
    chunks = {c.chunk_id: c for c in read_chunks(_require(cfg.workdir / CHUNKS_FILE))}
    questions = read_questions(_require(Path(args.questions)))
    answers = read_answers(_require(Path(args.answers)))
    rows, report = run_scoring(build_gateway(cfg), questions, answers, chunks, workers=cfg.parallelism)
    _write_eval(Path(args.out_dir) if args.out_dir else cfg.workdir / "eval" / "score", "scores.jsonl", rows, report)
    return 0


def cmd_eval_select(cfg: RunConfig, args) -> int:
    questions = read_questions(_require(Path(args.questions)))
    a, b = read_answers(_require(Path(args.a))), read_answers(_require(Path(args.b)))
    rows, report = run_selection(build_gateway(cfg), questions, a, b, swap=cfg.swap, workers=cfg.parallelism)
    _write_eval(Path(args.out_dir) if args.out_dir else cfg.workdir / "eval" / "select", "votes.jsonl", rows, report)
    return 0


def cmd_stats(cfg: RunConfig, args) -> int:
    _require(cfg.workdir / CHUNKS_FILE)
    ws = Workspace.load(cfg.workdir)
    stats = ws.kb.stats()
    stats["chunks"] = len(ws.chunks)
    print(json.dumps(stats, sort_keys=True, indent=2))
    return 0


def _require(path: Path) -> Path:
    if not path.exists():
        raise ConfigurationError(f"required input not found: {path}")
    return path


# -- parser ------------------------------------------------------------------


def _bool_flag(p: argparse.ArgumentParser, name: str, help: str) -> None:
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration (flags override HYPERRAG_* variables and <workdir>/hyperrag.toml)")
    g.add_argument("--workdir", help="knowledge-base directory")
    g.add_argument("--mock", action="store_const", const=True, default=None, help="use the offline mock model")
    g.add_argument("--fixtures", help="mock fixture directory, or a bundled fixture name such as 'neurology'")
    g.add_argument("--base-url", dest="base_url", help="OpenAI-compatible endpoint (key from HYPERRAG_API_KEY)")
    g.add_argument("--model", help="chat model name")
    g.add_argument("--embedding-model", dest="embedding_model")
    g.add_argument("--dim", type=int, help="embedding dimension")
    g.add_argument("--chunk-size", dest="chunk_size", type=int)
    g.add_argument("--overlap", type=int)
    g.add_argument("--k-vertices", dest="k_vertices", type=int)
    g.add_argument("--k-edges", dest="k_edges", type=int)
    g.add_argument("--k-chunks", dest="k_chunks", type=int)
    g.add_argument("--budget", type=int, help="context token budget")
    g.add_argument("--parallelism", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("-v", "--verbose", action="count", default=0)

    def mask_opts(p):
        m = p.add_mutually_exclusive_group()
        m.add_argument("--mode", choices=sorted(MODES), help="named retrieval mode")
        m.add_argument("--mask", help="three digits for chunks/low-order/high-order, e.g. 011")
        _bool_flag(p, "lite", "skip correlation-keyword search")

    parser = argparse.ArgumentParser(prog="hyperrag", description="Hypergraph-structured retrieval-augmented generation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a knowledge base from a corpus")
    p.add_argument("--corpus", required=True, help="directory of .txt files or a JSON-lines file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", parents=[common], help="answer one question")
    p.add_argument("question")
    p.add_argument("--trace", help="trace JSON path (default: <workdir>/traces/...)")
    mask_opts(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("answer", parents=[common], help="answer every question in a questions file")
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True, help="answers JSON-lines output")
    p.add_argument("--traces", help="optional JSON-lines file of per-question traces")
    mask_opts(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("gen-questions", parents=[common], help="generate evaluation questions from sampled chunks")
    p.add_argument("-n", type=int, default=50)
    p.add_argument("--stage", type=int, choices=(1, 2, 3), default=1, help="number of nested parts per question")
    p.add_argument("--out", help="default: <workdir>/questions.jsonl")
    p.set_defaults(func=cmd_gen_questions)

    p = sub.add_parser("eval-score", parents=[common], help="rubric-score one answers file")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_eval_score)

    p = sub.add_parser("eval-select", parents=[common], help="pairwise-compare two answers files")
    p.add_argument("--questions", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    _bool_flag(p, "swap", "judge each pair in both orders (default on)")
    p.set_defaults(func=cmd_eval_select)

    p = sub.add_parser("stats", parents=[common], help="print knowledge-base counts")
    p.set_defaults(func=cmd_stats)
    return parser


_CONFIG_KEYS = tuple(RunConfig.__dataclass_fields__)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        flags = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
        cfg = load_config(flags)
        return args.func(cfg, args)
    except ConfigurationError as exc:
        print(f"hyperrag: error: {exc}", file=sys.stderr)
        return 2
    except (HyperRAGError, OSError, ValueError) as exc:
        print(f"hyperrag: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
