"""Question generation, rubric scoring and pairwise selection voting.

Scoring asks the judge for a level and a score on five dimensions; each score
is forced into its level's 20-point band. Selection asks for a winner on
eight criteria, by default twice with the answer order swapped so that a
position preference cancels out as half-votes.
"""

from __future__ import annotations

import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Chunk
from .errors import ExtractionEmptyError, IntegrityError
from .llm.gateway import LLMGateway
from .llm.prompts import NESTING_INSTRUCTIONS, TemplateId
from .llm.records import ExtractionRecord, parse_records

logger = logging.getLogger(__name__)

SCORE_DIMENSIONS = ("comprehensiveness", "diversity", "empowerment", "logical", "readability")
SELECT_CRITERIA = (
    "comprehensiveness",
    "empowerment",
    "accuracy",
    "relevance",
    "coherence",
    "clarity",
    "logical",
    "flexibility",
)
REPROMPT_SUFFIX = "\nYour previous reply could not be read. Reply again using exactly the Output Format.\n"


def band(level: int) -> tuple[int, int]:
    return 20 * (level - 1), 20 * level


# -- questions ---------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedQuestion:
    question_id: str
    text: str
    origin_chunk_id: str
    stage: int

    def to_json(self) -> dict:
        return {"question_id": self.question_id, "text": self.text, "origin_chunk_id": self.origin_chunk_id, "stage": self.stage}


def generate_questions(
    chunks: Mapping[str, Chunk],
    gateway: LLMGateway,
    n: int,
    stage: int = 1,
    seed: int = 0,
) -> list[GeneratedQuestion]:
    """One question from each of ``n`` distinct, randomly sampled chunks.

    With fewer chunks than ``n`` every chunk is used once and the shortfall
    is logged.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if stage not in NESTING_INSTRUCTIONS:
        raise ValueError(f"stage must be one of {sorted(NESTING_INSTRUCTIONS)}")
    ids = sorted(chunks)
    if not ids:
        raise ValueError("no chunks to generate questions from")
    if len(ids) < n:
        logger.warning("only %d chunks available; generating %d of %d questions", len(ids), len(ids), n)
    picked = random.Random(seed).sample(ids, min(n, len(ids)))
    out = []
    for cid in picked:
        bindings = {"n": 1, "nesting_instruction": NESTING_INSTRUCTIONS[stage], "chunk": chunks[cid].text}
        record = _ask_first(gateway, TemplateId.GEN_QUESTION, bindings, "question")
        if record is None:
            logger.warning("no question produced for chunk %s", cid)
            continue
        out.append(GeneratedQuestion(f"q{len(out):04d}", " ".join(record.get("question").split()), cid, stage))
    return out


def _ask_all(gateway: LLMGateway, tid: TemplateId, bindings: Mapping, kind: str, attempt: int) -> list[ExtractionRecord]:
    raw = gateway.ask(tid, bindings, suffix=REPROMPT_SUFFIX if attempt else "").text
    try:
        return parse_records(raw, kind).records
    except ExtractionEmptyError:
        return []


def _ask_first(gateway: LLMGateway, tid: TemplateId, bindings: Mapping, kind: str) -> ExtractionRecord | None:
    for attempt in range(2):
        records = _ask_all(gateway, tid, bindings, kind, attempt)
        if records:
            return records[0]
    return None


# -- scoring -----------------------------------------------------------------


@dataclass
class DimensionScore:
    level: int
    score: float
    rationale: str = ""


@dataclass
class ScoreCard:
    dimensions: dict[str, DimensionScore] = field(default_factory=dict)
    valid: bool = True
    diagnostics: list[str] = field(default_factory=list)

    @property
    def overall(self) -> float:
        if not self.valid:
            return float("nan")
        return sum(d.score for d in self.dimensions.values()) / len(self.dimensions)

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "dimensions": {k: {"level": d.level, "score": d.score, "rationale": d.rationale} for k, d in self.dimensions.items()},
            "overall": self.overall if self.valid else None,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_json(cls, row: Mapping) -> "ScoreCard":
        dims = {k: DimensionScore(int(v["level"]), float(v["score"]), v.get("rationale", "")) for k, v in row["dimensions"].items()}
        return cls(dims, bool(row["valid"]), list(row.get("diagnostics", [])))


def _number(text: str) -> float:
    m = re.search(r"-?\d+(?:\.\d+)?", text)
    if not m:
        raise ValueError(f"no number in {text!r}")
    return float(m.group())


def _match(name: str, options: Sequence[str]) -> str | None:
    word = re.sub(r"[^a-z ]", " ", name.lower()).split()
    return next((o for o in options if o in word), None)


def scorecard_from_records(records: Iterable[ExtractionRecord]) -> ScoreCard:
    """Build a scorecard, clamping scores that fall outside their level's band."""
    card = ScoreCard()
    for rec in records:
        dim = _match(rec.get("criterion"), SCORE_DIMENSIONS)
        if dim is None or dim in card.dimensions:
            card.diagnostics.append(f"ignored criterion {rec.get('criterion')!r}")
            continue
        try:
            level, score = int(_number(rec.get("level"))), _number(rec.get("score"))
        except ValueError as exc:
            card.diagnostics.append(f"{dim}: {exc}")
            continue
        if not 1 <= level <= 5:
            card.diagnostics.append(f"{dim}: level {level} outside 1..5, clamped")
            level = min(5, max(1, level))
        lo, hi = band(level)
        if not lo <= score <= hi:
            clamped = min(hi, max(lo, score))
            card.diagnostics.append(f"{dim}: score {score:g} outside level {level} band [{lo}, {hi}], clamped to {clamped:g}")
            score = clamped
        card.dimensions[dim] = DimensionScore(level, score, rec.get("summary", ""))
    missing = [d for d in SCORE_DIMENSIONS if d not in card.dimensions]
    if missing:
        card.valid = False
        card.diagnostics.append(f"missing dimensions: {', '.join(missing)}")
    else:
        card.dimensions = {d: card.dimensions[d] for d in SCORE_DIMENSIONS}
    return card


def score_response(gateway: LLMGateway, question: str, response: str, reference: str) -> ScoreCard:
    bindings = {"question": question, "reference": reference, "answer": response}
    card = ScoreCard(valid=False)
    for attempt in range(2):
        card = scorecard_from_records(_ask_all(gateway, TemplateId.EVAL_SCORING, bindings, "score", attempt))
        if card.valid:
            break
    for d in card.diagnostics:
        logger.info("scoring: %s", d)
    return card


# -- selection ---------------------------------------------------------------


@dataclass
class VoteCard:
    """Per-criterion vote shares ``(a, b)``; each pair sums to 1."""

    votes: dict[str, tuple[float, float]] = field(default_factory=dict)
    rationales: dict[str, str] = field(default_factory=dict)
    judge_overall: str | None = None
    valid: bool = True
    diagnostics: list[str] = field(default_factory=list)

    @property
    def votes_a(self) -> float:
        return sum(a for a, _ in self.votes.values())

    @property
    def votes_b(self) -> float:
        return sum(b for _, b in self.votes.values())

    @property
    def overall_winner(self) -> str:
        if self.votes_a == self.votes_b:
            return "tie"
        return "A" if self.votes_a > self.votes_b else "B"

    @property
    def is_tie(self) -> bool:
        return self.overall_winner == "tie"

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "votes": {k: {"A": a, "B": b} for k, (a, b) in self.votes.items()},
            "rationales": dict(self.rationales),
            "votes_a": self.votes_a,
            "votes_b": self.votes_b,
            "overall_winner": self.overall_winner if self.valid else None,
            "tie": self.is_tie if self.valid else None,
            "judge_overall": self.judge_overall,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_json(cls, row: Mapping) -> "VoteCard":
        votes = {k: (float(v["A"]), float(v["B"])) for k, v in row["votes"].items()}
        return cls(votes, dict(row.get("rationales", {})), row.get("judge_overall"), bool(row["valid"]), list(row.get("diagnostics", [])))


def _positions(records: Iterable[ExtractionRecord]) -> tuple[dict[str, int], dict[str, str], int | None, list[str]]:
    """Map criterion -> winning position (1 or 2)."""
    winners: dict[str, int] = {}
    why: dict[str, str] = {}
    overall = None
    notes = []
    for rec in records:
        m = re.search(r"answer\s*([12])", rec.get("winner").lower())
        if not m:
            notes.append(f"unreadable winner {rec.get('winner')!r} for {rec.get('criterion')!r}")
            continue
        pos = int(m.group(1))
        if "overall" in rec.get("criterion").lower():
            overall = pos
            continue
        crit = _match(rec.get("criterion"), SELECT_CRITERIA)
        if crit is None or crit in winners:
            notes.append(f"ignored criterion {rec.get('criterion')!r}")
            continue
        winners[crit] = pos
        why[crit] = rec.get("explanation", "")
    return winners, why, overall, notes


def _judge_once(gateway: LLMGateway, question: str, first: str, second: str):
    bindings = {"question": question, "answer1": first, "answer2": second}
    notes: list[str] = []
    for attempt in range(2):
        winners, why, overall, notes = _positions(_ask_all(gateway, TemplateId.EVAL_SELECT, bindings, "vote", attempt))
        if len(winners) == len(SELECT_CRITERIA):
            return winners, why, overall, notes
        notes.append(f"judge named {len(winners)} of {len(SELECT_CRITERIA)} criteria")
    return None, {}, None, notes


def select_better(gateway: LLMGateway, question: str, response_a: str, response_b: str, swap: bool = True) -> VoteCard:
    """Compare two responses; with ``swap`` the judge sees both orders."""
    if not response_a.strip() or not response_b.strip():
        raise ValueError("both responses must be non-empty")
    card = VoteCard()
    fwd, why, overall, notes = _judge_once(gateway, question, response_a, response_b)
    card.diagnostics.extend(notes)
    if fwd is None:
        card.valid = False
        return card
    card.rationales = why
    card.judge_overall = {1: "A", 2: "B"}.get(overall) if overall else None
    rev = None
    if swap:
        rev, _, _, notes = _judge_once(gateway, question, response_b, response_a)
        card.diagnostics.extend(notes)
        if rev is None:
            card.valid = False
            return card
    for crit in SELECT_CRITERIA:
        a_first = 1.0 if fwd[crit] == 1 else 0.0
        if rev is None:
            card.votes[crit] = (a_first, 1.0 - a_first)
            continue
        a_second = 1.0 if rev[crit] == 2 else 0.0
        share = (a_first + a_second) / 2
        card.votes[crit] = (share, 1.0 - share)
    return card


# -- aggregation -------------------------------------------------------------


def aggregate(cards: Sequence[ScoreCard | VoteCard]) -> dict:
    """Means for scorecards, win percentages for vote cards; invalid cards only counted."""
    if not cards:
        raise ValueError("no cards to aggregate")
    valid = [c for c in cards if c.valid]
    if not valid:
        raise ValueError(f"all {len(cards)} cards are invalid")
    if all(isinstance(c, ScoreCard) for c in cards):
        dims = {d: sum(c.dimensions[d].score for c in valid) / len(valid) for d in SCORE_DIMENSIONS}
        return {
            "kind": "scoring",
            "valid": len(valid),
            "invalid": len(cards) - len(valid),
            "dimensions": dims,
            "overall": sum(c.overall for c in valid) / len(valid),
        }
    if all(isinstance(c, VoteCard) for c in cards):
        crit = {
            k: {"A": 100 * sum(c.votes[k][0] for c in valid) / len(valid), "B": 100 * sum(c.votes[k][1] for c in valid) / len(valid)}
            for k in SELECT_CRITERIA
        }
        total = len(SELECT_CRITERIA) * len(valid)
        outcomes = [c.overall_winner for c in valid]
        return {
            "kind": "selection",
            "valid": len(valid),
            "invalid": len(cards) - len(valid),
            "criteria": crit,
            "overall": {"A": 100 * sum(c.votes_a for c in valid) / total, "B": 100 * sum(c.votes_b for c in valid) / total},
            "comparisons": {w: outcomes.count(w) for w in ("A", "B", "tie")},
        }
    raise TypeError("cannot aggregate a mix of score and vote cards")


# -- file-level flows --------------------------------------------------------


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IntegrityError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_questions(path: str | Path) -> list[GeneratedQuestion]:
    try:
        return [GeneratedQuestion(r["question_id"], r["text"], r["origin_chunk_id"], int(r["stage"])) for r in _read_jsonl(path)]
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"{path}: bad question row: {exc}") from exc


def read_answers(path: str | Path) -> dict[str, dict]:
    """Answers keyed by question id; rows are ``{question_id, mode, response}``."""
    out = {}
    for row in _read_jsonl(path):
        if "question_id" not in row or "response" not in row:
            raise IntegrityError(f"{path}: answer row lacks question_id/response: {row}")
        out[row["question_id"]] = row
    return out


def _pmap(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_scoring(
    gateway: LLMGateway,
    questions: Sequence[GeneratedQuestion],
    answers: Mapping[str, Mapping],
    chunks: Mapping[str, Chunk],
    workers: int = 4,
) -> tuple[list[dict], dict]:
    todo = [q for q in questions if q.question_id in answers]

    def one(q: GeneratedQuestion) -> dict:
        if q.origin_chunk_id not in chunks:
            raise IntegrityError(f"question {q.question_id}: origin chunk {q.origin_chunk_id} not in workdir")
        a = answers[q.question_id]
        card = score_response(gateway, q.text, a["response"], chunks[q.origin_chunk_id].text)
        return {"question_id": q.question_id, "mode": a.get("mode"), **card.to_json()}

    rows = _pmap(one, todo, workers)
    return rows, aggregate([ScoreCard.from_json(r) for r in rows])


def run_selection(
    gateway: LLMGateway,
    questions: Sequence[GeneratedQuestion],
    answers_a: Mapping[str, Mapping],
    answers_b: Mapping[str, Mapping],
    swap: bool = True,
    workers: int = 4,
) -> tuple[list[dict], dict]:
    todo = [q for q in questions if q.question_id in answers_a and q.question_id in answers_b]

    def one(q: GeneratedQuestion) -> dict:
        a, b = answers_a[q.question_id], answers_b[q.question_id]
        card = select_better(gateway, q.text, a["response"], b["response"], swap=swap)
        return {"question_id": q.question_id, "mode_a": a.get("mode"), "mode_b": b.get("mode"), **card.to_json()}

    rows = _pmap(one, todo, workers)
    report = aggregate([VoteCard.from_json(r) for r in rows])
    report["mode_a"] = todo and answers_a[todo[0].question_id].get("mode")
    report["mode_b"] = todo and answers_b[todo[0].question_id].get("mode")
    return rows, report
