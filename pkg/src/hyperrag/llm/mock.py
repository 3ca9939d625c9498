"""Deterministic offline model for tests, demos and reproducible runs.

Resolution order for a request:

1. ``ECHO:<text>`` anywhere in the prompt returns ``<text>``.
2. ``<fixture_dir>/<sha256(prompt)>.txt`` returns the file contents.
3. A rule keyed on the request's template id. Extraction rules consult a
   hand-written lexicon (``<fixture_dir>/lexicon.json``) first and fall back
   to frequency heuristics over the chunk text.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import Counter
from pathlib import Path
from typing import Mapping

from ..corpus import tokenize
from .gateway import CompletionRequest, Usage
from .records import ExtractionRecord, serialize_records

ECHO_RE = re.compile(r"ECHO:(.*)")

STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been before being below
    between both but by can could did do does doing down during each few for from further had has have having
    he her here hers herself him himself his how i if in into is it its itself just may me might more most must
    my myself no nor not now of off on once only or other our ours ourselves out over own same she should so
    some such than that the their theirs them themselves then there these they this those through to too under
    until up very was we were what when where which while who whom why will with would you your yours
    yourself yourselves describe described explain identify role relate relates related function functions
    specifically including include includes terms given way ways used use uses using within without among
    many much one two three often however thus per via
    """.split()
)

SCORE_DIMENSIONS = ("Comprehensiveness", "Diversity", "Empowerment", "Logical", "Readability")
SELECT_CRITERIA = (
    "Comprehensiveness",
    "Empowerment",
    "Accuracy",
    "Relevance",
    "Coherence",
    "Clarity",
    "Logical",
    "Flexibility",
)


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+|\n+", text)
    return [p.strip() for p in parts if p.strip()]


def _joined(value: str | list[str]) -> str:
    # lexicon entries may give keywords as a list or as one comma-separated string
    return value if isinstance(value, str) else ", ".join(value)


def _contains(text_lower: str, phrase: str) -> bool:
    return re.search(r"(?<![\w])" + re.escape(phrase.lower()) + r"(?![\w])", text_lower) is not None


def key_phrases(text: str) -> list[str]:
    """Stopword-delimited content phrases in order of first appearance."""
    phrases: list[str] = []
    current: list[str] = []
    for token in re.findall(r"[A-Za-z0-9]+(?:-[A-Za-z0-9]+)*|[^\sA-Za-z0-9]", text):
        word = token.lower()
        if word in STOPWORDS or not re.match(r"[a-z0-9]", word) or word.isdigit():
            if current:
                phrases.append(" ".join(current))
                current = []
            continue
        current.append(word)
    if current:
        phrases.append(" ".join(current))
    seen, out = set(), []
    for p in phrases:
        if p not in seen and len(p) > 2:
            seen.add(p)
            out.append(p)
    return out


class MockLLM:
    """Rule-based completion backend. Thread-safe; records every request."""

    def __init__(self, fixture_dir: str | Path | None = None, *, max_entities: int = 6):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.max_entities = max_entities
        self.lexicon = {"entities": [], "low_order": [], "high_order": []}
        if self.fixture_dir and (self.fixture_dir / "lexicon.json").exists():
            self.lexicon.update(json.loads((self.fixture_dir / "lexicon.json").read_text(encoding="utf-8")))
        self.calls: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def calls_for(self, template_id: str) -> list[CompletionRequest]:
        return [c for c in self.calls if c.template_id == template_id]

    def complete(self, req: CompletionRequest) -> tuple[str, Usage]:
        with self._lock:
            self.calls.append(req)
        text = self._respond(req)
        return text, Usage(len(tokenize(req.prompt)), len(tokenize(text)))

    def _respond(self, req: CompletionRequest) -> str:
        echo = ECHO_RE.search(req.prompt)
        if echo:
            return echo.group(1).strip()
        if self.fixture_dir:
            path = self.fixture_dir / f"{hashlib.sha256(req.prompt.encode()).hexdigest()}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        b = dict(req.bindings or {})
        rule = {
            "ext_entity": self._entities,
            "ext_low": self._low,
            "ext_high": self._high,
            "ext_key": self._keywords,
            "gen_question": self._questions,
            "answer_with_context": self._answer,
            "eval_scoring": self._score,
            "eval_select": self._select,
            "merge_descriptions": self._merge,
        }.get(req.template_id or "")
        if rule is None:
            return f"mock response {hashlib.sha256(req.prompt.encode()).hexdigest()[:12]}"
        return rule(b)

    # extraction ---------------------------------------------------------

    def _lexicon_entities(self, text: str) -> list[dict]:
        lower = text.lower()
        return [
            e
            for e in self.lexicon["entities"]
            if any(_contains(lower, alias) for alias in [e["name"], *e.get("aliases", [])])
        ]

    def _heuristic_entities(self, text: str) -> list[tuple[str, str]]:
        words = [w.lower() for w in re.findall(r"[A-Za-z]+", text)]
        counts = Counter(w for w in words if len(w) >= 5 and w not in STOPWORDS)
        ranked = sorted(counts, key=lambda w: (-counts[w], w))[: self.max_entities]
        sentences = _sentences(text)
        out = []
        for word in ranked:
            context = next((s for s in sentences if _contains(s.lower(), word)), word)
            out.append((word.upper(), " ".join(tokenize(context)[:40])))
        return out

    def _entities(self, b: Mapping) -> str:
        text = str(b.get("chunk", ""))
        hits = self._lexicon_entities(text)
        if hits:
            records = [
                ExtractionRecord(
                    "entity",
                    {
                        "entity_name": e["name"],
                        "entity_type": e.get("type", "concept"),
                        "entity_description": e["description"],
                        **({"additional_properties": e["additional_properties"]} if e.get("additional_properties") else {}),
                    },
                )
                for e in hits
            ]
        else:
            records = [
                ExtractionRecord(
                    "entity",
                    {"entity_name": name, "entity_type": "concept", "entity_description": f"Mentioned as: {context}"},
                )
                for name, context in self._heuristic_entities(text)
            ]
        return serialize_records(records) if records else "<|COMPLETE|>\n"

    @staticmethod
    def _entity_names(b: Mapping) -> list[str]:
        return [n.strip() for n in str(b.get("entities", "")).split(",") if n.strip()]

    def _cooccurrence(self, b: Mapping) -> list[tuple[str, list[str]]]:
        names = self._entity_names(b)
        out = []
        for sentence in _sentences(str(b.get("chunk", ""))):
            lower = sentence.lower()
            present = [n for n in names if _contains(lower, n)]
            present.sort(key=lambda n: lower.find(n.lower()))
            out.append((sentence, present))
        return out

    def _low(self, b: Mapping) -> str:
        names = set(self._entity_names(b))
        lex = [r for r in self.lexicon["low_order"] if set(r["pair"]) <= names]
        if lex:
            records = [
                ExtractionRecord(
                    "low_order",
                    {
                        "entities_pair": ", ".join(r["pair"]),
                        "low_order_relationship_description": r["description"],
                        "low_order_relationship_keywords": _joined(r["keywords"]),
                        "low_order_relationship_strength": str(r["strength"]),
                    },
                )
                for r in lex
            ]
            return serialize_records(records)
        if self.lexicon["entities"] and names & {e["name"] for e in self.lexicon["entities"]}:
            return "<|COMPLETE|>\n"
        pairs: dict[tuple[str, str], list[str]] = {}
        for sentence, present in self._cooccurrence(b):
            for a, c in zip(present, present[1:]):
                pairs.setdefault((a, c), []).append(sentence)
        records = [
            ExtractionRecord(
                "low_order",
                {
                    "entities_pair": f"{a}, {c}",
                    "low_order_relationship_description": " ".join(tokenize(sents[0])[:40]),
                    "low_order_relationship_keywords": "co-occurrence, shared context",
                    "low_order_relationship_strength": str(min(10, 2 + 2 * len(sents))),
                },
            )
            for (a, c), sents in sorted(pairs.items())
        ]
        return serialize_records(records) if records else "<|COMPLETE|>\n"

    def _high(self, b: Mapping) -> str:
        names = set(self._entity_names(b))
        lex = [r for r in self.lexicon["high_order"] if set(r["members"]) <= names]
        if lex:
            records = [
                ExtractionRecord(
                    "high_order",
                    {
                        "entities_set": ", ".join(r["members"]),
                        "high_order_relationship_description": r["description"],
                        "high_order_relationship_generalization": r["generalization"],
                        "high_order_relationship_keywords": _joined(r["keywords"]),
                        "high_order_relationship_strength": str(r["strength"]),
                    },
                )
                for r in lex
            ]
            return serialize_records(records)
        if self.lexicon["entities"] and names & {e["name"] for e in self.lexicon["entities"]}:
            return "<|COMPLETE|>\n"
        sets: dict[tuple[str, ...], str] = {}
        for sentence, present in self._cooccurrence(b):
            if len(set(present)) >= 3:
                sets.setdefault(tuple(sorted(set(present))), sentence)
        records = [
            ExtractionRecord(
                "high_order",
                {
                    "entities_set": ", ".join(members),
                    "high_order_relationship_description": " ".join(tokenize(sentence)[:60]),
                    "high_order_relationship_generalization": "Jointly discussed: " + ", ".join(m.lower() for m in members),
                    "high_order_relationship_keywords": "joint mention, theme",
                    "high_order_relationship_strength": str(min(10, 3 + len(members))),
                },
            )
            for members, sentence in sorted(sets.items())
        ]
        return serialize_records(records) if records else "<|COMPLETE|>\n"

    def _keywords(self, b: Mapping) -> str:
        query = str(b.get("query", ""))
        lower = query.lower()
        low = [e["name"].lower() for e in self.lexicon["entities"] if _contains(lower, e["name"])]
        low += [p for p in key_phrases(query) if p not in low]
        high = [f"{a} and {c}" for a, c in zip(low, low[1:])] or low[:1]
        if not low:
            return "<|COMPLETE|>\n"
        return serialize_records(
            [
                ExtractionRecord(
                    "keywords",
                    {"high_level_keywords": ", ".join(high), "low_level_keywords": ", ".join(low)},
                )
            ]
        )

    # generation and judging --------------------------------------------

    def _questions(self, b: Mapping) -> str:
        chunk = str(b.get("chunk", ""))
        n = int(b.get("n", 1))
        stage = 1
        instruction = str(b.get("nesting_instruction", ""))
        if '"including"' in instruction:
            stage = 3
        elif '"and explain"' in instruction:
            stage = 2
        phrases = key_phrases(chunk) or ["the topic"]
        ranked = sorted(phrases, key=lambda p: (-len(p.split()), phrases.index(p)))
        records = []
        for i in range(n):
            p = [ranked[(i + j) % len(ranked)] for j in range(3)]
            if stage == 1:
                text = f"What is the role of {p[0]} with respect to {p[1]}?"
            elif stage == 2:
                text = f"Identify what the text says about {p[0]}, and explain how it relates to {p[1]}."
            else:
                text = (
                    f"How does {p[0]} work, and specifically, what are the roles of {p[1]} and {p[2]}, "
                    f"including how changes in {p[1]} affect {p[0]}?"
                )
            records.append(ExtractionRecord("question", {"question": text}))
        return serialize_records(records)

    def _answer(self, b: Mapping) -> str:
        question = str(b.get("question", ""))
        knowledge = str(b.get("knowledge_section", ""))
        lines = [ln for ln in knowledge.split("\n") if ln.strip() and not ln.startswith("---")]
        if not lines:
            return f"From general knowledge: {question} This depends on context that was not provided."
        body = " ".join(" ".join(tokenize(ln)[:30]) for ln in lines[:12])
        return f"Drawing on {len(lines)} knowledge lines: {body}"

    def _score(self, b: Mapping) -> str:
        answer = str(b.get("answer", ""))
        reference = str(b.get("reference", ""))
        ans = {t.lower() for t in tokenize(answer) if t.isalnum()}
        ref = {t.lower() for t in tokenize(reference) if t.isalnum()}
        recall = len(ans & ref) / len(ref) if ref else 0.0
        precision = len(ans & ref) / len(ans) if ans else 0.0
        richness = min(1.0, len(ans) / 150)
        n_sent = max(1, len(_sentences(answer)))
        flow = min(1.0, 0.4 + 0.1 * n_sent)
        readability = max(0.0, 1.0 - abs(len(tokenize(answer)) / n_sent - 20) / 60)
        features = dict(zip(SCORE_DIMENSIONS, (recall, richness, precision, flow, readability)))
        records = []
        for dim, value in features.items():
            score = round(100 * value)
            level = min(5, score // 20 + 1)
            records.append(
                ExtractionRecord(
                    "score",
                    {"criterion": dim, "summary": f"mock feature value {value:.3f}", "level": str(level), "score": str(score)},
                )
            )
        return serialize_records(records)

    def _select(self, b: Mapping) -> str:
        a1, a2 = str(b.get("answer1", "")), str(b.get("answer2", ""))
        l1, l2 = len(tokenize(a1)), len(tokenize(a2))
        records = []
        for i, criterion in enumerate(SELECT_CRITERIA):
            if l1 != l2:
                winner = "Answer 1" if l1 > l2 else "Answer 2"
                why = "it is longer and covers more ground"
            else:
                # equal lengths: split the criteria evenly between positions
                winner = "Answer 1" if i < len(SELECT_CRITERIA) // 2 else "Answer 2"
                why = "the answers are equally long; tie rule by criterion position"
            records.append(ExtractionRecord("vote", {"criterion": criterion, "winner": winner, "explanation": why}))
        overall = "Answer 1" if l1 >= l2 else "Answer 2"
        records.append(ExtractionRecord("vote", {"criterion": "Overall Winner", "winner": overall, "explanation": "majority"}))
        return serialize_records(records)

    def _merge(self, b: Mapping) -> str:
        parts = [p.strip() for p in str(b.get("descriptions", "")).split("\n") if p.strip()]
        return " ".join(parts) or str(b.get("name", ""))
