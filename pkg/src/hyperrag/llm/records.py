"""Line-oriented record grammar for model output.

A response is a sequence of blocks separated by a line ``##``. Each block
holds ``field_name: value`` lines; multi-valued fields are comma-separated.
A trailing ``<|COMPLETE|>`` line is optional. Lines that do not open a known
field continue the previous field's value.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from ..errors import ExtractionEmptyError

BLOCK_SEPARATOR = "##"
TERMINATOR = "<|COMPLETE|>"


@dataclass(frozen=True)
class RecordSchema:
    required: tuple[str, ...]
    optional: tuple[str, ...] = ()
    multi: tuple[str, ...] = ()
    # at least one of these must be non-empty (used when nothing is strictly required)
    any_of: tuple[str, ...] = ()

    @property
    def fields(self) -> tuple[str, ...]:
        return self.required + self.optional


SCHEMAS: dict[str, RecordSchema] = {
    "entity": RecordSchema(
        required=("entity_name", "entity_type", "entity_description"),
        optional=("additional_properties",),
    ),
    "low_order": RecordSchema(
        required=(
            "entities_pair",
            "low_order_relationship_description",
            "low_order_relationship_keywords",
            "low_order_relationship_strength",
        ),
        multi=("entities_pair", "low_order_relationship_keywords"),
    ),
    "high_order": RecordSchema(
        required=(
            "entities_set",
            "high_order_relationship_description",
            "high_order_relationship_generalization",
            "high_order_relationship_keywords",
            "high_order_relationship_strength",
        ),
        multi=("entities_set", "high_order_relationship_keywords"),
    ),
    "keywords": RecordSchema(
        required=(),
        optional=("high_level_keywords", "low_level_keywords"),
        multi=("high_level_keywords", "low_level_keywords"),
        any_of=("high_level_keywords", "low_level_keywords"),
    ),
    "question": RecordSchema(required=("question",)),
    "score": RecordSchema(required=("criterion", "level", "score"), optional=("summary",)),
    "vote": RecordSchema(required=("criterion", "winner"), optional=("explanation",)),
}


@dataclass(frozen=True)
class ExtractionRecord:
    kind: str
    fields: dict[str, str]

    def get(self, name: str, default: str = "") -> str:
        return self.fields.get(name, default)

    def values(self, name: str) -> list[str]:
        return split_multi(self.fields.get(name, ""))


@dataclass
class ParsedRecords:
    records: list[ExtractionRecord] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    # blocks that opened at least one known field but failed validation
    dropped: int = 0

    @property
    def raw_count(self) -> int:
        return len(self.records) + self.dropped


_FIELD_LINE = re.compile(r"^\s*(?:[-*•]\s*)?[*_`]*([A-Za-z][A-Za-z0-9_ ]*?)[*_`]*\s*:\s*(.*)$")


def split_multi(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _clean_scalar(value: str) -> str:
    value = value.strip()
    while value.endswith(","):
        value = value[:-1].rstrip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        value = value[1:-1].strip()
    return value


def _strip_noise(raw: str) -> list[str]:
    lines = []
    for line in raw.replace("\r\n", "\n").split("\n"):
        stripped = line.strip()
        if stripped.startswith("```"):
            continue
        if TERMINATOR in stripped:
            stripped = stripped.replace(TERMINATOR, "").strip()
            if not stripped:
                continue
            line = stripped
        lines.append(line)
    return lines


def _split_blocks(lines: list[str], known: set[str]) -> list[list[tuple[str, str]]]:
    """Group lines into blocks of (field, value) pairs.

    A repeated field name inside one block also starts a new block, which
    repairs responses that forgot the ``##`` separators.
    """
    blocks: list[list[tuple[str, str]]] = []
    current: list[list[str]] = []
    names: set[str] = set()

    def flush():
        nonlocal current, names
        if current:
            blocks.append([(name, "\n".join(parts)) for name, *parts in current])
        current, names = [], set()

    for line in lines:
        if line.strip() in (BLOCK_SEPARATOR, "###", "---"):
            flush()
            continue
        match = _FIELD_LINE.match(line)
        name = match.group(1).strip().lower().replace(" ", "_") if match else None
        if name in known:
            if name in names:
                flush()
            names.add(name)
            current.append([name, match.group(2)])
        elif current and line.strip():
            current[-1].append(line.strip())
    flush()
    return blocks


def parse_records(raw: str, expected_kind: str) -> ParsedRecords:
    """Parse a model response into validated records of one kind.

    Malformed blocks are dropped with a diagnostic. Raises
    ExtractionEmptyError when no block survives.
    """
    schema = SCHEMAS[expected_kind]
    result = ParsedRecords()
    known = set(schema.fields)
    for index, block in enumerate(_split_blocks(_strip_noise(raw), known)):
        values: dict[str, str] = {}
        for name, value in block:
            value = " ".join(part.strip() for part in value.split("\n") if part.strip())
            if name in schema.multi:
                value = ", ".join(split_multi(value))
            else:
                value = _clean_scalar(value)
            if value and name not in values:
                values[name] = value
        missing = [name for name in schema.required if not values.get(name)]
        if schema.any_of and not any(values.get(name) for name in schema.any_of):
            missing.append(" or ".join(schema.any_of))
        if missing:
            result.dropped += 1
            result.diagnostics.append(f"block {index}: dropped {expected_kind} record missing {', '.join(missing)}")
            continue
        result.records.append(ExtractionRecord(kind=expected_kind, fields=values))
    if not result.records:
        raise ExtractionEmptyError(expected_kind, result.diagnostics)
    return result


def serialize_records(records: list[ExtractionRecord]) -> str:
    blocks = ["\n".join(f"{name}: {value}" for name, value in rec.fields.items()) for rec in records]
    return f"\n{BLOCK_SEPARATOR}\n".join(blocks) + f"\n{TERMINATOR}\n"


def parse_strength(value: str) -> float | None:
    """Read the first number in ``value`` and clamp it into [1, 10]."""
    match = re.search(r"[-+]?\d+(?:\.\d+)?", value)
    if not match:
        return None
    number = float(match.group(0))
    if not math.isfinite(number):
        return None
    return min(10.0, max(1.0, number))
