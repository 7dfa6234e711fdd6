"""Turn model completions into extraction sets without executing anything.

All parsers are pure text processing. JSON gets a bounded three-step
repair pipeline (fence/prose strip, trailing-comma removal, quote
normalization); anything still unparseable is scored as FAILED with an
empty entity set.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .corpus import DatasetSchema, TypedEntity
from .textnorm import snake

CLEAN = "CLEAN"
REPAIRED = "REPAIRED"
FAILED = "FAILED"

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n?|```")
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")
_CODE_LINE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*\[(.*)\]\s*,?\s*$")
_STRING_ITEM_RE = re.compile(r'"(?:[^"\\]|\\.)*"|\'(?:[^\'\\]|\\.)*\'')
SEP_TOKEN = "<sep>"


@dataclass(frozen=True)
class ExtractionSet:
    entities: tuple[TypedEntity, ...] = ()
    parse_status: str = CLEAN
    repairs: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.parse_status == FAILED and self.entities:
            raise ValueError("FAILED extraction sets must be empty")
        if self.parse_status == REPAIRED and not self.repairs:
            raise ValueError("REPAIRED extraction sets must log at least one repair")


def failed(warnings: tuple[str, ...] = ()) -> ExtractionSet:
    return ExtractionSet(entities=(), parse_status=FAILED, warnings=warnings)


def _try_json_object(text: str):
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return None
    return obj if isinstance(obj, dict) else None


def _strip_fences_and_prose(text: str) -> str:
    """Cut the completion down to its outermost {...} region."""
    stripped = _FENCE_RE.sub("", text)
    start = stripped.find("{")
    end = stripped.rfind("}")
    if start == -1 or end == -1 or end < start:
        return stripped.strip()
    return stripped[start : end + 1]


def _label_map(schema: DatasetSchema) -> dict[str, str]:
    return {label.lower(): label for label in schema.label_names()}


def _coerce_surfaces(value, warnings: list[str], key: str) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, (int, float, bool)):
        return [str(value)]
    if isinstance(value, list):
        out = []
        for item in value:
            if isinstance(item, str):
                out.append(item)
            elif isinstance(item, (int, float, bool)):
                out.append(str(item))
            else:
                warnings.append(f"dropped non-string item under {key!r}")
        return out
    warnings.append(f"dropped unusable value under {key!r}")
    return []


def parse_json_output(text: str, schema: DatasetSchema) -> ExtractionSet:
    """Parse a JSON-object completion mapping schema labels to surface lists."""
    repairs: list[str] = []
    obj = _try_json_object(text)
    if obj is None:
        candidate = _strip_fences_and_prose(text)
        repairs.append("strip_fences_prose")
        obj = _try_json_object(candidate)
        if obj is None:
            candidate = _TRAILING_COMMA_RE.sub(r"\1", candidate)
            repairs.append("remove_trailing_commas")
            obj = _try_json_object(candidate)
        if obj is None:
            candidate = candidate.replace("'", '"')
            repairs.append("normalize_quotes")
            obj = _try_json_object(candidate)
        if obj is None:
            return failed()
    warnings: list[str] = []
    labels = _label_map(schema)
    entities: list[TypedEntity] = []
    for key, value in obj.items():
        label = labels.get(str(key).lower())
        if label is None:
            warnings.append(f"dropped non-schema key {key!r}")
            continue
        for surface in _coerce_surfaces(value, warnings, str(key)):
            if surface:
                entities.append(TypedEntity(surface=surface, entity_type=label))
    status = REPAIRED if repairs else CLEAN
    return ExtractionSet(
        entities=tuple(entities),
        parse_status=status,
        repairs=tuple(repairs) if repairs else (),
        warnings=tuple(warnings),
    )


def _parse_list_literal(body: str, warnings: list[str], key: str) -> list[str]:
    items = []
    for match in _STRING_ITEM_RE.finditer(body):
        token = match.group()
        if token.startswith("'"):
            token = '"' + token[1:-1].replace('\\"', '"').replace('"', '\\"') + '"'
        try:
            items.append(json.loads(token))
        except json.JSONDecodeError:
            warnings.append(f"unreadable list item under {key!r}")
    return items


def parse_code_output(text: str, schema: DatasetSchema) -> ExtractionSet:
    """Parse assignment lines of the form label_snake = ["...", ...].

    The completion is scanned line by line, inside or outside fences, and
    is never executed.
    """
    snake_to_label = {snake(label): label for label in schema.label_names()}
    warnings: list[str] = []
    entities: list[TypedEntity] = []
    matched_any = False
    for line in text.splitlines():
        m = _CODE_LINE_RE.match(line)
        if not m:
            continue
        label = snake_to_label.get(snake(m.group(1)))
        if label is None:
            warnings.append(f"dropped assignment to non-schema name {m.group(1)!r}")
            continue
        matched_any = True
        for surface in _parse_list_literal(m.group(2), warnings, label):
            if surface:
                entities.append(TypedEntity(surface=surface, entity_type=label))
    if not matched_any:
        return failed(tuple(warnings))
    return ExtractionSet(entities=tuple(entities), parse_status=CLEAN, warnings=tuple(warnings))


def parse_linearized(text: str, schema: DatasetSchema) -> ExtractionSet:
    """Parse the linearized target format used for fine-tuned-model data.

    Single-type schemas: "a <sep> b". Multi-type schemas:
    "[a:Type1, b:Type2]" with the type after the last colon.
    """
    warnings: list[str] = []
    entities: list[TypedEntity] = []
    if schema.single_type:
        label = schema.labels[0].label
        for item in text.split(SEP_TOKEN):
            surface = item.strip()
            if surface:
                entities.append(TypedEntity(surface=surface, entity_type=label))
    else:
        labels = _label_map(schema)
        body = text.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1]
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            name, sep, etype = item.rpartition(":")
            if not sep or not name.strip():
                warnings.append(f"MALFORMED_ITEM: {item!r}")
                continue
            label = labels.get(etype.strip().lower())
            if label is None:
                warnings.append(f"MALFORMED_ITEM: unknown type in {item!r}")
                continue
            entities.append(TypedEntity(surface=name.strip(), entity_type=label))
    return ExtractionSet(entities=tuple(entities), parse_status=CLEAN, warnings=tuple(warnings))


def parse_output(text: str, schema: DatasetSchema, out_fmt: str) -> ExtractionSet:
    if out_fmt == "JSON":
        return parse_json_output(text, schema)
    if out_fmt == "CODE":
        return parse_code_output(text, schema)
    if out_fmt == "LINEARIZED":
        return parse_linearized(text, schema)
    raise ValueError(f"unknown output format {out_fmt!r}")


def parse_followup(
    text: str, schema: DatasetSchema, out_fmt: str, previous: ExtractionSet
) -> tuple[ExtractionSet, bool]:
    """Parse a revision turn; the reply replaces the previous set wholesale.

    A FAILED parse keeps the previous set unchanged (fail-safe) and is
    reported via the returned flag.
    """
    parsed = parse_output(text, schema, out_fmt)
    if parsed.parse_status == FAILED:
        return previous, False
    return parsed, True
