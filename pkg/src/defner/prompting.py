"""First-turn prompt construction across the input/output format matrix,
plus exemplar selection and ordering for few-shot prompts.

Prompt wording lives in a versioned plain-text template catalog
(templates/) with {{placeholder}} slots, so prompts are diffable and
stable enough to key a request cache.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .corpus import DatasetSchema, Document, GoldInstance
from .errors import MissingDescriptions, PoolTooSmall
from .parsing import SEP_TOKEN
from .textnorm import mix_seed, snake, trigram_cosine

INPUT_FORMATS = ("TEXT", "SCHEMA_DEF")
OUTPUT_FORMATS = ("JSON", "CODE", "LINEARIZED")
SELECTION_STRATEGIES = ("RANDOM_FIXED", "RANDOM_SHUFFLED", "RETRIEVAL")

RETRIEVAL_POOL_CAP = 100

TASK_STATEMENT = (
    "You are given a passage of biomedical text. Extract every entity mention "
    "that belongs to one of the valid entity types. Copy each mention exactly "
    "as it appears in the text."
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class Conversation:
    messages: tuple[Message, ...]

    @staticmethod
    def user(content: str) -> "Conversation":
        return Conversation(messages=(Message("user", content),))

    def append(self, role: str, content: str) -> "Conversation":
        if self.messages:
            last = self.messages[-1].role
            expected = "assistant" if last == "user" else "user"
            if role != expected:
                raise ValueError(f"expected {expected} after {last}, got {role}")
        elif role not in ("system", "user"):
            raise ValueError("conversation must start with a system or user message")
        return Conversation(messages=self.messages + (Message(role, content),))

    def last_text(self) -> str:
        return self.messages[-1].content if self.messages else ""


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("defner").joinpath(f"templates/{name}.txt").read_text("utf-8")


@lru_cache(maxsize=1)
def catalog_version() -> str:
    return resources.files("defner").joinpath("templates/VERSION").read_text("utf-8").strip()


def fill(template: str, slots: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        return slots.get(match.group(1), "")

    return _PLACEHOLDER_RE.sub(sub, template)


def _label_descriptions(schema: DatasetSchema) -> str:
    if not schema.has_descriptions():
        raise MissingDescriptions(
            f"schema {schema.name!r} lacks label descriptions required for SCHEMA_DEF prompts"
        )
    return "\n".join(f"- {l.label}: {l.description}" for l in schema.labels)


def format_instruction(schema: DatasetSchema, out_fmt: str) -> str:
    """Output-format instruction with a skeleton example built from the schema."""
    labels = schema.label_names()
    if out_fmt == "JSON":
        skeleton = json.dumps({label: ["..."] for label in labels}, ensure_ascii=False)
        return (
            "Answer with a single JSON object that maps every entity type to the "
            f"list of extracted mentions, like this: {skeleton}. Use an empty list "
            "for types with no mentions."
        )
    if out_fmt == "CODE":
        lines = "\n".join(f'{snake(label)} = ["..."]' for label in labels)
        return (
            "Answer with a fenced code block assigning one Python list of strings "
            f"per entity type:\n```\n{lines}\n```\nUse an empty list for types "
            "with no mentions."
        )
    raise ValueError(f"no prompt instruction for output format {out_fmt!r}")


def render_target(gold: GoldInstance, out_fmt: str, schema: DatasetSchema) -> str:
    """Render a gold extraction the way the model is asked to answer."""
    by_label: dict[str, list[str]] = {label: [] for label in schema.label_names()}
    for ent in gold.entities:
        by_label[ent.entity_type].append(ent.surface)
    if out_fmt == "JSON":
        return json.dumps(by_label, ensure_ascii=False)
    if out_fmt == "CODE":
        lines = "\n".join(
            f"{snake(label)} = {json.dumps(surfaces, ensure_ascii=False)}"
            for label, surfaces in by_label.items()
        )
        return f"```\n{lines}\n```"
    if out_fmt == "LINEARIZED":
        if schema.single_type:
            return f" {SEP_TOKEN} ".join(s for s in by_label[schema.labels[0].label])
        items = [f"{e.surface}:{e.entity_type}" for e in gold.entities]
        return "[" + ", ".join(items) + "]"
    raise ValueError(f"unknown output format {out_fmt!r}")


def _template_name(in_fmt: str, out_fmt: str) -> str:
    prefix = "text" if in_fmt == "TEXT" else "schema"
    return f"{prefix}_{out_fmt.lower()}"


def _first_turn(
    doc: Document,
    schema: DatasetSchema,
    in_fmt: str,
    out_fmt: str,
    exemplars_block: str,
) -> Conversation:
    if out_fmt not in ("JSON", "CODE"):
        raise ValueError(f"output format {out_fmt!r} is not valid for prompting")
    if in_fmt not in INPUT_FORMATS:
        raise ValueError(f"unknown input format {in_fmt!r}")
    slots = {
        "task": TASK_STATEMENT,
        "labels": ", ".join(schema.label_names()),
        "format_instruction": format_instruction(schema, out_fmt),
        "document": doc.text,
        "exemplars": exemplars_block,
    }
    if in_fmt == "SCHEMA_DEF":
        slots["label_descriptions"] = _label_descriptions(schema)
    prompt = fill(load_template(_template_name(in_fmt, out_fmt)), slots)
    return Conversation.user(prompt.strip() + "\n")


def build_zero_shot(
    doc: Document, schema: DatasetSchema, in_fmt: str, out_fmt: str
) -> Conversation:
    return _first_turn(doc, schema, in_fmt, out_fmt, exemplars_block="")


def exemplar_block(exemplar: GoldInstance, out_fmt: str, schema: DatasetSchema) -> str:
    target = render_target(exemplar, out_fmt, schema)
    return f"Text: {exemplar.document.text}\nOutput: {target}\n\n"


def build_few_shot(
    doc: Document,
    exemplars: list[GoldInstance],
    schema: DatasetSchema,
    in_fmt: str,
    out_fmt: str,
) -> Conversation:
    if not exemplars:
        raise ValueError("few-shot prompts need at least one exemplar")
    block = "".join(exemplar_block(ex, out_fmt, schema) for ex in exemplars)
    return _first_turn(doc, schema, in_fmt, out_fmt, exemplars_block=block)


def similarity(a: str, b: str) -> float:
    """Default retrieval similarity: cosine over character 3-gram counts."""
    return trigram_cosine(a, b)


def select_exemplars(
    pool: list[GoldInstance] | tuple[GoldInstance, ...],
    k: int,
    strategy: str,
    seed: int,
    instance_index: int = 0,
    query: Document | None = None,
    similarity_fn=similarity,
) -> list[GoldInstance]:
    """Pick and order k demonstrations from the train pool.

    RANDOM_FIXED draws one set+order per seed, reused for every instance.
    RANDOM_SHUFFLED reuses that set but re-shuffles the order per
    (seed, instance_index). RETRIEVAL ranks by similarity to the query
    document, ties broken by instance id.
    """
    pool = list(pool)
    if k == 0:
        return []
    if len(pool) < k:
        raise PoolTooSmall(f"need {k} exemplars, pool has {len(pool)}")
    if strategy == "RETRIEVAL":
        if query is None:
            raise ValueError("RETRIEVAL selection needs a query document")
        ranked = sorted(
            pool,
            key=lambda inst: (-similarity_fn(query.text, inst.document.text), inst.document.id),
        )
        return ranked[:k]
    if strategy not in ("RANDOM_FIXED", "RANDOM_SHUFFLED"):
        raise ValueError(f"unknown selection strategy {strategy!r}")
    base_rng = random.Random(mix_seed(seed, "exemplars"))
    chosen = base_rng.sample(pool, k)
    if strategy == "RANDOM_SHUFFLED":
        random.Random(mix_seed(seed, "order", instance_index)).shuffle(chosen)
    return chosen
