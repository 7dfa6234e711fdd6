"""First-pass extraction plus definition-augmented follow-up prompting.

Three follow-up strategies: a single correction turn covering the whole
bundle, an iterative loop presenting one concept per turn, and a
few-shot variant that restates the exemplars with their definitions.
Follow-up replies restate the full corrected set in the first-turn
format; a reply that fails to parse never loses the previous set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import DatasetSchema, Document, GoldInstance
from .errors import DefnerError, ReplayMiss
from .gateway import ChatRequest, ChatResponse
from .kb import (
    DEFAULT_LINK_THRESHOLD,
    KnowledgeBase,
    SemanticTypeAllowlist,
    link_mentions,
    lookup_definition,
)
from .parsing import FAILED, ExtractionSet, parse_followup, parse_output
from .prompting import (
    Conversation,
    build_few_shot,
    build_zero_shot,
    fill,
    format_instruction,
    load_template,
    render_target,
    select_exemplars,
)
from .textnorm import normalize

log = logging.getLogger(__name__)

AUGMENTATION_MODES = ("NONE", "ZS_DEF", "IP", "IP_DEF", "FS_DEF")

EXTRACTED = "EXTRACTED"
LINKED_CANDIDATE = "LINKED_CANDIDATE"


@dataclass(frozen=True)
class BundleItem:
    term: str
    definition: str  # empty when the KB has none
    origin: str  # EXTRACTED | LINKED_CANDIDATE
    cui: str | None = None


@dataclass(frozen=True)
class DefinitionBundle:
    items: tuple[BundleItem, ...]

    def defined_items(self) -> tuple[BundleItem, ...]:
        return tuple(item for item in self.items if item.definition)


@dataclass(frozen=True)
class PromptPlan:
    in_fmt: str
    out_fmt: str
    k: int = 0
    selection: str = "RANDOM_SHUFFLED"
    seed: int = 0
    instance_index: int = 0
    exemplar_pool: tuple[GoldInstance, ...] = ()
    model_id: str = "scripted-model"
    temperature: float = 0.0
    max_tokens: int = 256


@dataclass
class RunTrace:
    instance_id: str
    doc: Document
    schema: DatasetSchema
    plan: PromptPlan
    conversation: Conversation
    turn_sets: list[ExtractionSet] = field(default_factory=list)
    final: ExtractionSet = field(default_factory=ExtractionSet)
    bundle: DefinitionBundle | None = None
    exemplars: tuple[GoldInstance, ...] = ()
    responses: list[ChatResponse] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    gateway_failed: bool = False

    @property
    def first_pass(self) -> ExtractionSet:
        return self.turn_sets[0] if self.turn_sets else ExtractionSet()

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "conversation": [
                {"role": m.role, "content": m.content} for m in self.conversation.messages
            ],
            "turns": [
                {
                    "entities": [
                        {"surface": e.surface, "type": e.entity_type} for e in s.entities
                    ],
                    "parse_status": s.parse_status,
                }
                for s in self.turn_sets
            ],
            "final": {
                "entities": [
                    {"surface": e.surface, "type": e.entity_type} for e in self.final.entities
                ],
                "parse_status": self.final.parse_status,
            },
            "bundle": [
                {
                    "term": i.term,
                    "definition": i.definition,
                    "origin": i.origin,
                    "cui": i.cui,
                }
                for i in (self.bundle.items if self.bundle else ())
            ],
            "failures": list(self.failures),
            "responses": [
                {
                    "backend": r.backend,
                    "cached": r.cached,
                    "prompt_tokens": r.prompt_tokens,
                    "completion_tokens": r.completion_tokens,
                }
                for r in self.responses
            ],
        }


def collect_definitions(
    doc: Document,
    first_pass: ExtractionSet,
    kb: KnowledgeBase,
    allowlist: SemanticTypeAllowlist,
    include_candidates: bool = True,
    threshold: float = DEFAULT_LINK_THRESHOLD,
) -> DefinitionBundle:
    """Build the (term, definition) list for follow-up prompts.

    Extracted entities come first in first-pass order; linked candidates
    not already covered follow in span order. Terms are unique after
    normalization with the EXTRACTED origin winning duplicates.
    """
    items: list[BundleItem] = []
    seen: set[str] = set()
    for ent in first_pass.entities:
        norm = normalize(ent.surface)
        if not norm or norm in seen:
            continue
        seen.add(norm)
        hit = lookup_definition(ent.surface, kb)
        items.append(
            BundleItem(
                term=ent.surface,
                definition=hit[1] if hit else "",
                origin=EXTRACTED,
                cui=hit[0] if hit else None,
            )
        )
    if include_candidates:
        for mention in link_mentions(doc.text, kb, allowlist, threshold):
            norm = normalize(mention.span_text)
            if not norm or norm in seen:
                continue
            seen.add(norm)
            definition = kb.concepts[mention.cui].definition or ""
            items.append(
                BundleItem(
                    term=mention.span_text,
                    definition=definition,
                    origin=LINKED_CANDIDATE,
                    cui=mention.cui,
                )
            )
    return DefinitionBundle(items=tuple(items))


def bundle_lines(bundle: DefinitionBundle) -> str:
    lines = []
    for item in bundle.items:
        if item.definition:
            lines.append(f"- {item.term}: {item.definition}")
        else:
            lines.append(f"- {item.term}")
    return "\n".join(lines) if lines else "(none)"


def _request(trace: RunTrace) -> ChatRequest:
    return ChatRequest(
        model_id=trace.plan.model_id,
        messages=trace.conversation.messages,
        temperature=trace.plan.temperature,
        max_tokens=trace.plan.max_tokens,
    )


def run_first_pass(
    doc: Document, schema: DatasetSchema, plan: PromptPlan, gateway
) -> RunTrace:
    """Issue the first extraction turn and parse it."""
    exemplars: tuple[GoldInstance, ...] = ()
    if plan.k > 0:
        exemplars = tuple(
            select_exemplars(
                plan.exemplar_pool,
                plan.k,
                plan.selection,
                plan.seed,
                plan.instance_index,
                query=doc,
            )
        )
        conv = build_few_shot(doc, list(exemplars), schema, plan.in_fmt, plan.out_fmt)
    else:
        conv = build_zero_shot(doc, schema, plan.in_fmt, plan.out_fmt)
    trace = RunTrace(
        instance_id=doc.id,
        doc=doc,
        schema=schema,
        plan=plan,
        conversation=conv,
        exemplars=exemplars,
    )
    try:
        resp = gateway.complete(_request(trace))
    except ReplayMiss:
        raise  # a miss means the cache is wrong for this config: fail fast
    except DefnerError as exc:
        trace.failures.append(f"gateway:{exc.code}:{exc}")
        trace.gateway_failed = True
        trace.final = ExtractionSet(parse_status=FAILED)
        trace.turn_sets.append(trace.final)
        return trace
    trace.responses.append(resp)
    trace.conversation = trace.conversation.append("assistant", resp.text)
    parsed = parse_output(resp.text, schema, plan.out_fmt)
    if parsed.parse_status == FAILED:
        trace.failures.append("first_pass_parse_failed")
    trace.turn_sets.append(parsed)
    trace.final = parsed
    return trace


def _followup_turn(trace: RunTrace, message: str, gateway, turn_tag: str) -> None:
    """One follow-up exchange with replacement semantics and fail-safe retention."""
    candidate = trace.conversation.append("user", message)
    req = ChatRequest(
        model_id=trace.plan.model_id,
        messages=candidate.messages,
        temperature=trace.plan.temperature,
        max_tokens=trace.plan.max_tokens,
    )
    try:
        resp = gateway.complete(req)
    except ReplayMiss:
        raise
    except DefnerError as exc:
        trace.failures.append(f"gateway:{exc.code}:{turn_tag}")
        trace.turn_sets.append(trace.final)
        return
    trace.responses.append(resp)
    trace.conversation = candidate.append("assistant", resp.text)
    revised, ok = parse_followup(resp.text, trace.schema, trace.plan.out_fmt, trace.final)
    if not ok:
        trace.failures.append(f"followup_parse_failed:{turn_tag}")
    trace.turn_sets.append(revised)
    trace.final = revised


def run_single_turn_def(trace: RunTrace, bundle: DefinitionBundle, gateway) -> RunTrace:
    """One definition-augmented follow-up correcting all extractions at once."""
    trace.bundle = bundle
    message = fill(
        load_template("followup_single"),
        {
            "definitions": bundle_lines(bundle),
            "format_instruction": format_instruction(trace.schema, trace.plan.out_fmt),
            "document": trace.doc.text,
        },
    ).strip() + "\n"
    _followup_turn(trace, message, gateway, "single")
    return trace


def run_iterative(
    trace: RunTrace, bundle: DefinitionBundle, gateway, with_defs: bool
) -> RunTrace:
    """One follow-up per bundle item, in bundle order.

    With definitions, items lacking one are skipped (there is nothing to
    present); without definitions every item gets a turn.
    """
    trace.bundle = bundle
    items = bundle.defined_items() if with_defs else bundle.items
    template = load_template("followup_iter_def" if with_defs else "followup_iter_nodef")
    for i, item in enumerate(items):
        message = fill(
            template,
            {
                "term": item.term,
                "definition": item.definition,
                "format_instruction": format_instruction(trace.schema, trace.plan.out_fmt),
                "document": trace.doc.text,
            },
        ).strip() + "\n"
        _followup_turn(trace, message, gateway, f"iter{i}")
    return trace


def _fewshot_def_block(
    exemplar: GoldInstance, ex_bundle: DefinitionBundle, schema: DatasetSchema, out_fmt: str
) -> str:
    target = render_target(exemplar, out_fmt, schema)
    return (
        f"Text: {exemplar.document.text}\n"
        f"Definitions:\n{bundle_lines(ex_bundle)}\n"
        f"Corrected output: {target}\n\n"
    )


def run_few_shot_def(
    trace: RunTrace,
    bundle: DefinitionBundle,
    exemplar_bundles: list[DefinitionBundle],
    gateway,
) -> RunTrace:
    """Single follow-up restating each exemplar with definitions and its
    corrected set, then the test instance's own definitions."""
    if len(exemplar_bundles) != len(trace.exemplars):
        raise ValueError("one bundle per exemplar is required")
    trace.bundle = bundle
    blocks = "".join(
        _fewshot_def_block(ex, ex_bundle, trace.schema, trace.plan.out_fmt)
        for ex, ex_bundle in zip(trace.exemplars, exemplar_bundles)
    )
    message = fill(
        load_template("followup_fewshot"),
        {
            "exemplars": blocks,
            "definitions": bundle_lines(bundle),
            "format_instruction": format_instruction(trace.schema, trace.plan.out_fmt),
            "document": trace.doc.text,
        },
    ).strip() + "\n"
    _followup_turn(trace, message, gateway, "fewshot")
    return trace


def gold_extraction(instance: GoldInstance) -> ExtractionSet:
    return ExtractionSet(entities=instance.entities, parse_status="CLEAN")


def run_instance(
    doc: Document,
    schema: DatasetSchema,
    plan: PromptPlan,
    mode: str,
    gateway,
    kb: KnowledgeBase | None = None,
    allowlist: SemanticTypeAllowlist | None = None,
    include_candidates: bool = True,
    threshold: float = DEFAULT_LINK_THRESHOLD,
    bundle_transform=None,
) -> RunTrace:
    """First pass plus the follow-up strategy selected by mode.

    ``bundle_transform`` lets callers swap the collected bundle for an
    ablation variant before any follow-up prompt is built.
    """
    if mode not in AUGMENTATION_MODES:
        raise ValueError(f"unknown augmentation mode {mode!r}")
    trace = run_first_pass(doc, schema, plan, gateway)
    if mode == "NONE" or trace.gateway_failed:
        return trace
    if kb is None or allowlist is None:
        raise ValueError(f"mode {mode} needs a knowledge base and allowlist")
    bundle = collect_definitions(
        doc, trace.first_pass, kb, allowlist, include_candidates, threshold
    )
    if bundle_transform is not None:
        bundle = bundle_transform(bundle)
    if mode == "ZS_DEF":
        return run_single_turn_def(trace, bundle, gateway)
    if mode == "IP":
        return run_iterative(trace, bundle, gateway, with_defs=False)
    if mode == "IP_DEF":
        return run_iterative(trace, bundle, gateway, with_defs=True)
    # FS_DEF
    exemplar_bundles = [
        collect_definitions(
            ex.document, gold_extraction(ex), kb, allowlist, include_candidates=False
        )
        for ex in trace.exemplars
    ]
    return run_few_shot_def(trace, bundle, exemplar_bundles, gateway)
