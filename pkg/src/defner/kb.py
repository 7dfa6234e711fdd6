"""Concept-definition knowledge snapshot: loading, semantic-type filtering,
dictionary linking, and definition lookup.

The snapshot is a UTF-8 TSV with a header row and columns exactly
cui, canonical_name, aliases (pipe-separated), tui, definition, source.
An empty definition cell means "no definition".

Linking is a deterministic dictionary linker: greedy longest match over
normalized token windows against the alias index, with a character
3-gram Jaccard fallback. No external model is involved, so linked output
is a pure function of (text, kb, allowlist, threshold).
"""
from __future__ import annotations

import csv
import hashlib
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import DatasetSchema, TypedEntity
from .errors import DuplicateCui, MalformedRow, ReplayMiss
from .parsing import ExtractionSet
from .textnorm import char_trigrams, normalize

log = logging.getLogger(__name__)

SOURCES = ("UMLS", "WIKIDATA", "GENERATED")
GENERATED_TUI = "T000"  # reserved: generated definitions are never linkable KB content

_TUI_RE = re.compile(r"^T\d{3}$")
_TOKEN_RE = re.compile(r"\S+")

DEFAULT_LINK_THRESHOLD = 0.7
# Fallback scores must stay strictly below the exact-match score of 1.0
# even when two distinct strings share identical trigram sets.
_FALLBACK_CAP = 0.999


@dataclass(frozen=True)
class Concept:
    cui: str
    canonical_name: str
    aliases: tuple[str, ...]
    tui: str
    definition: str | None
    source: str


@dataclass(frozen=True)
class SemanticTypeAllowlist:
    codes: frozenset[str]

    def __contains__(self, tui: str) -> bool:
        return tui in self.codes

    @staticmethod
    def default() -> "SemanticTypeAllowlist":
        text = resources.files("defner").joinpath("data/default_tuis.txt").read_text("utf-8")
        return SemanticTypeAllowlist(_parse_allowlist(text))

    @staticmethod
    def from_file(path: str | Path) -> "SemanticTypeAllowlist":
        with open(path, encoding="utf-8") as fh:
            return SemanticTypeAllowlist(_parse_allowlist(fh.read()))


def _parse_allowlist(text: str) -> frozenset[str]:
    codes = set()
    for line in text.splitlines():
        code = line.strip()
        if not code or code.startswith("#"):
            continue
        if not _TUI_RE.match(code):
            raise MalformedRow(f"allowlist entry {code!r} is not a TUI code")
        codes.add(code)
    if not codes:
        raise MalformedRow("allowlist is empty")
    return frozenset(codes)


@dataclass(frozen=True)
class LinkedMention:
    span_text: str
    cui: str
    score: float
    start: int
    end: int


@dataclass
class KnowledgeBase:
    concepts: dict[str, Concept]
    alias_index: dict[str, tuple[str, ...]]  # normalized alias -> sorted cuis
    _fallback_index: dict | None = field(default=None, repr=False, compare=False)

    def concept(self, cui: str) -> Concept:
        return self.concepts[cui]

    @property
    def max_alias_tokens(self) -> int:
        if not self.alias_index:
            return 1
        return max(len(a.split()) for a in self.alias_index)


def load_kb(path: str | Path, source_filter: str | None = None) -> KnowledgeBase:
    """Load a snapshot TSV; optionally keep only one source's rows."""
    if source_filter is not None and source_filter not in SOURCES:
        raise MalformedRow(f"unknown source filter {source_filter!r}")
    concepts: dict[str, Concept] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        expected = ["cui", "canonical_name", "aliases", "tui", "definition", "source"]
        if header != expected:
            raise MalformedRow(f"{path}: header must be {expected}, got {header}")
        for rowno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 6:
                raise MalformedRow(f"{path}:{rowno}: expected 6 columns, got {len(row)}")
            cui, name, aliases_cell, tui, definition, source = (c.strip() for c in row)
            if not _TUI_RE.match(tui):
                raise MalformedRow(f"{path}:{rowno}: bad TUI {tui!r}")
            if source not in SOURCES:
                raise MalformedRow(f"{path}:{rowno}: bad source {source!r}")
            if not cui or not name:
                raise MalformedRow(f"{path}:{rowno}: empty cui or canonical_name")
            if source_filter is not None and source != source_filter:
                continue
            if cui in concepts:
                raise DuplicateCui(f"{path}:{rowno}: duplicate cui {cui!r}")
            aliases = [a for a in (p.strip() for p in aliases_cell.split("|")) if a]
            if name not in aliases:
                aliases.insert(0, name)
            concepts[cui] = Concept(
                cui=cui,
                canonical_name=name,
                aliases=tuple(aliases),
                tui=tui,
                definition=definition or None,
                source=source,
            )
    index: dict[str, set[str]] = defaultdict(set)
    for concept in concepts.values():
        for alias in concept.aliases:
            norm = normalize(alias)
            if norm:
                index[norm].add(concept.cui)
    alias_index = {alias: tuple(sorted(cuis)) for alias, cuis in index.items()}
    return KnowledgeBase(concepts=concepts, alias_index=alias_index)


def lookup_definition(surface: str, kb: KnowledgeBase) -> tuple[str, str] | None:
    """Exact normalized-alias lookup; smallest cui wins on ambiguity.

    Returns (cui, definition) or None when the alias is unknown or the
    winning concept carries no definition.
    """
    cuis = kb.alias_index.get(normalize(surface))
    if not cuis:
        return None
    winner = kb.concepts[cuis[0]]  # index is sorted, so [0] is the smallest cui
    if winner.definition is None:
        return None
    return winner.cui, winner.definition


def _tokenize(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def _fallback_index(kb: KnowledgeBase, allowlist: SemanticTypeAllowlist):
    """Inverted trigram index over allowed aliases, built once per (kb, allowlist)."""
    key = frozenset(allowlist.codes)
    cached = kb._fallback_index
    if cached is not None and cached[0] == key:
        return cached[1], cached[2]
    aliases = []  # (norm_alias, trigrams, smallest allowed cui)
    postings: dict[str, list[int]] = defaultdict(list)
    for norm_alias in sorted(kb.alias_index):
        allowed = [c for c in kb.alias_index[norm_alias] if kb.concepts[c].tui in allowlist]
        if not allowed:
            continue
        grams = char_trigrams(norm_alias)
        idx = len(aliases)
        aliases.append((norm_alias, grams, allowed[0]))
        for g in grams:
            postings[g].append(idx)
    kb._fallback_index = (key, aliases, dict(postings))
    return aliases, dict(postings)


def _best_fallback(window_norm: str, aliases, postings, threshold: float):
    grams = char_trigrams(window_norm)
    if not grams:
        return None
    counts: dict[int, int] = defaultdict(int)
    for g in grams:
        for idx in postings.get(g, ()):
            counts[idx] += 1
    best = None  # (score, cui)
    for idx, shared in counts.items():
        alias_norm, alias_grams, cui = aliases[idx]
        union = len(grams) + len(alias_grams) - shared
        score = shared / union if union else 0.0
        if score < threshold:
            continue
        score = min(score, _FALLBACK_CAP)
        if best is None or score > best[0] or (score == best[0] and cui < best[1]):
            best = (score, cui)
    return best


def link_mentions(
    text: str,
    kb: KnowledgeBase,
    allowlist: SemanticTypeAllowlist | None = None,
    threshold: float = DEFAULT_LINK_THRESHOLD,
) -> list[LinkedMention]:
    """Deterministic dictionary linking over normalized token windows.

    Greedy longest exact alias match first; windows with no exact hit fall
    back to trigram Jaccard against allowed aliases. Accepted mentions
    never overlap; output is ordered by span start.
    """
    if allowlist is None:
        allowlist = SemanticTypeAllowlist.default()
    tokens = _tokenize(text)
    if not tokens:
        return []
    max_win = min(kb.max_alias_tokens, 8)
    fb_aliases, fb_postings = _fallback_index(kb, allowlist)
    mentions: list[LinkedMention] = []
    i = 0
    n = len(tokens)
    while i < n:
        accepted = None
        # exact pass, longest window first
        for width in range(min(max_win, n - i), 0, -1):
            start, end = tokens[i][1], tokens[i + width - 1][2]
            window_norm = normalize(text[start:end])
            if not window_norm:
                continue
            cuis = kb.alias_index.get(window_norm)
            if cuis:
                allowed = [c for c in cuis if kb.concepts[c].tui in allowlist]
                if allowed:
                    accepted = LinkedMention(
                        span_text=text[start:end],
                        cui=allowed[0],
                        score=1.0,
                        start=start,
                        end=end,
                    )
                    i += width
                    break
        if accepted is None:
            # fallback pass, longest window first
            for width in range(min(max_win, n - i), 0, -1):
                start, end = tokens[i][1], tokens[i + width - 1][2]
                window_norm = normalize(text[start:end])
                if not window_norm:
                    continue
                hit = _best_fallback(window_norm, fb_aliases, fb_postings, threshold)
                if hit is not None:
                    accepted = LinkedMention(
                        span_text=text[start:end],
                        cui=hit[1],
                        score=hit[0],
                        start=start,
                        end=end,
                    )
                    i += width
                    break
        if accepted is not None:
            mentions.append(accepted)
        else:
            i += 1
    return mentions


def linker_as_extractor(
    text: str,
    kb: KnowledgeBase,
    allowlist: SemanticTypeAllowlist,
    schema: DatasetSchema,
    tui_to_label: dict[str, str] | None = None,
    threshold: float = DEFAULT_LINK_THRESHOLD,
) -> ExtractionSet:
    """Baseline extractor: every linked mention becomes a typed entity."""
    tui_to_label = tui_to_label or {}
    default_label = schema.labels[0].label
    entities = []
    for mention in link_mentions(text, kb, allowlist, threshold):
        tui = kb.concepts[mention.cui].tui
        entities.append(
            TypedEntity(
                surface=mention.span_text,
                entity_type=tui_to_label.get(tui, default_label),
            )
        )
    return ExtractionSet(entities=tuple(entities), parse_status="CLEAN")


def generate_definitions(terms, gateway, template) -> list["Concept"]:
    """Ask a model for one definition per term; failed terms yield no Concept.

    Returned concepts carry source GENERATED and the reserved TUI T000.
    The request budget follows the definition-generation setting (4096
    max tokens, temperature 0).
    """
    from .gateway import ChatRequest
    from .prompting import Conversation

    concepts: list[Concept] = []
    for term in terms:
        prompt = template.replace("{{term}}", term)
        conv = Conversation.user(prompt)
        req = ChatRequest(
            model_id=gateway.model_id,
            messages=conv.messages,
            temperature=0.0,
            max_tokens=4096,
        )
        try:
            resp = gateway.complete(req)
        except ReplayMiss:
            raise  # a miss means the cache is wrong for this term set: fail fast
        except Exception as exc:  # noqa: BLE001 - per-term failures are recorded, not fatal
            log.warning("definition generation failed for %r: %s", term, exc)
            continue
        digest = hashlib.sha256(normalize(term).encode("utf-8")).hexdigest()[:9]
        concepts.append(
            Concept(
                cui=f"G{digest}",
                canonical_name=term,
                aliases=(term,),
                tui=GENERATED_TUI,
                definition=resp.text.strip() or None,
                source="GENERATED",
            )
        )
    return concepts


def append_generated_rows(path: str | Path, concepts: list[Concept]) -> int:
    """Append GENERATED concepts to a snapshot TSV, writing a header if new."""
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        if new_file:
            writer.writerow(["cui", "canonical_name", "aliases", "tui", "definition", "source"])
        for c in concepts:
            writer.writerow(
                [c.cui, c.canonical_name, "|".join(c.aliases), c.tui, c.definition or "", c.source]
            )
    return len(concepts)
