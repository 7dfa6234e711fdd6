"""Text normalization and character n-gram similarity helpers.

One normalization pipeline is shared by alias matching, surface-form
scoring, and bundle deduplication so that the same string always
normalizes the same way everywhere.
"""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from math import sqrt

# Strips leading/trailing runs of anything that is not a word character.
# Whitespace is included, so edge-stripping never exposes new edge spaces
# (normalization must be idempotent).
_EDGE_JUNK = re.compile(r"^[\W_]+|[\W_]+$", re.UNICODE)


def normalize(
    s: str,
    *,
    lowercase: bool = True,
    collapse_whitespace: bool = True,
    strip_edge_punct: bool = True,
) -> str:
    """Normalize a surface form. Idempotent for every flag combination."""
    out = s
    if lowercase:
        out = out.lower()
    if collapse_whitespace:
        out = " ".join(out.split())
    if strip_edge_punct:
        out = _EDGE_JUNK.sub("", out)
    return out


def snake(label: str) -> str:
    """Lowercase identifier form of a schema label ("Clinical Trial" -> "clinical_trial")."""
    return re.sub(r"[^\w]+", "_", label.strip().lower()).strip("_")


def char_trigrams(s: str) -> frozenset[str]:
    """Character 3-gram set; strings shorter than 3 chars stand for themselves."""
    if len(s) < 3:
        return frozenset((s,)) if s else frozenset()
    return frozenset(s[i : i + 3] for i in range(len(s) - 2))


def trigram_jaccard(a: str, b: str) -> float:
    ta, tb = char_trigrams(a), char_trigrams(b)
    if not ta and not tb:
        return 1.0
    union = len(ta | tb)
    return len(ta & tb) / union if union else 0.0


def trigram_counts(s: str) -> Counter:
    if len(s) < 3:
        return Counter((s,)) if s else Counter()
    return Counter(s[i : i + 3] for i in range(len(s) - 2))


def trigram_cosine(a: str, b: str) -> float:
    """Cosine similarity over character 3-gram term-frequency vectors."""
    ca, cb = trigram_counts(a), trigram_counts(b)
    if not ca or not cb:
        return 1.0 if a == b else 0.0
    dot = sum(v * cb[g] for g, v in ca.items())
    na = sqrt(sum(v * v for v in ca.values()))
    nb = sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb)


def mix_seed(seed: int, *parts: object) -> int:
    """Derive a stable per-item seed from a run seed and arbitrary tags."""
    raw = ":".join([str(seed), *[str(p) for p in parts]])
    return int.from_bytes(hashlib.sha256(raw.encode("utf-8")).digest()[:8], "big")
