"""Definition-relevance and definition-source ablation variants.

Each variant is a pure function of (instance, mode, seed, datasets, kb):
per-instance randomness is seeded by mixing the run seed with the
instance id, so reruns produce identical bundles.
"""
from __future__ import annotations

import random

from .augment import BundleItem, DefinitionBundle, collect_definitions, gold_extraction
from .corpus import Dataset, GoldInstance
from .errors import DonorRequired, EmptyDonorPool, EmptySource
from .kb import DEFAULT_LINK_THRESHOLD, KnowledgeBase, SemanticTypeAllowlist, load_kb
from .textnorm import mix_seed, normalize

ABLATION_MODES = ("DIFF_ENTITY", "DIFF_TYPE", "SWAP_DEF", "DIFF_DOMAIN", "ONLY_ENTS")


def _draw_donor(
    rng: random.Random, pool: tuple[GoldInstance, ...], exclude_id: str | None
) -> GoldInstance:
    candidates = [inst for inst in pool if inst.document.id != exclude_id]
    if not candidates:
        raise EmptyDonorPool("no donor instance available")
    return candidates[rng.randrange(len(candidates))]


def _donor_bundle(
    donor: GoldInstance,
    kb: KnowledgeBase,
    allowlist: SemanticTypeAllowlist,
    threshold: float,
) -> DefinitionBundle:
    return collect_definitions(
        donor.document,
        gold_extraction(donor),
        kb,
        allowlist,
        include_candidates=True,
        threshold=threshold,
    )


def _derange(rng: random.Random, n: int) -> list[int]:
    """Seeded rejection sampling over permutations until no fixed point."""
    indices = list(range(n))
    while True:
        perm = indices[:]
        rng.shuffle(perm)
        if all(perm[i] != i for i in indices):
            return perm


def _swap_definitions(
    bundle: DefinitionBundle, rng: random.Random, kb: KnowledgeBase
) -> DefinitionBundle:
    defined = [i for i, item in enumerate(bundle.items) if item.definition]
    items = list(bundle.items)
    if len(defined) >= 2:
        perm = _derange(rng, len(defined))
        originals = [items[i].definition for i in defined]
        for slot, src in zip(defined, perm):
            item = items[slot]
            items[slot] = BundleItem(
                term=item.term, definition=originals[src], origin=item.origin, cui=item.cui
            )
    elif len(defined) == 1:
        slot = defined[0]
        current = items[slot].definition
        alternatives = sorted(
            {c.definition for c in kb.concepts.values() if c.definition and c.definition != current}
        )
        if not alternatives:
            raise EmptyDonorPool("knowledge base has no alternative definition to swap in")
        replacement = alternatives[rng.randrange(len(alternatives))]
        item = items[slot]
        items[slot] = BundleItem(
            term=item.term, definition=replacement, origin=item.origin, cui=item.cui
        )
    return DefinitionBundle(items=tuple(items))


def variant_bundle(
    instance: GoldInstance,
    base_bundle: DefinitionBundle,
    mode: str,
    dataset: Dataset,
    donor_dataset: Dataset | None,
    kb: KnowledgeBase,
    seed: int,
    allowlist: SemanticTypeAllowlist | None = None,
    threshold: float = DEFAULT_LINK_THRESHOLD,
) -> DefinitionBundle:
    """Build the ablated bundle actually injected into follow-up prompts."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    if allowlist is None:
        allowlist = SemanticTypeAllowlist.default()
    rng = random.Random(mix_seed(seed, "ablate", instance.document.id))

    if mode == "ONLY_ENTS":
        return DefinitionBundle(
            items=tuple(
                BundleItem(term=i.term, definition="", origin=i.origin, cui=i.cui)
                for i in base_bundle.items
            )
        )
    if mode == "SWAP_DEF":
        return _swap_definitions(base_bundle, rng, kb)
    if mode == "DIFF_DOMAIN":
        if donor_dataset is None:
            raise DonorRequired("DIFF_DOMAIN needs a donor dataset")
        donor = _draw_donor(rng, donor_dataset.test, exclude_id=None)
        return _donor_bundle(donor, kb, allowlist, threshold)

    # DIFF_ENTITY / DIFF_TYPE draw a donor from the same dataset
    donor = _draw_donor(rng, dataset.test, exclude_id=instance.document.id)
    bundle = _donor_bundle(donor, kb, allowlist, threshold)
    if mode == "DIFF_ENTITY":
        return bundle
    gold_terms = {normalize(e.surface) for e in donor.entities}
    return DefinitionBundle(
        items=tuple(i for i in bundle.items if normalize(i.term) not in gold_terms)
    )


def source_variant(kb_path, source: str) -> KnowledgeBase:
    """Reload the snapshot keeping only one definition source."""
    kb = load_kb(kb_path, source_filter=source)
    if not kb.concepts:
        raise EmptySource(f"snapshot {kb_path} has no rows with source {source}")
    return kb
