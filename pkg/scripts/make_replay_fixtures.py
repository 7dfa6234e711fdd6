#!/usr/bin/env python3
"""Record the bundled replay cache and pin the expected metrics.

Builds deterministic scripted response queues for three run modes (NONE,
ZS+Def single turn, IP+Def iterative) over the cdr_like fixture corpus,
executes each run through the real CLI in record mode, and copies the
resulting metrics files into tests/fixtures/pinned/.

Rerunning regenerates identical files. Run from the repository root:

    python3 scripts/make_replay_fixtures.py
"""
from __future__ import annotations

import json
import random
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from defner.augment import collect_definitions  # noqa: E402
from defner.cli import main as cli_main  # noqa: E402
from defner.corpus import GoldInstance, TypedEntity, load_dataset, subsample_test  # noqa: E402
from defner.kb import SemanticTypeAllowlist, load_kb, lookup_definition  # noqa: E402
from defner.parsing import parse_output  # noqa: E402
from defner.prompting import render_target  # noqa: E402
from defner.textnorm import mix_seed, normalize  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"
CONFIGS = FIXTURES / "configs"
SCRIPTS = FIXTURES / "scripts"
CACHE = FIXTURES / "replay_cache"
PINNED = FIXTURES / "pinned"

SEED = 7
SUBSAMPLE = 20
MODEL_ID = "fixture-model"
FP_TAG = 4242  # seeds the simulated model's first-pass behavior
REV_TAG = 4243  # seeds its single-turn revision behavior

MODES = [
    ("none", "NONE", "ZS"),
    ("zs_def", "ZS_DEF", "ZS+Def"),
    ("ip_def", "IP_DEF", "IP+Def"),
]


def render(entities, schema, doc):
    inst = GoldInstance(doc, tuple(entities))
    return render_target(inst, "JSON", schema)


def synth_first_pass(inst, distractors):
    """Deterministic imperfect extraction: drops some golds, adds a distractor."""
    rng = random.Random(mix_seed(FP_TAG, inst.document.id))
    kept, dropped = [], []
    for ent in inst.entities:
        (dropped if rng.random() < 0.35 else kept).append(ent)
    extras = []
    if rng.random() < 0.5:
        extras.append(TypedEntity(distractors[rng.randrange(len(distractors))], "Chemicals"))
    return kept + extras, dropped, extras


def synth_single_turn_revision(inst, kept_plus_extras, dropped, extras):
    """The simulated model fixes most errors when shown the whole bundle."""
    rng = random.Random(mix_seed(REV_TAG, inst.document.id))
    extra_set = set(extras)
    revised = [e for e in kept_plus_extras if not (e in extra_set and rng.random() < 0.8)]
    for ent in dropped:
        if rng.random() < 0.8:
            revised.append(ent)
    return revised


def apply_iterative_correction(current, item, dropped, extras):
    """One concept per turn: restore a dropped gold or drop a planted extra."""
    term = normalize(item.term)
    out = list(current)
    for ent in dropped:
        if normalize(ent.surface) == term and ent not in out:
            out.append(ent)
    for ent in extras:
        if normalize(ent.surface) == term and ent in out:
            out.remove(ent)
    return out


def build_queue(mode, dataset, kb, allowlist, distractors):
    queue = []
    for inst in dataset.test:
        doc = inst.document
        fp_entities, dropped, extras = synth_first_pass(inst, distractors)
        first_response = render(fp_entities, dataset.schema, doc)
        queue.append(first_response)
        if mode == "NONE":
            continue
        parsed = parse_output(first_response, dataset.schema, "JSON")
        bundle = collect_definitions(doc, parsed, kb, allowlist, include_candidates=True)
        if mode == "ZS_DEF":
            revised = synth_single_turn_revision(inst, list(parsed.entities), dropped, extras)
            queue.append(render(revised, dataset.schema, doc))
        elif mode == "IP_DEF":
            current = list(parsed.entities)
            for item in bundle.defined_items():
                current = apply_iterative_correction(current, item, dropped, extras)
                queue.append(render(current, dataset.schema, doc))
    return queue


def config_for(name, mode, label):
    return {
        "data_path": "../corpora/cdr_like.jsonl",
        "schema_path": "../corpora/cdr_like.schema.json",
        "kb_path": "../kb/snapshot.tsv",
        "backend": "SCRIPTED",
        "script_path": f"../scripts/{name}.json",
        "model_id": MODEL_ID,
        "in_fmt": "TEXT",
        "out_fmt": "JSON",
        "k": 0,
        "seeds": [SEED],
        "mode": mode,
        "subsample_n": SUBSAMPLE,
        "include_candidates": True,
        "label": label,
    }


def main() -> None:
    for directory in (CONFIGS, SCRIPTS, PINNED):
        directory.mkdir(parents=True, exist_ok=True)
    if CACHE.exists():
        shutil.rmtree(CACHE)
    CACHE.mkdir(parents=True)

    dataset = load_dataset(
        FIXTURES / "corpora" / "cdr_like.jsonl", FIXTURES / "corpora" / "cdr_like.schema.json"
    )
    dataset = subsample_test(dataset, SUBSAMPLE, SEED)
    kb = load_kb(FIXTURES / "kb" / "snapshot.tsv")
    allowlist = SemanticTypeAllowlist.default()

    gold_surfaces = {
        normalize(e.surface) for inst in dataset.test for e in inst.entities
    }
    distractors = [
        term
        for term in ("caffeine", "nicotine", "atropine", "diazepam")
        if lookup_definition(term, kb) and normalize(term) not in gold_surfaces
    ]
    assert distractors, "need at least one defined distractor term"

    for name, mode, label in MODES:
        queue = build_queue(mode, dataset, kb, allowlist, distractors)
        (SCRIPTS / f"{name}.json").write_text(
            json.dumps(queue, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        config = config_for(name, mode, label)
        config_path = CONFIGS / f"run_{name}.json"
        config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

        with tempfile.TemporaryDirectory() as tmp:
            out_dir = Path(tmp) / "run"
            code = cli_main(
                [
                    "run",
                    str(config_path),
                    "--out",
                    str(out_dir),
                    "--cache-dir",
                    str(CACHE),
                    "--record",
                ]
            )
            if code != 0:
                raise SystemExit(f"recording {name} failed with exit code {code}")
            shutil.copy(out_dir / "metrics.json", PINNED / f"metrics_{name}.json")
            doc = json.loads((PINNED / f"metrics_{name}.json").read_text())
            f1 = doc["per_seed"][str(SEED)]["f1"]
            print(f"{label:7s} recorded: {len(queue):4d} responses, F1={100 * f1:.2f}")


if __name__ == "__main__":
    main()
