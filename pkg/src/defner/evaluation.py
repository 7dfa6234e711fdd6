"""Strict entity-level scoring, error taxonomy, multi-seed aggregation,
and report emission (CSV, plain-text table, and a bar figure).

Matching is set-based: per instance, predictions and golds are
normalized and deduplicated into (surface, type) keys, then tp/fp/fn are
summed corpus-wide (micro). Duplicates never inflate tp.
"""
from __future__ import annotations

import csv
import json
import random
import statistics
from dataclasses import dataclass
from pathlib import Path

from .corpus import GoldInstance, TypedEntity
from .errors import UnalignedIds
from .parsing import ExtractionSet
from .textnorm import mix_seed, normalize

TYPE_MISMATCH = "TYPE_MISMATCH"
BOUNDARY = "BOUNDARY"
EXTRA = "EXTRA"
MISSING = "MISSING"
ERROR_CATEGORIES = (TYPE_MISMATCH, BOUNDARY, EXTRA, MISSING)


@dataclass(frozen=True)
class MatchPolicy:
    lowercase: bool = True
    collapse_whitespace: bool = True
    strip_edge_punct: bool = True
    type_sensitive: bool = True

    def surface(self, s: str) -> str:
        return normalize(
            s,
            lowercase=self.lowercase,
            collapse_whitespace=self.collapse_whitespace,
            strip_edge_punct=self.strip_edge_punct,
        )

    def key(self, entity: TypedEntity) -> tuple:
        surface = self.surface(entity.surface)
        if self.type_sensitive:
            return (surface, entity.entity_type)
        return (surface,)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def _metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    if tp == 0 and fp == 0 and fn == 0:
        return Metrics(0, 0, 0, 1.0, 1.0, 1.0)  # vacuously perfect
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, fn, precision, recall, f1)


def _key_sets(
    pred: ExtractionSet, gold: GoldInstance, policy: MatchPolicy
) -> tuple[set, set]:
    pred_keys = {policy.key(e) for e in pred.entities if policy.surface(e.surface)}
    gold_keys = {policy.key(e) for e in gold.entities if policy.surface(e.surface)}
    return pred_keys, gold_keys


def strict_prf(
    preds: list[tuple[str, ExtractionSet]],
    golds: list[GoldInstance],
    policy: MatchPolicy,
) -> Metrics:
    """Micro-averaged precision/recall/F1 over exact normalized key matches."""
    gold_by_id = {g.document.id: g for g in golds}
    pred_ids = [pid for pid, _ in preds]
    if set(pred_ids) != set(gold_by_id) or len(pred_ids) != len(set(pred_ids)):
        raise UnalignedIds(
            f"prediction ids and gold ids differ "
            f"({len(pred_ids)} preds vs {len(gold_by_id)} golds)"
        )
    tp = fp = fn = 0
    for pid, pred in preds:
        pred_keys, gold_keys = _key_sets(pred, gold_by_id[pid], policy)
        tp += len(pred_keys & gold_keys)
        fp += len(pred_keys - gold_keys)
        fn += len(gold_keys - pred_keys)
    return _metrics_from_counts(tp, fp, fn)


def _tokens(surface: str) -> set[str]:
    return set(surface.split())


def classify_errors(
    pred: ExtractionSet, gold: GoldInstance, policy: MatchPolicy
) -> list[tuple[TypedEntity, str]]:
    """Categorize every unmatched prediction and gold for one instance.

    After exact matches are removed, pairs with equal surface but
    different type are TYPE_MISMATCH; pairs whose surfaces contain one
    another or share a token are BOUNDARY (both consume the pair and
    report the predicted entity); leftovers are EXTRA (predictions) or
    MISSING (golds). Pairing is greedy in sorted-key order, so the
    taxonomy is deterministic.
    """
    pred_keys, gold_keys = _key_sets(pred, gold, policy)
    unmatched_preds = sorted(pred_keys - gold_keys)
    unmatched_golds = sorted(gold_keys - pred_keys)
    results: list[tuple[TypedEntity, str]] = []

    def entity(key: tuple) -> TypedEntity:
        if policy.type_sensitive:
            return TypedEntity(surface=key[0], entity_type=key[1])
        return TypedEntity(surface=key[0], entity_type="")

    if policy.type_sensitive:
        leftovers = []
        for pkey in unmatched_preds:
            partner = next(
                (g for g in unmatched_golds if g[0] == pkey[0] and g[1] != pkey[1]), None
            )
            if partner is not None:
                unmatched_golds.remove(partner)
                results.append((entity(pkey), TYPE_MISMATCH))
            else:
                leftovers.append(pkey)
        unmatched_preds = leftovers

    leftovers = []
    for pkey in unmatched_preds:
        psurf = pkey[0]
        partner = next(
            (
                g
                for g in unmatched_golds
                if psurf in g[0] or g[0] in psurf or (_tokens(psurf) & _tokens(g[0]))
            ),
            None,
        )
        if partner is not None:
            unmatched_golds.remove(partner)
            results.append((entity(pkey), BOUNDARY))
        else:
            leftovers.append(pkey)

    for pkey in leftovers:
        results.append((entity(pkey), EXTRA))
    for gkey in unmatched_golds:
        results.append((entity(gkey), MISSING))
    return results


@dataclass(frozen=True)
class ErrorDistribution:
    percent: dict[str, float]
    total: int

    @property
    def empty(self) -> bool:
        return self.total == 0


def error_distribution(classifications: list[tuple[TypedEntity, str]]) -> ErrorDistribution:
    counts = {cat: 0 for cat in ERROR_CATEGORIES}
    for _, cat in classifications:
        counts[cat] += 1
    total = len(classifications)
    if total == 0:
        return ErrorDistribution(percent={cat: 0.0 for cat in ERROR_CATEGORIES}, total=0)
    return ErrorDistribution(
        percent={cat: 100.0 * counts[cat] / total for cat in ERROR_CATEGORIES}, total=total
    )


@dataclass(frozen=True)
class SeedAggregate:
    mean: dict[str, float]
    stddev: dict[str, float]
    n_seeds: int


def aggregate_seeds(per_seed: list[Metrics]) -> SeedAggregate:
    """Mean and sample (n-1) standard deviation per metric across seeds."""
    if not per_seed:
        raise ValueError("need metrics from at least one seed")
    fields = ("precision", "recall", "f1")
    mean = {}
    stddev = {}
    for name in fields:
        values = [getattr(m, name) for m in per_seed]
        mean[name] = statistics.fmean(values)
        stddev[name] = statistics.stdev(values) if len(values) > 1 else 0.0
    return SeedAggregate(mean=mean, stddev=stddev, n_seeds=len(per_seed))


def _fmt_row(name: str, agg: SeedAggregate, baseline_f1: float | None) -> dict:
    f1 = 100.0 * agg.mean["f1"]
    row = {
        "name": name,
        "precision": f"{100.0 * agg.mean['precision']:.2f}",
        "recall": f"{100.0 * agg.mean['recall']:.2f}",
        "f1": f"{f1:.2f}",
        "f1_std": f"{100.0 * agg.stddev['f1']:.2f}",
        "n_seeds": str(agg.n_seeds),
    }
    if baseline_f1 is None:
        row["delta"] = ""
    else:
        row["delta"] = f"{f1 - 100.0 * baseline_f1:+.2f}"
    return row


def report(
    baseline: tuple[str, SeedAggregate],
    variants: list[tuple[str, SeedAggregate]],
    out_dir: str | Path,
) -> None:
    """Write report.csv, report.txt, and report.png under out_dir.

    Each variant row shows its F1 and the signed delta against the
    baseline, e.g. "76.19 (+5.27)".
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_name, base_agg = baseline
    rows = [_fmt_row(base_name, base_agg, None)]
    for name, agg in variants:
        rows.append(_fmt_row(name, agg, base_agg.mean["f1"]))

    with open(out_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["name", "precision", "recall", "f1", "f1_std", "delta", "n_seeds"]
        )
        writer.writeheader()
        writer.writerows(rows)

    width = max(len(r["name"]) for r in rows) + 2
    lines = [f"{'condition':<{width}}{'P':>8}{'R':>8}{'F1':>8}  {'±std':>6}  delta"]
    for r in rows:
        delta = f"({r['delta']})" if r["delta"] else ""
        lines.append(
            f"{r['name']:<{width}}{r['precision']:>8}{r['recall']:>8}{r['f1']:>8}  "
            f"{r['f1_std']:>6}  {delta}"
        )
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    _render_figure(rows, out_dir / "report.png")


def _render_figure(rows: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r["name"] for r in rows]
    scores = [float(r["f1"]) for r in rows]
    errs = [float(r["f1_std"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(rows) + 2), 3.5))
    bars = ax.bar(names, scores, yerr=errs, capsize=3)
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, max(scores + [1.0]) * 1.2)
    for bar, score in zip(bars, scores):
        ax.annotate(
            f"{score:.1f}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def export_audit_sample(
    preds: list[tuple[str, ExtractionSet]],
    golds: list[GoldInstance],
    policy: MatchPolicy,
    n: int,
    seed: int,
    out_path: str | Path,
) -> int:
    """Write a seeded sample of false positives/negatives for human review."""
    gold_by_id = {g.document.id: g for g in golds}
    rows = []
    for pid, pred in preds:
        gold = gold_by_id.get(pid)
        if gold is None:
            continue
        pred_keys, gold_keys = _key_sets(pred, gold, policy)
        for key in sorted(pred_keys - gold_keys):
            rows.append((pid, key[0], key[1] if policy.type_sensitive else "", "fp"))
        for key in sorted(gold_keys - pred_keys):
            rows.append((pid, key[0], key[1] if policy.type_sensitive else "", "fn"))
    if n < len(rows):
        rng = random.Random(mix_seed(seed, "audit", len(rows)))
        rows = sorted(rng.sample(rows, n))
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "entity", "type", "error"])
        writer.writerows(rows)
    return len(rows)


def metrics_to_json(m: Metrics) -> dict:
    return {
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
    }


def write_metrics_file(
    path: str | Path,
    per_seed: dict[int, Metrics],
    aggregate: SeedAggregate,
    extra: dict | None = None,
) -> None:
    doc = {
        "per_seed": {str(seed): metrics_to_json(m) for seed, m in sorted(per_seed.items())},
        "aggregate": {
            "mean": aggregate.mean,
            "stddev": aggregate.stddev,
            "n_seeds": aggregate.n_seeds,
        },
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )
