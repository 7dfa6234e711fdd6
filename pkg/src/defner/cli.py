"""Command-line entry point and end-to-end experiment orchestration.

Commands: defner run | eval | link | gen-defs | report.
Exit codes: 0 success, 2 configuration error, 3 backend failure above
threshold, 4 replay miss.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import ablate, augment, evaluation, gateway as gw
from .corpus import (
    Dataset,
    GoldInstance,
    TypedEntity,
    load_dataset,
    subsample_test,
)
from .errors import ConfigError, DefnerError, ReplayMiss, UnalignedIds
from .kb import (
    DEFAULT_LINK_THRESHOLD,
    SemanticTypeAllowlist,
    generate_definitions,
    append_generated_rows,
    link_mentions,
    load_kb,
)
from .parsing import ExtractionSet
from .prompting import (
    INPUT_FORMATS,
    SELECTION_STRATEGIES,
    catalog_version,
    load_template,
)
from .textnorm import mix_seed

log = logging.getLogger("defner")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_REPLAY_MISS = 4

GATEWAY_FAILURE_THRESHOLD = 0.10
_SAFE_NAME_RE = re.compile(r"[^\w.-]+")

_CONFIG_KEYS = {
    "data_path",
    "schema_path",
    "kb_path",
    "allowlist_path",
    "backend",
    "model_id",
    "base_url",
    "script_path",
    "in_fmt",
    "out_fmt",
    "k",
    "selection",
    "seeds",
    "mode",
    "ablation",
    "subsample_n",
    "cache_dir",
    "concurrency",
    "include_candidates",
    "link_threshold",
    "out_dir",
    "label",
    "template_catalog_version",  # written into run-dir copies; ignored on load
}
_ABLATION_KEYS = {"mode", "donor_data_path", "donor_schema_path"}


@dataclass
class ExperimentConfig:
    data_path: str
    schema_path: str
    backend: str
    model_id: str
    in_fmt: str
    out_fmt: str
    seeds: list[int]
    mode: str
    kb_path: str | None = None
    allowlist_path: str | None = None
    base_url: str | None = None
    script_path: str | None = None
    k: int = 0
    selection: str = "RANDOM_SHUFFLED"
    ablation: dict | None = None
    subsample_n: int | None = None
    cache_dir: str | None = None
    concurrency: int = 1
    include_candidates: bool = True
    link_threshold: float = DEFAULT_LINK_THRESHOLD
    out_dir: str | None = None
    label: str | None = None

    @property
    def condition(self) -> str:
        if self.label:
            return self.label
        name = self.mode
        if self.ablation:
            name += "+" + self.ablation["mode"]
        return name

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = Path(path).resolve().parent

        def resolve(key: str, table: dict) -> None:
            value = table.get(key)
            if isinstance(value, str) and value and not Path(value).is_absolute():
                table[key] = str(base / value)

        for key in ("data_path", "schema_path", "kb_path", "allowlist_path", "script_path"):
            resolve(key, raw)
        if isinstance(raw.get("ablation"), dict):
            for key in ("donor_data_path", "donor_schema_path"):
                resolve(key, raw["ablation"])
        return ExperimentConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = [
            key
            for key in ("data_path", "schema_path", "backend", "model_id", "in_fmt", "out_fmt", "seeds", "mode")
            if key not in raw
        ]
        if missing:
            raise ConfigError(f"missing config keys: {missing}")
        cfg = ExperimentConfig(
            data_path=raw["data_path"],
            schema_path=raw["schema_path"],
            backend=raw["backend"],
            model_id=raw["model_id"],
            in_fmt=raw["in_fmt"],
            out_fmt=raw["out_fmt"],
            seeds=list(raw["seeds"]),
            mode=raw["mode"],
            kb_path=raw.get("kb_path"),
            allowlist_path=raw.get("allowlist_path"),
            base_url=raw.get("base_url"),
            script_path=raw.get("script_path"),
            k=int(raw.get("k", 0)),
            selection=raw.get("selection", "RANDOM_SHUFFLED"),
            ablation=raw.get("ablation"),
            subsample_n=raw.get("subsample_n"),
            cache_dir=raw.get("cache_dir"),
            concurrency=int(raw.get("concurrency", 1)),
            include_candidates=bool(raw.get("include_candidates", True)),
            link_threshold=float(raw.get("link_threshold", DEFAULT_LINK_THRESHOLD)),
            out_dir=raw.get("out_dir"),
            label=raw.get("label"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.backend not in gw.BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.backend!r}")
        if self.in_fmt not in INPUT_FORMATS:
            raise ConfigError(f"unknown input format {self.in_fmt!r}")
        if self.out_fmt not in ("JSON", "CODE"):
            raise ConfigError(f"output format {self.out_fmt!r} is not promptable")
        if self.selection not in SELECTION_STRATEGIES:
            raise ConfigError(f"unknown selection strategy {self.selection!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.mode not in augment.AUGMENTATION_MODES:
            raise ConfigError(f"unknown augmentation mode {self.mode!r}")
        if self.mode == "FS_DEF" and self.k < 1:
            raise ConfigError("FS_DEF requires k >= 1")
        if self.mode in ("IP", "IP_DEF") and self.k != 0:
            raise ConfigError(f"{self.mode} forbids few-shot exemplars (k must be 0)")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.mode != "NONE" and not self.kb_path:
            raise ConfigError(f"mode {self.mode} needs kb_path")
        if self.ablation is not None:
            unknown = set(self.ablation) - _ABLATION_KEYS
            if unknown:
                raise ConfigError(f"unknown ablation keys: {sorted(unknown)}")
            abl_mode = self.ablation.get("mode")
            if abl_mode not in ablate.ABLATION_MODES:
                raise ConfigError(f"unknown ablation mode {abl_mode!r}")
            if self.mode == "NONE":
                raise ConfigError("ablations need a definition-using mode")
            if abl_mode == "DIFF_DOMAIN" and not (
                self.ablation.get("donor_data_path") and self.ablation.get("donor_schema_path")
            ):
                raise ConfigError("DIFF_DOMAIN needs donor_data_path and donor_schema_path")
        if self.backend == "SCRIPTED" and not self.script_path:
            raise ConfigError("SCRIPTED backend needs script_path")

    def to_dict(self) -> dict:
        out = {
            "data_path": self.data_path,
            "schema_path": self.schema_path,
            "backend": self.backend,
            "model_id": self.model_id,
            "in_fmt": self.in_fmt,
            "out_fmt": self.out_fmt,
            "seeds": self.seeds,
            "mode": self.mode,
            "k": self.k,
            "selection": self.selection,
            "concurrency": self.concurrency,
            "include_candidates": self.include_candidates,
            "link_threshold": self.link_threshold,
        }
        for key in (
            "kb_path",
            "allowlist_path",
            "base_url",
            "script_path",
            "ablation",
            "subsample_n",
            "cache_dir",
            "out_dir",
            "label",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def build_backend(cfg: ExperimentConfig, cache_dir: str | None, record: bool, replay: bool):
    cache = cache_dir or cfg.cache_dir
    if replay:
        if not cache:
            raise ConfigError("--replay needs a cache directory")
        return gw.ReplayBackend(cache, model_id=cfg.model_id)
    kind = cfg.backend
    if kind == "SCRIPTED":
        with open(cfg.script_path, encoding="utf-8") as fh:
            responses = json.load(fh)
        inner = gw.ScriptedBackend(responses, model_id=cfg.model_id)
    elif kind == "REPLAY":
        if not cache:
            raise ConfigError("REPLAY backend needs a cache directory")
        inner = gw.ReplayBackend(cache, model_id=cfg.model_id)
    elif kind == "OPENAI_HTTP":
        kwargs = {"base_url": cfg.base_url} if cfg.base_url else {}
        inner = gw.OpenAIBackend(cfg.model_id, **kwargs)
    elif kind == "OPENAI_COMPAT_HTTP":
        inner = gw.OpenAICompatBackend(cfg.model_id, base_url=cfg.base_url or "")
    elif kind == "ANTHROPIC_HTTP":
        kwargs = {"base_url": cfg.base_url} if cfg.base_url else {}
        inner = gw.AnthropicBackend(cfg.model_id, **kwargs)
    else:  # pragma: no cover - guarded by validate()
        raise ConfigError(f"unknown backend kind {kind!r}")
    if record:
        if not cache:
            raise ConfigError("--record needs a cache directory")
        inner = gw.RecordingBackend(inner, cache)
    return inner


def _safe_name(value: str) -> str:
    return _SAFE_NAME_RE.sub("_", value) or "x"


def _trace_path(out_dir: Path, seed: int, instance_id: str) -> Path:
    return out_dir / "traces" / f"seed{seed}" / f"{_safe_name(instance_id)}.json"


def _extraction_from_json(doc: dict) -> ExtractionSet:
    entities = tuple(
        TypedEntity(surface=e["surface"], entity_type=e["type"]) for e in doc["entities"]
    )
    status = doc["parse_status"]
    if status == "FAILED":
        return ExtractionSet(entities=(), parse_status=status)
    if status == "REPAIRED":
        return ExtractionSet(entities=entities, parse_status=status, repairs=("recorded",))
    return ExtractionSet(entities=entities, parse_status=status)


def _responses_from_json(doc: dict) -> list[gw.ChatResponse]:
    return [
        gw.ChatResponse(
            text="",
            prompt_tokens=r["prompt_tokens"],
            completion_tokens=r["completion_tokens"],
            backend=r["backend"],
            cached=r["cached"],
        )
        for r in doc.get("responses", [])
    ]


def _run_one_instance(
    cfg: ExperimentConfig,
    inst: GoldInstance,
    index: int,
    seed: int,
    dataset: Dataset,
    donor_dataset: Dataset | None,
    pool: tuple[GoldInstance, ...],
    kb,
    allowlist,
    backend,
):
    plan = augment.PromptPlan(
        in_fmt=cfg.in_fmt,
        out_fmt=cfg.out_fmt,
        k=cfg.k,
        selection=cfg.selection,
        seed=seed,
        instance_index=index,
        exemplar_pool=pool,
        model_id=cfg.model_id,
    )
    transform = None
    if cfg.ablation:
        abl_mode = cfg.ablation["mode"]

        def transform(bundle, _inst=inst):
            return ablate.variant_bundle(
                _inst,
                bundle,
                abl_mode,
                dataset,
                donor_dataset,
                kb,
                seed,
                allowlist=allowlist,
                threshold=cfg.link_threshold,
            )

    return augment.run_instance(
        inst.document,
        dataset.schema,
        plan,
        cfg.mode,
        backend,
        kb=kb,
        allowlist=allowlist,
        include_candidates=cfg.include_candidates,
        threshold=cfg.link_threshold,
        bundle_transform=transform,
    )


def cmd_run(cfg: ExperimentConfig, out_dir: Path, cache_dir: str | None, record: bool, replay: bool) -> int:
    backend = build_backend(cfg, cache_dir, record, replay)
    dataset = load_dataset(cfg.data_path, cfg.schema_path)
    donor_dataset = None
    if cfg.ablation and cfg.ablation["mode"] == "DIFF_DOMAIN":
        donor_dataset = load_dataset(
            cfg.ablation["donor_data_path"], cfg.ablation["donor_schema_path"]
        )
    kb = allowlist = None
    if cfg.mode != "NONE" or cfg.ablation:
        kb = load_kb(cfg.kb_path)
        allowlist = (
            SemanticTypeAllowlist.from_file(cfg.allowlist_path)
            if cfg.allowlist_path
            else SemanticTypeAllowlist.default()
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    config_copy = cfg.to_dict()
    config_copy["template_catalog_version"] = catalog_version()
    (out_dir / "config.json").write_text(
        json.dumps(config_copy, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    policy = evaluation.MatchPolicy(type_sensitive=not dataset.schema.open_schema)
    per_seed_metrics: dict[int, evaluation.Metrics] = {}
    parse_failed: dict[str, int] = {}
    gateway_failed: dict[str, int] = {}
    prediction_lines: list[str] = []
    all_responses: list[gw.ChatResponse] = []
    total_instances = 0
    total_gateway_failures = 0

    # Instances run sequentially on a SCRIPTED backend: the script is a
    # queue and interleaving would desynchronize it.
    workers = 1 if cfg.backend == "SCRIPTED" and not replay else max(1, cfg.concurrency)

    for seed in cfg.seeds:
        seeded = dataset
        if cfg.subsample_n is not None:
            seeded = subsample_test(dataset, cfg.subsample_n, seed)
        pool = seeded.train_pool
        if cfg.selection == "RETRIEVAL" and len(pool) > 100:
            import random

            rng = random.Random(mix_seed(seed, "retrieval_pool"))
            pool = tuple(rng.sample(list(pool), 100))

        preds: list[tuple[str, ExtractionSet]] = []
        seed_parse_failed = 0
        seed_gateway_failed = 0

        def compute(pair):
            index, inst = pair
            return _run_one_instance(
                cfg, inst, index, seed, dataset, donor_dataset, pool, kb, allowlist, backend
            )

        pending = []
        finals: dict[str, dict] = {}
        for index, inst in enumerate(seeded.test):
            tpath = _trace_path(out_dir, seed, inst.document.id)
            if tpath.exists():
                finals[inst.document.id] = json.loads(tpath.read_text("utf-8"))
            else:
                pending.append((index, inst))

        if workers > 1 and pending:
            with ThreadPoolExecutor(max_workers=workers) as pool_exec:
                traces = list(pool_exec.map(compute, pending))
        else:
            traces = [compute(p) for p in pending]

        for (_, inst), trace in zip(pending, traces):
            if trace.gateway_failed:
                seed_gateway_failed += 1
                total_gateway_failures += 1
                finals[inst.document.id] = trace.to_json()
                continue
            tpath = _trace_path(out_dir, seed, inst.document.id)
            tpath.parent.mkdir(parents=True, exist_ok=True)
            tpath.write_text(
                json.dumps(trace.to_json(), indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            finals[inst.document.id] = trace.to_json()

        for inst in seeded.test:
            total_instances += 1
            doc = finals[inst.document.id]
            final = _extraction_from_json(doc["final"])
            preds.append((inst.document.id, final))
            all_responses.extend(_responses_from_json(doc))
            if any("parse_failed" in f for f in doc["failures"]):
                seed_parse_failed += 1
            line = {"id": inst.document.id}
            if len(cfg.seeds) > 1:
                line["seed"] = seed
            line["entities"] = [
                {"surface": e.surface, "type": e.entity_type} for e in final.entities
            ]
            line["parse_status"] = final.parse_status
            prediction_lines.append(json.dumps(line, ensure_ascii=False))

        parse_failed[str(seed)] = seed_parse_failed
        gateway_failed[str(seed)] = seed_gateway_failed
        per_seed_metrics[seed] = evaluation.strict_prf(preds, list(seeded.test), policy)

    if total_instances and total_gateway_failures / total_instances > GATEWAY_FAILURE_THRESHOLD:
        log.error(
            "aborting: %d/%d instances failed at the gateway",
            total_gateway_failures,
            total_instances,
        )
        return EXIT_BACKEND

    (out_dir / "predictions.jsonl").write_text(
        "\n".join(prediction_lines) + "\n", encoding="utf-8"
    )
    aggregate = evaluation.aggregate_seeds(list(per_seed_metrics.values()))
    evaluation.write_metrics_file(
        out_dir / "metrics.json",
        per_seed_metrics,
        aggregate,
        extra={
            "condition": cfg.condition,
            "failures": {"parse_failed": parse_failed, "gateway_failed": gateway_failed},
        },
    )
    evaluation.report((cfg.condition, aggregate), [], out_dir)
    (out_dir / "usage.json").write_text(
        json.dumps(gw.usage_report(all_responses), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    log.info("run complete: %s", out_dir)
    return EXIT_OK


def _load_predictions(path: str | Path) -> dict[int, list[tuple[str, ExtractionSet]]]:
    by_seed: dict[int, list[tuple[str, ExtractionSet]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entities = tuple(
                TypedEntity(surface=e["surface"], entity_type=e["type"])
                for e in rec.get("entities", [])
            )
            status = rec.get("parse_status", "CLEAN")
            if status == "FAILED":
                extraction = ExtractionSet(entities=(), parse_status="FAILED")
            elif status == "REPAIRED":
                extraction = ExtractionSet(entities=entities, parse_status=status, repairs=("recorded",))
            else:
                extraction = ExtractionSet(entities=entities, parse_status=status)
            by_seed.setdefault(int(rec.get("seed", 0)), []).append((rec["id"], extraction))
    return by_seed


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data, args.schema)
    golds = {g.document.id: g for g in dataset.test}
    golds.update({g.document.id: g for g in dataset.train_pool})
    type_sensitive = not dataset.schema.open_schema
    if args.type_insensitive:
        type_sensitive = False
    policy = evaluation.MatchPolicy(
        lowercase=not args.case_sensitive,
        collapse_whitespace=not args.keep_whitespace,
        strip_edge_punct=not args.keep_edge_punct,
        type_sensitive=type_sensitive,
    )
    by_seed = _load_predictions(args.predictions)
    if not by_seed:
        raise ConfigError(f"no predictions found in {args.predictions}")

    per_seed: dict[int, evaluation.Metrics] = {}
    classifications = []
    for seed, preds in sorted(by_seed.items()):
        missing = [pid for pid, _ in preds if pid not in golds]
        if missing:
            raise UnalignedIds(f"prediction ids missing from dataset: {missing[:5]}")
        seed_golds = [golds[pid] for pid, _ in preds]
        per_seed[seed] = evaluation.strict_prf(preds, seed_golds, policy)
        for pid, pred in preds:
            classifications.extend(evaluation.classify_errors(pred, golds[pid], policy))

    aggregate = evaluation.aggregate_seeds(list(per_seed.values()))
    distribution = evaluation.error_distribution(classifications)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_metrics_file(out_dir / "metrics.json", per_seed, aggregate)
    (out_dir / "taxonomy.json").write_text(
        json.dumps(
            {"percent": distribution.percent, "total_errors": distribution.total},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    if args.audit_sample:
        flat = [p for preds in by_seed.values() for p in preds]
        flat_golds = [golds[pid] for pid, _ in flat]
        n = evaluation.export_audit_sample(
            flat, flat_golds, policy, args.audit_sample, args.audit_seed, out_dir / "audit.csv"
        )
        log.info("audit sample written: %d rows", n)
    for seed, metrics in sorted(per_seed.items()):
        print(
            f"seed {seed}: P={metrics.precision:.4f} R={metrics.recall:.4f} "
            f"F1={metrics.f1:.4f} (tp={metrics.tp} fp={metrics.fp} fn={metrics.fn})"
        )
    print(f"mean F1: {aggregate.mean['f1']:.4f} (±{aggregate.stddev['f1']:.4f})")
    return EXIT_OK


def cmd_link(args) -> int:
    kb = load_kb(args.kb)
    allowlist = (
        SemanticTypeAllowlist.from_file(args.allowlist)
        if args.allowlist
        else SemanticTypeAllowlist.default()
    )
    if args.text is not None:
        text = args.text
    else:
        text = Path(args.file).read_text("utf-8")
    mentions = link_mentions(text, kb, allowlist, args.threshold)
    print(f"{'start':>6} {'end':>6} {'score':>6}  {'cui':<12} {'tui':<5} span")
    for m in mentions:
        tui = kb.concepts[m.cui].tui
        print(f"{m.start:>6} {m.end:>6} {m.score:>6.3f}  {m.cui:<12} {tui:<5} {m.span_text}")
    return EXIT_OK


def cmd_gen_defs(args) -> int:
    terms = [
        line.strip()
        for line in Path(args.terms).read_text("utf-8").splitlines()
        if line.strip()
    ]
    if not terms:
        log.info("no terms to define")
        return EXIT_OK
    cfg = ExperimentConfig(
        data_path="",
        schema_path="",
        backend=args.backend,
        model_id=args.model,
        in_fmt="TEXT",
        out_fmt="JSON",
        seeds=[0],
        mode="NONE",
        script_path=args.script,
        cache_dir=args.cache_dir,
        base_url=args.base_url,
    )
    if cfg.backend == "SCRIPTED" and not cfg.script_path:
        raise ConfigError("SCRIPTED backend needs --script")
    backend = build_backend(cfg, args.cache_dir, args.record, args.replay)
    concepts = generate_definitions(terms, backend, load_template("gen_definition"))
    written = append_generated_rows(args.out, concepts)
    failures = len(terms) - len(concepts)
    print(f"wrote {written} generated rows to {args.out}" + (f" ({failures} failed)" if failures else ""))
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.run_dirs:
        run = Path(run_dir)
        metrics_path = run / "metrics.json"
        if not metrics_path.exists():
            raise ConfigError(f"{run_dir} has no metrics.json")
        doc = json.loads(metrics_path.read_text("utf-8"))
        agg = doc["aggregate"]
        rows.append(
            (
                doc.get("condition", run.name),
                evaluation.SeedAggregate(
                    mean=agg["mean"], stddev=agg["stddev"], n_seeds=agg["n_seeds"]
                ),
            )
        )
    out_dir = Path(args.out)
    evaluation.report(rows[0], rows[1:], out_dir)
    print((out_dir / "report.txt").read_text("utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defner", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="run directory (default: runs/<config stem>)")
    p_run.add_argument("--cache-dir", help="request cache directory")
    mode = p_run.add_mutually_exclusive_group()
    mode.add_argument("--record", action="store_true", help="record responses into the cache")
    mode.add_argument("--replay", action="store_true", help="serve responses from the cache")
    p_run.add_argument("--concurrency", type=int, help="max concurrent instances")

    p_eval = sub.add_parser("eval", help="score a predictions file")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--schema", required=True)
    p_eval.add_argument("--out", default="eval_out")
    p_eval.add_argument("--type-insensitive", action="store_true")
    p_eval.add_argument("--case-sensitive", action="store_true")
    p_eval.add_argument("--keep-whitespace", action="store_true")
    p_eval.add_argument("--keep-edge-punct", action="store_true")
    p_eval.add_argument("--audit-sample", type=int, default=0, help="export N FP/FN rows for review")
    p_eval.add_argument("--audit-seed", type=int, default=0)

    p_link = sub.add_parser("link", help="link mentions in text against the KB")
    src = p_link.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--file")
    p_link.add_argument("--kb", required=True)
    p_link.add_argument("--allowlist")
    p_link.add_argument("--threshold", type=float, default=DEFAULT_LINK_THRESHOLD)

    p_gen = sub.add_parser("gen-defs", help="generate definitions for terms")
    p_gen.add_argument("--terms", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--backend", default="SCRIPTED", choices=list(gw.BACKEND_KINDS))
    p_gen.add_argument("--model", default="scripted-model")
    p_gen.add_argument("--script", help="JSON list of scripted responses")
    p_gen.add_argument("--base-url")
    p_gen.add_argument("--cache-dir")
    gen_mode = p_gen.add_mutually_exclusive_group()
    gen_mode.add_argument("--record", action="store_true")
    gen_mode.add_argument("--replay", action="store_true")

    p_rep = sub.add_parser("report", help="combine run directories into one table")
    p_rep.add_argument("run_dirs", nargs="+")
    p_rep.add_argument("--out", default="report_out")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_file(args.config)
            if args.concurrency:
                cfg.concurrency = args.concurrency
            out = Path(args.out or cfg.out_dir or f"runs/{Path(args.config).stem}")
            return cmd_run(cfg, out, args.cache_dir, args.record, args.replay)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "link":
            return cmd_link(args)
        if args.command == "gen-defs":
            return cmd_gen_defs(args)
        if args.command == "report":
            return cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ReplayMiss as exc:
        log.error("replay miss: %s", exc)
        return EXIT_REPLAY_MISS
    except (ConfigError, UnalignedIds) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, DefnerError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
