import json
import shutil

import pytest

from defner.cli import ExperimentConfig, main
from defner.errors import ConfigError

from tests.conftest import FIXTURES

BASE_CONFIG = {
    "data_path": str(FIXTURES / "corpora" / "cdr_like.jsonl"),
    "schema_path": str(FIXTURES / "corpora" / "cdr_like.schema.json"),
    "kb_path": str(FIXTURES / "kb" / "snapshot.tsv"),
    "backend": "SCRIPTED",
    "model_id": "fixture-model",
    "in_fmt": "TEXT",
    "out_fmt": "JSON",
    "k": 0,
    "seeds": [7],
    "mode": "NONE",
    "subsample_n": 20,
}


def write_config(tmp_path, overrides=None, name="config.json"):
    cfg = dict(BASE_CONFIG)
    cfg.update(overrides or {})
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def replay_args(mode_name, out_dir):
    return [
        "run",
        str(FIXTURES / "configs" / f"run_{mode_name}.json"),
        "--out",
        str(out_dir),
        "--cache-dir",
        str(FIXTURES / "replay_cache"),
        "--replay",
    ]


def test_run_replay_writes_run_directory(tmp_path):
    out = tmp_path / "run"
    assert main(replay_args("none", out)) == 0
    for name in (
        "config.json",
        "predictions.jsonl",
        "metrics.json",
        "report.csv",
        "report.txt",
        "report.png",
        "usage.json",
    ):
        assert (out / name).exists(), name
    copied = json.loads((out / "config.json").read_text())
    assert copied["template_catalog_version"] == "1"
    assert (out / "traces" / "seed7").is_dir()


def test_run_scripted_offline(tmp_path):
    script = tmp_path / "script.json"
    queue = json.loads((FIXTURES / "scripts" / "none.json").read_text())
    script.write_text(json.dumps(queue), encoding="utf-8")
    config = write_config(tmp_path, {"script_path": str(script)})
    out = tmp_path / "run"
    assert main(["run", str(config), "--out", str(out)]) == 0
    assert (out / "metrics.json").exists()


def test_fs_def_with_k_zero_exits_2(tmp_path):
    config = write_config(tmp_path, {"mode": "FS_DEF", "k": 0, "script_path": "s.json"})
    assert main(["run", str(config)]) == 2


def test_unknown_config_key_exits_2(tmp_path):
    config = write_config(tmp_path, {"mystery_knob": 1, "script_path": "s.json"})
    assert main(["run", str(config)]) == 2


def test_ip_with_exemplars_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**BASE_CONFIG, "script_path": "s.json", "mode": "IP", "k": 3})


def test_missing_seed_list_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**BASE_CONFIG, "script_path": "s.json", "seeds": []})


def test_replay_runs_are_byte_identical(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(replay_args("zs_def", out_a)) == 0
    assert main(replay_args("zs_def", out_b)) == 0
    assert (out_a / "predictions.jsonl").read_bytes() == (out_b / "predictions.jsonl").read_bytes()
    assert (out_a / "metrics.json").read_bytes() == (out_b / "metrics.json").read_bytes()


def test_record_then_replay_equivalence(tmp_path):
    """A run recorded from a scripted backend replays to identical outputs."""
    script = tmp_path / "script.json"
    shutil.copy(FIXTURES / "scripts" / "zs_def.json", script)
    config = write_config(tmp_path, {"mode": "ZS_DEF", "script_path": str(script)})
    cache = tmp_path / "cache"
    out_rec, out_rep = tmp_path / "rec", tmp_path / "rep"
    assert main(["run", str(config), "--out", str(out_rec), "--cache-dir", str(cache), "--record"]) == 0
    assert main(["run", str(config), "--out", str(out_rep), "--cache-dir", str(cache), "--replay"]) == 0
    assert (out_rec / "metrics.json").read_bytes() == (out_rep / "metrics.json").read_bytes()
    assert (out_rec / "predictions.jsonl").read_bytes() == (out_rep / "predictions.jsonl").read_bytes()


def test_replay_miss_exits_4(tmp_path):
    empty_cache = tmp_path / "empty_cache"
    empty_cache.mkdir()
    out = tmp_path / "run"
    code = main(
        [
            "run",
            str(FIXTURES / "configs" / "run_none.json"),
            "--out",
            str(out),
            "--cache-dir",
            str(empty_cache),
            "--replay",
        ]
    )
    assert code == 4


def test_interrupted_run_resumes_from_traces(tmp_path):
    out = tmp_path / "run"
    assert main(replay_args("none", out)) == 0
    (out / "metrics.json").unlink()
    # rerun against an empty cache: every instance must come from traces
    empty_cache = tmp_path / "empty_cache"
    empty_cache.mkdir()
    args = replay_args("none", out)
    args[args.index(str(FIXTURES / "replay_cache"))] = str(empty_cache)
    assert main(args) == 0
    assert (out / "metrics.json").exists()


def test_backend_failure_threshold_exits_3(tmp_path):
    # a script that dies after the first instance: 19 of 20 gateway failures
    queue = json.loads((FIXTURES / "scripts" / "none.json").read_text())
    script = tmp_path / "script.json"
    script.write_text(json.dumps(queue[:1]), encoding="utf-8")
    config = write_config(tmp_path, {"script_path": str(script)})
    out = tmp_path / "run"
    assert main(["run", str(config), "--out", str(out)]) == 3
    assert not (out / "metrics.json").exists()


def run_for_eval(tmp_path):
    out = tmp_path / "run"
    assert main(replay_args("none", out)) == 0
    return out


def test_eval_perfect_predictions(tmp_path, cdr_dataset):
    preds = tmp_path / "preds.jsonl"
    with open(preds, "w", encoding="utf-8") as fh:
        for inst in cdr_dataset.test:
            fh.write(
                json.dumps(
                    {
                        "id": inst.document.id,
                        "entities": [
                            {"surface": e.surface, "type": e.entity_type}
                            for e in inst.entities
                        ],
                        "parse_status": "CLEAN",
                    }
                )
                + "\n"
            )
    out = tmp_path / "eval"
    code = main(
        [
            "eval",
            "--predictions",
            str(preds),
            "--data",
            str(FIXTURES / "corpora" / "cdr_like.jsonl"),
            "--schema",
            str(FIXTURES / "corpora" / "cdr_like.schema.json"),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["per_seed"]["0"]["f1"] == 1.0
    assert (out / "taxonomy.json").exists()


def test_eval_hand_counted_two_thirds(tmp_path):
    data = tmp_path / "data.jsonl"
    data.write_text(
        json.dumps(
            {
                "id": "x",
                "split": "test",
                "text": "a b c",
                "entities": [
                    {"surface": "a", "type": "Diseases"},
                    {"surface": "b", "type": "Diseases"},
                    {"surface": "c", "type": "Diseases"},
                ],
            }
        )
        + "\n"
    )
    schema = tmp_path / "schema.json"
    schema.write_text(
        json.dumps({"name": "t", "open_schema": False, "labels": [{"label": "Diseases"}]})
    )
    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        json.dumps(
            {
                "id": "x",
                "entities": [
                    {"surface": "a", "type": "Diseases"},
                    {"surface": "b", "type": "Diseases"},
                    {"surface": "d", "type": "Diseases"},
                ],
                "parse_status": "CLEAN",
            }
        )
        + "\n"
    )
    out = tmp_path / "eval"
    code = main(
        ["eval", "--predictions", str(preds), "--data", str(data), "--schema", str(schema), "--out", str(out)]
    )
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["per_seed"]["0"]["f1"] == pytest.approx(2 / 3, abs=0)


def test_eval_mismatched_ids_exits_2(tmp_path):
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"id": "nope", "entities": [], "parse_status": "CLEAN"}) + "\n")
    code = main(
        [
            "eval",
            "--predictions",
            str(preds),
            "--data",
            str(FIXTURES / "corpora" / "cdr_like.jsonl"),
            "--schema",
            str(FIXTURES / "corpora" / "cdr_like.schema.json"),
            "--out",
            str(tmp_path / "eval"),
        ]
    )
    assert code == 2


def test_eval_audit_export(tmp_path):
    run = run_for_eval(tmp_path)
    out = tmp_path / "eval"
    code = main(
        [
            "eval",
            "--predictions",
            str(run / "predictions.jsonl"),
            "--data",
            str(FIXTURES / "corpora" / "cdr_like.jsonl"),
            "--schema",
            str(FIXTURES / "corpora" / "cdr_like.schema.json"),
            "--out",
            str(out),
            "--audit-sample",
            "5",
        ]
    )
    assert code == 0
    assert (out / "audit.csv").exists()


def test_link_known_alias(capsys):
    code = main(
        [
            "link",
            "--text",
            "Arrhythmia persisted after treatment.",
            "--kb",
            str(FIXTURES / "kb" / "snapshot.tsv"),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "Arrhythmia" in out
    assert "1.000" in out


def test_link_empty_text(capsys):
    code = main(["link", "--text", "", "--kb", str(FIXTURES / "kb" / "snapshot.tsv")])
    assert code == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 1  # header only


def test_link_bad_kb_path(tmp_path):
    code = main(["link", "--text", "x", "--kb", str(tmp_path / "missing.tsv")])
    assert code == 2


def test_gen_defs_scripted(tmp_path):
    terms = tmp_path / "terms.txt"
    terms.write_text("Arrhythmia\nAspirin\n")
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["An irregular heartbeat.", "A common analgesic."]))
    out = tmp_path / "generated.tsv"
    code = main(
        [
            "gen-defs",
            "--terms",
            str(terms),
            "--out",
            str(out),
            "--backend",
            "SCRIPTED",
            "--script",
            str(script),
        ]
    )
    assert code == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 rows
    assert all("GENERATED" in row for row in rows[1:])
    assert all("\tT000\t" in row for row in rows[1:])


def test_gen_defs_empty_terms(tmp_path):
    terms = tmp_path / "terms.txt"
    terms.write_text("\n")
    out = tmp_path / "generated.tsv"
    code = main(["gen-defs", "--terms", str(terms), "--out", str(out), "--backend", "SCRIPTED", "--script", "x"])
    assert code == 0
    assert not out.exists()


def test_gen_defs_replay_miss_exits_4(tmp_path):
    terms = tmp_path / "terms.txt"
    terms.write_text("Arrhythmia\n")
    cache = tmp_path / "cache"
    cache.mkdir()
    code = main(
        [
            "gen-defs",
            "--terms",
            str(terms),
            "--out",
            str(tmp_path / "g.tsv"),
            "--backend",
            "REPLAY",
            "--cache-dir",
            str(cache),
            "--replay",
        ]
    )
    assert code == 4


def test_report_combines_runs(tmp_path, capsys):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(replay_args("none", out_a)) == 0
    assert main(replay_args("zs_def", out_b)) == 0
    report_dir = tmp_path / "combined"
    code = main(["report", str(out_a), str(out_b), "--out", str(report_dir)])
    assert code == 0
    text = (report_dir / "report.txt").read_text()
    assert "ZS" in text and "ZS+Def" in text
    assert "(+" in text  # signed delta vs the baseline run
    assert (report_dir / "report.png").exists()


def test_report_single_run(tmp_path):
    out_a = tmp_path / "a"
    assert main(replay_args("none", out_a)) == 0
    report_dir = tmp_path / "combined"
    assert main(["report", str(out_a), "--out", str(report_dir)]) == 0
    rows = (report_dir / "report.csv").read_text().strip().splitlines()
    assert len(rows) == 2  # header + the single run, no delta column filled
    assert rows[1].split(",")[5] == ""


def test_report_missing_metrics_exits_2(tmp_path):
    empty = tmp_path / "not_a_run"
    empty.mkdir()
    assert main(["report", str(empty), "--out", str(tmp_path / "r")]) == 2


def test_open_schema_eval_is_type_insensitive(tmp_path):
    data = tmp_path / "data.jsonl"
    data.write_text(
        json.dumps(
            {
                "id": "m1",
                "split": "test",
                "text": "activation of the impulse",
                "entities": [{"surface": "activation", "type": "Biomedical Concepts"}],
            }
        )
        + "\n"
    )
    schema = tmp_path / "schema.json"
    schema.write_text(
        json.dumps(
            {
                "name": "medm_like",
                "open_schema": True,
                "labels": [{"label": "Biomedical Concepts"}],
            }
        )
    )
    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        json.dumps(
            {
                "id": "m1",
                "entities": [{"surface": "Activation", "type": "anything"}],
                "parse_status": "CLEAN",
            }
        )
        + "\n"
    )
    out = tmp_path / "eval"
    assert (
        main(["eval", "--predictions", str(preds), "--data", str(data), "--schema", str(schema), "--out", str(out)])
        == 0
    )
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["per_seed"]["0"]["f1"] == 1.0  # surface match suffices


def test_ablation_only_ents_through_cli(tmp_path):
    config = json.loads((FIXTURES / "configs" / "run_zs_def.json").read_text())
    for key in ("data_path", "schema_path", "kb_path", "script_path"):
        config[key] = str((FIXTURES / "configs" / config[key]).resolve())
    config["ablation"] = {"mode": "ONLY_ENTS"}
    config["label"] = "ZS+Def only-ents"
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    # the zs_def script still aligns: ONLY_ENTS changes prompt text, not call counts
    out = tmp_path / "run"
    code = main(
        [
            "run",
            str(path),
            "--out",
            str(out),
            "--cache-dir",
            str(tmp_path / "cache"),
            "--record",
        ]
    )
    assert code == 0
    trace_files = sorted((out / "traces" / "seed7").glob("*.json"))
    assert trace_files
    doc = json.loads(trace_files[0].read_text())
    assert doc["bundle"], "ablated bundle should be recorded"
    assert all(item["definition"] == "" for item in doc["bundle"])
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["condition"] == "ZS+Def only-ents"


def test_concurrent_replay_matches_sequential(tmp_path):
    out_seq, out_par = tmp_path / "seq", tmp_path / "par"
    assert main(replay_args("ip_def", out_seq)) == 0
    assert main(replay_args("ip_def", out_par) + ["--concurrency", "4"]) == 0
    assert (out_seq / "predictions.jsonl").read_bytes() == (out_par / "predictions.jsonl").read_bytes()
    assert (out_seq / "metrics.json").read_bytes() == (out_par / "metrics.json").read_bytes()
