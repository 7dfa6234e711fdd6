import pytest

from defner.augment import (
    PromptPlan,
    collect_definitions,
    run_first_pass,
    run_instance,
)
from defner.corpus import TypedEntity
from defner.gateway import ScriptedBackend
from defner.parsing import ExtractionSet
from defner.prompting import render_target

TABLE_JSON = '{"Chemicals": ["bupivacaine", "propofol"], "Diseases": ["cardiovascular depression"]}'


def plan(**kw):
    defaults = dict(in_fmt="TEXT", out_fmt="JSON", model_id="fixture-model")
    defaults.update(kw)
    return PromptPlan(**defaults)


def extraction(pairs):
    return ExtractionSet(entities=tuple(TypedEntity(s, t) for s, t in pairs))


def test_collect_definitions_extracted_first(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    first = extraction([("bupivacaine", "Chemicals"), ("propofol", "Chemicals")])
    bundle = collect_definitions(inst.document, first, fixture_kb, default_allowlist)
    assert bundle.items[0].term == "bupivacaine"
    assert bundle.items[0].origin == "EXTRACTED"
    assert bundle.items[0].definition  # exact alias lookup hit
    # linker candidates (e.g. "cardiovascular depression") come after
    origins = [i.origin for i in bundle.items]
    assert "LINKED_CANDIDATE" in origins
    assert origins.index("LINKED_CANDIDATE") > origins.index("EXTRACTED")


def test_collect_definitions_dedupes_extracted_wins(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    # "cardiovascular depression" is both extracted and linkable in the text
    first = extraction([("cardiovascular depression", "Diseases")])
    bundle = collect_definitions(inst.document, first, fixture_kb, default_allowlist)
    matching = [i for i in bundle.items if i.term.lower() == "cardiovascular depression"]
    assert len(matching) == 1
    assert matching[0].origin == "EXTRACTED"


def test_collect_definitions_empty_first_pass(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    bundle = collect_definitions(inst.document, ExtractionSet(), fixture_kb, default_allowlist)
    assert bundle.items
    assert all(i.origin == "LINKED_CANDIDATE" for i in bundle.items)


def test_collect_definitions_unknown_term_kept_bare(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    first = extraction([("flux capacitor", "Chemicals")])
    bundle = collect_definitions(
        inst.document, first, fixture_kb, default_allowlist, include_candidates=False
    )
    assert bundle.items[0].term == "flux capacitor"
    assert bundle.items[0].definition == ""
    assert bundle.items[0].cui is None


def test_first_pass_parses_scripted_response(cdr_dataset):
    backend = ScriptedBackend([TABLE_JSON])
    inst = cdr_dataset.test[0]
    trace = run_first_pass(inst.document, cdr_dataset.schema, plan(), backend)
    assert len(trace.first_pass.entities) == 3
    assert trace.final == trace.first_pass
    assert not trace.failures


def test_first_pass_parse_failure_flagged(cdr_dataset):
    backend = ScriptedBackend(["no json here"])
    inst = cdr_dataset.test[0]
    trace = run_first_pass(inst.document, cdr_dataset.schema, plan(), backend)
    assert trace.final.entities == ()
    assert "first_pass_parse_failed" in trace.failures


def test_first_pass_gateway_error_aborts(cdr_dataset):
    backend = ScriptedBackend([])  # exhausted immediately
    inst = cdr_dataset.test[0]
    trace = run_first_pass(inst.document, cdr_dataset.schema, plan(), backend)
    assert trace.gateway_failed
    assert trace.final.parse_status == "FAILED"


def test_few_shot_first_pass_has_demonstrations(cdr_dataset):
    backend = ScriptedBackend([TABLE_JSON])
    inst = cdr_dataset.test[0]
    p = plan(k=3, exemplar_pool=cdr_dataset.train_pool, seed=5)
    trace = run_first_pass(inst.document, cdr_dataset.schema, p, backend)
    prompt = trace.conversation.messages[0].content
    assert prompt.count("Text:") == 4  # 3 demonstrations plus the query
    assert len(trace.exemplars) == 3


def run_mode(mode, dataset, kb, allowlist, responses, k=0, include_candidates=True):
    backend = ScriptedBackend(responses)
    inst = dataset.test[0]
    p = plan(k=k, exemplar_pool=dataset.train_pool, seed=5)
    trace = run_instance(
        inst.document,
        dataset.schema,
        p,
        mode,
        backend,
        kb=kb,
        allowlist=allowlist,
        include_candidates=include_candidates,
    )
    return trace, backend


def test_mode_none_one_call(cdr_dataset, fixture_kb, default_allowlist):
    trace, backend = run_mode("NONE", cdr_dataset, fixture_kb, default_allowlist, [TABLE_JSON])
    assert backend.calls == 1
    assert trace.bundle is None


def test_zs_def_exactly_two_calls(cdr_dataset, fixture_kb, default_allowlist):
    revised = '{"Chemicals": ["bupivacaine"], "Diseases": ["cardiovascular depression"]}'
    trace, backend = run_mode(
        "ZS_DEF", cdr_dataset, fixture_kb, default_allowlist, [TABLE_JSON, revised]
    )
    assert backend.calls == 2
    assert len(trace.final.entities) == 2
    followup = trace.conversation.messages[2].content
    assert "bupivacaine" in followup  # bundle terms appear in the follow-up
    assert "definitions" in followup.lower()


def test_zs_def_empty_bundle_still_issues_followup(cdr_dataset, fixture_kb):
    from defner.kb import SemanticTypeAllowlist

    empty_allow = SemanticTypeAllowlist(frozenset({"T999"}))
    responses = ['{"Chemicals": [], "Diseases": []}', '{"Chemicals": [], "Diseases": []}']
    trace, backend = run_mode("ZS_DEF", cdr_dataset, fixture_kb, empty_allow, responses)
    assert backend.calls == 2
    assert "(none)" in trace.conversation.messages[2].content


def test_ip_def_one_call_per_defined_item(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    first = '{"Chemicals": ["bupivacaine", "propofol"], "Diseases": []}'
    parsed = extraction([("bupivacaine", "Chemicals"), ("propofol", "Chemicals")])
    bundle = collect_definitions(inst.document, parsed, fixture_kb, default_allowlist)
    expected_turns = len(bundle.defined_items())
    echo = '{"Chemicals": ["bupivacaine", "propofol"], "Diseases": []}'
    trace, backend = run_mode(
        "IP_DEF", cdr_dataset, fixture_kb, default_allowlist, [first] + [echo] * expected_turns
    )
    assert backend.calls == 1 + expected_turns
    # every follow-up names exactly one concept and its definition
    for msg in trace.conversation.messages[2::2]:
        assert msg.role == "user"
        assert "Definition:" in msg.content


def test_ip_no_defs_all_items_and_no_definition_text(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    first = TABLE_JSON
    parsed = extraction(
        [
            ("bupivacaine", "Chemicals"),
            ("propofol", "Chemicals"),
            ("cardiovascular depression", "Diseases"),
        ]
    )
    bundle = collect_definitions(inst.document, parsed, fixture_kb, default_allowlist)
    echo = TABLE_JSON
    trace, backend = run_mode(
        "IP", cdr_dataset, fixture_kb, default_allowlist, [first] + [echo] * len(bundle.items)
    )
    assert backend.calls == 1 + len(bundle.items)
    for msg in trace.conversation.messages[2::2]:
        assert "Definition:" not in msg.content


def test_fs_def_two_calls_with_exemplar_blocks(cdr_dataset, fixture_kb, default_allowlist):
    revised = TABLE_JSON
    trace, backend = run_mode(
        "FS_DEF", cdr_dataset, fixture_kb, default_allowlist, [TABLE_JSON, revised], k=2
    )
    assert backend.calls == 2
    followup = trace.conversation.messages[2].content
    assert followup.count("Corrected output:") == 2  # one per exemplar
    for exemplar in trace.exemplars:
        assert exemplar.document.text in followup


def test_fs_def_exemplar_demonstrates_gold(cdr_dataset, fixture_kb, default_allowlist):
    trace, _ = run_mode(
        "FS_DEF", cdr_dataset, fixture_kb, default_allowlist, [TABLE_JSON, TABLE_JSON], k=1
    )
    followup = trace.conversation.messages[2].content
    gold_rendered = render_target(trace.exemplars[0], "JSON", cdr_dataset.schema)
    assert gold_rendered in followup


@pytest.mark.parametrize("mode", ["ZS_DEF", "IP", "IP_DEF", "FS_DEF"])
def test_failed_followups_never_lose_first_pass(mode, cdr_dataset, fixture_kb, default_allowlist):
    garbage = ["???" for _ in range(40)]
    trace, _ = run_mode(
        mode,
        cdr_dataset,
        fixture_kb,
        default_allowlist,
        [TABLE_JSON] + garbage,
        k=1 if mode == "FS_DEF" else 0,
    )
    assert [
        (e.surface, e.entity_type) for e in trace.final.entities
    ] == [(e.surface, e.entity_type) for e in trace.first_pass.entities]
    assert any("followup_parse_failed" in f for f in trace.failures)


def test_echo_followups_are_noop(cdr_dataset, fixture_kb, default_allowlist):
    echo = [TABLE_JSON] * 40
    trace, _ = run_mode("IP_DEF", cdr_dataset, fixture_kb, default_allowlist, echo)
    assert trace.final.entities == trace.first_pass.entities


def test_gateway_error_mid_iteration_continues(cdr_dataset, fixture_kb, default_allowlist):
    inst = cdr_dataset.test[0]
    parsed = extraction(
        [
            ("bupivacaine", "Chemicals"),
            ("propofol", "Chemicals"),
            ("cardiovascular depression", "Diseases"),
        ]
    )
    bundle = collect_definitions(inst.document, parsed, fixture_kb, default_allowlist)
    n_turns = len(bundle.defined_items())
    assert n_turns >= 2
    # script covers the first pass and all but the final turn: last turn errors
    responses = [TABLE_JSON] + [TABLE_JSON] * (n_turns - 1)
    trace, backend = run_mode("IP_DEF", cdr_dataset, fixture_kb, default_allowlist, responses)
    assert any(f.startswith("gateway:SCRIPT_EXHAUSTED") for f in trace.failures)
    assert trace.final.entities == trace.first_pass.entities


def test_trace_serialization_round_trips_entities(cdr_dataset, fixture_kb, default_allowlist):
    trace, _ = run_mode("ZS_DEF", cdr_dataset, fixture_kb, default_allowlist, [TABLE_JSON, TABLE_JSON])
    doc = trace.to_json()
    assert doc["instance_id"] == trace.instance_id
    assert len(doc["turns"]) == 2
    assert doc["final"]["entities"] == [
        {"surface": e.surface, "type": e.entity_type} for e in trace.final.entities
    ]
    assert len(doc["responses"]) == 2
