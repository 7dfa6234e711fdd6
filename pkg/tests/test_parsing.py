from collections import Counter

import pytest

from defner.corpus import DatasetSchema, SchemaLabel, TypedEntity
from defner.parsing import (
    CLEAN,
    FAILED,
    REPAIRED,
    ExtractionSet,
    parse_code_output,
    parse_followup,
    parse_json_output,
    parse_linearized,
    parse_output,
)
from defner.prompting import render_target

CDR = DatasetSchema(
    name="cdr_like",
    labels=(SchemaLabel("Chemicals", "c"), SchemaLabel("Diseases", "d")),
)
NCBI = DatasetSchema(name="ncbi_like", labels=(SchemaLabel("Diseases", "d"),))

TABLE_JSON = '{"Chemicals": ["bupivacaine", "propofol"], "Diseases": ["cardiovascular depression"]}'


def keys(es):
    return Counter((e.surface, e.entity_type) for e in es.entities)


def test_clean_json():
    out = parse_json_output(TABLE_JSON, CDR)
    assert out.parse_status == CLEAN
    assert keys(out) == Counter(
        {
            ("bupivacaine", "Chemicals"): 1,
            ("propofol", "Chemicals"): 1,
            ("cardiovascular depression", "Diseases"): 1,
        }
    )


def test_fenced_json_with_prose_is_repaired():
    wrapped = f"Sure! Here are the entities:\n```json\n{TABLE_JSON}\n```\nLet me know."
    out = parse_json_output(wrapped, CDR)
    assert out.parse_status == REPAIRED
    assert keys(out) == keys(parse_json_output(TABLE_JSON, CDR))
    assert out.repairs


def test_refusal_fails():
    out = parse_json_output("I cannot find any entities.", CDR)
    assert out.parse_status == FAILED
    assert out.entities == ()


def test_trailing_comma_repair():
    out = parse_json_output('{"Chemicals": ["aspirin",], "Diseases": [],}', CDR)
    assert out.parse_status == REPAIRED
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})


def test_single_quote_repair():
    out = parse_json_output("{'Chemicals': ['aspirin'], 'Diseases': []}", CDR)
    assert out.parse_status == REPAIRED
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})


def test_case_insensitive_keys_and_dropped_extras():
    out = parse_json_output('{"chemicals": ["aspirin"], "Genes": ["BRCA1"]}', CDR)
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})
    assert any("Genes" in w for w in out.warnings)


def test_scalar_wrapped_to_singleton():
    out = parse_json_output('{"Diseases": "sepsis"}', CDR)
    assert keys(out) == Counter({("sepsis", "Diseases"): 1})


def test_code_single_label_line():
    out = parse_code_output('diseases = ["AS", "Rheumatic Diseases"]', NCBI)
    assert out.parse_status == CLEAN
    assert keys(out) == Counter(
        {("AS", "Diseases"): 1, ("Rheumatic Diseases", "Diseases"): 1}
    )


def test_code_partial_labels_clean():
    out = parse_code_output('chemicals = ["aspirin"]\nprint("hi")', CDR)
    assert out.parse_status == CLEAN
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})


def test_code_no_assignment_fails():
    out = parse_code_output("no assignments here", CDR)
    assert out.parse_status == FAILED


def test_code_inside_fences():
    text = '```python\nchemicals = ["aspirin", "warfarin"]\ndiseases = []\n```'
    out = parse_code_output(text, CDR)
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1, ("warfarin", "Chemicals"): 1})


def test_code_never_executes():
    text = 'chemicals = ["aspirin"]\n__import__("os").system("true")'
    out = parse_code_output(text, CDR)  # must simply ignore the second line
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})


def test_linearized_single_type():
    out = parse_linearized("AS <sep> Rheumatic Diseases", NCBI)
    assert keys(out) == Counter(
        {("AS", "Diseases"): 1, ("Rheumatic Diseases", "Diseases"): 1}
    )


def test_linearized_multi_type():
    out = parse_linearized("[bupivacaine:Chemicals, propofol:Chemicals]", CDR)
    assert keys(out) == Counter(
        {("bupivacaine", "Chemicals"): 1, ("propofol", "Chemicals"): 1}
    )


def test_linearized_empty_clean():
    out = parse_linearized("", NCBI)
    assert out.parse_status == CLEAN
    assert out.entities == ()


def test_linearized_malformed_items_skipped():
    out = parse_linearized("[aspirin:Chemicals, brokenitem, foo:Gene]", CDR)
    assert keys(out) == Counter({("aspirin", "Chemicals"): 1})
    assert sum("MALFORMED_ITEM" in w for w in out.warnings) == 2


def test_followup_replaces_wholesale():
    first = parse_json_output(TABLE_JSON, CDR)
    revised, ok = parse_followup('{"Chemicals": ["propofol"], "Diseases": []}', CDR, "JSON", first)
    assert ok
    assert keys(revised) == Counter({("propofol", "Chemicals"): 1})


def test_followup_identity():
    first = parse_json_output(TABLE_JSON, CDR)
    revised, ok = parse_followup(TABLE_JSON, CDR, "JSON", first)
    assert ok
    assert keys(revised) == keys(first)


def test_followup_failure_keeps_previous():
    first = parse_json_output(TABLE_JSON, CDR)
    revised, ok = parse_followup("garbage reply", CDR, "JSON", first)
    assert not ok
    assert revised is first


def test_failed_implies_empty():
    with pytest.raises(ValueError):
        ExtractionSet(entities=(TypedEntity("x", "Diseases"),), parse_status=FAILED)


def test_repaired_requires_log():
    with pytest.raises(ValueError):
        ExtractionSet(entities=(), parse_status=REPAIRED)


@pytest.mark.parametrize("fmt", ["JSON", "CODE", "LINEARIZED"])
def test_render_parse_inverse_on_fixture_corpora(fmt, cdr_dataset, ncbi_dataset):
    for dataset in (cdr_dataset, ncbi_dataset):
        for inst in dataset.test + dataset.train_pool:
            rendered = render_target(inst, fmt, dataset.schema)
            parsed = parse_output(rendered, dataset.schema, fmt)
            assert parsed.parse_status == CLEAN
            want = Counter((e.surface, e.entity_type) for e in inst.entities)
            assert keys(parsed) == want, (inst.document.id, fmt)
