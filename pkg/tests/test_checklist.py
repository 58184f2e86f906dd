import itertools
import json
import random

import pytest

from generators import random_ro
from rokit.checklist import (
    AnnotationOn,
    Checklist,
    ChecklistError,
    ContentPresent,
    Level,
    PatternExists,
    Requirement,
    ResourceOfType,
    Verdict,
    evaluate,
    parse_checklist,
    shipped_checklist,
    verdict_for,
)
from rokit.rdf import RO, WFDESC, IRI, Graph, Literal

from conftest import MARIA, T0, gwas_ro


def doc(*reqs, **top):
    return json.dumps({"id": "t", "purpose": "", "requirements": list(reqs), **top})


def req(level="MUST", rule=None, rid="r0"):
    return {"id": rid, "level": level, "message": "m", "rule": rule or {"kind": "ResourceOfType", "type": "ro:Dataset"}}


def test_minimal_checklist():
    cl = parse_checklist(doc(req()))
    assert len(cl.requirements) == 1
    assert cl.requirements[0].rule == ResourceOfType(RO.Dataset)


def test_unknown_level_has_path():
    with pytest.raises(ChecklistError) as err:
        parse_checklist(doc(req("MAYBE")))
    assert err.value.path == "requirements[0].level"


@pytest.mark.parametrize(
    "bad, path",
    [
        ("[]", "$"),
        ("{nope", "$"),
        (doc(req(), req()), "requirements[1].id"),
        (doc(req(rule={"kind": "Sparql"})), "requirements[0].rule.kind"),
        (doc(req(rule={"kind": "ResourceOfType", "type": "zz:T"})), "requirements[0].rule.type"),
        (doc(req(rule={"kind": "PatternExists", "patterns": [["?a", "ore:aggregates"]]})), "requirements[0].rule.patterns[0]"),
        (doc(req(rule={"kind": "PatternExists", "patterns": [["?1a", "ore:aggregates", "?b"]]})), "requirements[0].rule.patterns[0][0]"),
        (doc(req(rule={"kind": "PatternExists", "patterns": [["?a", "ore:aggregates", "?b"]] * 9})), "requirements[0].rule.patterns"),
    ],
)
def test_schema_errors_carry_paths(bad, path):
    with pytest.raises(ChecklistError) as err:
        parse_checklist(bad)
    assert err.value.path == path


def test_shipped_workflow_checklist():
    cl = shipped_checklist("workflow-ro")
    assert [r.id for r in cl.requirements] == [
        "hypothesis_present", "input_data_declared", "workflow_aggregated", "provenance_present",
    ]


def test_gwas_is_fully_satisfied():
    report = evaluate(gwas_ro(), shipped_checklist("workflow-ro"))
    assert report.verdict is Verdict.FULLY_SATISFIED
    assert report.result("input_data_declared").witness == "data2.csv"
    assert report.result("workflow_aggregated").witness == "workflow34.xml"
    assert "?h=hypothesis.txt" in report.result("hypothesis_present").witness


def test_missing_hypothesis_is_nonconformant():
    ro = gwas_ro()
    ro.deaggregate("hypothesis.txt")
    report = evaluate(ro, shipped_checklist("workflow-ro"))
    assert report.verdict is Verdict.NONCONFORMANT
    failed = [r for r in report.results if not r.passed]
    assert [(r.requirement.id, r.requirement.level) for r in failed] == [("hypothesis_present", Level.MUST)]
    assert "rokit:hasHypothesis" in failed[0].missing
    assert "FAIL" in report.to_text() and report.to_json()["verdict"] == "NONCONFORMANT"


def test_missing_provenance_is_minimal():
    ro = gwas_ro()
    ro.deaggregate("provenance.rdf")
    assert evaluate(ro, shipped_checklist("workflow-ro")).verdict is Verdict.MINIMALLY_SATISFIED


def test_empty_checklist_is_vacuous():
    assert evaluate(gwas_ro(), Checklist("empty", "", ())).verdict is Verdict.FULLY_SATISFIED


def test_examples_checklist():
    report = evaluate(gwas_ro(), shipped_checklist("ro-examples"))
    # MAY never counts
    assert not report.result("example_data").passed
    assert report.verdict is Verdict.FULLY_SATISFIED


def test_verdict_truth_table():
    for combo in itertools.product([(lv, ok) for lv in Level for ok in (True, False)], repeat=3):
        results = list(combo)
        must_fail = any(lv is Level.MUST and not ok for lv, ok in results)
        should_fail = any(lv is Level.SHOULD and not ok for lv, ok in results)
        expected = (
            Verdict.NONCONFORMANT if must_fail else Verdict.MINIMALLY_SATISFIED if should_fail else Verdict.FULLY_SATISFIED
        )
        assert verdict_for(results) is expected
    assert [v.exit_code for v in Verdict] == [0, 1, 2]


def test_content_present_rules():
    ro = gwas_ro()
    rules = [ContentPresent("all-internal"), ContentPresent("data2.csv"), ContentPresent("nope.csv")]
    cl = Checklist("c", "", tuple(Requirement(f"r{i}", Level.MUST, r, "") for i, r in enumerate(rules)))
    assert [r.passed for r in evaluate(ro, cl).results] == [True, True, False]


def test_annotation_on_rules():
    ro = gwas_ro()
    rules = [AnnotationOn("any"), AnnotationOn("workflow34.xml"), AnnotationOn("data2.csv")]
    cl = Checklist("a", "", tuple(Requirement(f"r{i}", Level.MUST, r, "") for i, r in enumerate(rules)))
    assert [r.passed for r in evaluate(ro, cl).results] == [True, True, False]


def test_evaluate_has_no_side_effects():
    ro = gwas_ro()
    before = (list(ro.aggregated), list(ro.annotations))
    cl = shipped_checklist("workflow-ro")
    assert evaluate(ro, cl).to_json() == evaluate(ro, cl).to_json()
    assert (list(ro.aggregated), list(ro.annotations)) == before


MONOTONE = (
    ResourceOfType(RO.Dataset),
    ResourceOfType(WFDESC.Workflow),
    AnnotationOn("any"),
    AnnotationOn("a.csv"),
    PatternExists((("?ro", "ore:aggregates", "?x"), ("?x", "dct:title", "?t"))),
    PatternExists((("?s", "<http://ex.org/p>", "?o"),)),
)


@pytest.mark.parametrize("seed", range(30))
def test_monotone_rules_never_flip_to_fail(seed):
    rng = random.Random(seed)
    ro = random_ro(rng, "http://ex.org/m/", T0)
    cl = Checklist("m", "", tuple(Requirement(f"r{i}", Level.MUST, r, "") for i, r in enumerate(MONOTONE)))
    before = [r.passed for r in evaluate(ro, cl).results]
    # grow the RO: new resources, new annotations, never removal
    for i in range(rng.randint(1, 4)):
        ref = f"grow{i}.csv" if rng.random() < 0.5 else "a.csv"
        if ro.get(ref) is None:
            ro.aggregate(ref, {RO.Dataset} if rng.random() < 0.5 else set(), b"x")
        body = Graph()
        if rng.random() < 0.5:
            body.add((ro.resolve(ref), IRI("http://purl.org/dc/terms/title"), Literal("t")))
        ro.annotate([ref], body, IRI(MARIA), T0)
    after = [r.passed for r in evaluate(ro, cl).results]
    assert all(a or not b for b, a in zip(before, after))
