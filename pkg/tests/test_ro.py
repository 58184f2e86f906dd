import random
from datetime import timedelta

import pytest

from generators import mutate, random_ro
from rokit.rdf import AO, DCT, IRI, ORE, RDF_TYPE, RO, ROKIT, Graph, Literal, graph_isomorphic, parse_turtle
from rokit.ro import (
    BadIdentifierError,
    DuplicateResourceError,
    ExternalContentError,
    FrozenResearchObjectError,
    ManifestError,
    UnknownResourceError,
    UnknownTargetError,
    Violation,
    build_manifest,
    create_research_object,
    load_research_object,
    manifest_json,
    serialize_manifest,
    structurally_equal,
    validate,
)
from rokit.ro.layout import read_research_object, write_research_object

from conftest import BASE, FIXTURES, GWAS, GWAS_PAYLOADS, MARIA, T0, gwas_ro

RO1 = "http://x/ro1/"


def resolver(ro):
    table = {r.ref: r.content for r in ro.aggregated}
    return lambda ref: table.get(ref)


def test_new_ro_is_empty():
    ro = create_research_object(RO1, "http://x/maria", T0)
    assert ro.aggregated == [] and ro.annotations == []
    assert validate(ro) == []


@pytest.mark.parametrize("bad", ["http://x/ro1", "ro1/", "http://x/ro1/#frag/"])
def test_bad_ids_rejected(bad):
    with pytest.raises(BadIdentifierError):
        create_research_object(bad, "http://x/maria", T0)


def test_title_annotation_on_gwas():
    ro = gwas_ro()
    title = ro.annotations[0]
    assert title.targets == {ro.id}
    body = ro.annotation_body(title)
    assert set(body) == {(ro.id, DCT.title, Literal("GWAS to Kegg"))}
    assert RO.Annotation in ro.get(title.body_ref).kinds


def test_four_payloads_aggregated():
    ro = gwas_ro()
    assert sorted(ro.key(r.ref) for r in ro.payload_resources()) == sorted(ref for ref, _ in GWAS_PAYLOADS)
    assert all(RO.Resource in r.kinds for r in ro.aggregated)


def test_duplicate_ref():
    ro = gwas_ro()
    with pytest.raises(DuplicateResourceError):
        ro.aggregate("data2.csv", content=b"again")


def test_external_resource():
    ro = gwas_ro()
    res = ro.aggregate("http://kegg/pathway", {RO.Dataset})
    assert res.content is None and res.kinds == {RO.Dataset, RO.Resource}
    assert validate(ro) == []
    with pytest.raises(ExternalContentError):
        ro.aggregate("http://kegg/other", content=b"nope")


@pytest.mark.parametrize("ref", ["", ".ro/manifest.ttl", ".ro/annotations/009.ttl", "v001/x"])
def test_reserved_refs(ref):
    ro = create_research_object(RO1, MARIA, T0)
    with pytest.raises(BadIdentifierError):
        ro.aggregate(ref, content=b"x")


def test_deaggregate_counts():
    ro = gwas_ro()
    before = len(ro.payload_resources())
    ro.deaggregate("data2.csv")
    assert len(ro.payload_resources()) == before - 1
    with pytest.raises(UnknownResourceError):
        ro.deaggregate("data2.csv")


def test_deaggregate_drops_single_target_annotation():
    ro = gwas_ro()
    assert len(ro.annotations) == 2
    hyp = ro.annotations[1]
    ro.deaggregate("workflow34.xml")
    assert len(ro.annotations) == 1
    assert ro.get(hyp.body_ref) is None
    assert validate(ro) == []


def test_deaggregate_keeps_remaining_targets():
    ro = gwas_ro()
    ann = ro.annotate(["data2.csv", "hypothesis.txt"], Graph(), IRI(MARIA), T0)
    ro.deaggregate("data2.csv")
    assert ro.annotation(ann.id).targets == {ro.resolve("hypothesis.txt")}


def test_hypothesis_link_targets_workflow():
    ro = gwas_ro()
    assert ro.annotations[1].targets == {ro.resolve("workflow34.xml")}
    body = ro.annotation_body(ro.annotations[1])
    assert (ro.resolve("workflow34.xml"), ROKIT.hasHypothesis, ro.resolve("hypothesis.txt")) in body


def test_annotate_unknown_target():
    ro = gwas_ro()
    with pytest.raises(UnknownTargetError):
        ro.annotate(["missing.csv"], Graph(), IRI(MARIA), T0)


def test_annotation_ids_are_sequential():
    ro = gwas_ro()
    assert [ro.key(a.id) for a in ro.annotations] == [".ro/annotations/001", ".ro/annotations/002"]
    assert [ro.key(a.body_ref) for a in ro.annotations] == [".ro/annotations/001.ttl", ".ro/annotations/002.ttl"]


def test_empty_manifest_core():
    ro = create_research_object(RO1, "http://x/maria", T0)
    g = build_manifest(ro)
    m = ro.manifest_iri
    assert set(g) == {
        (ro.id, RDF_TYPE, RO.ResearchObject),
        (ro.id, RDF_TYPE, ORE.Aggregation),
        (m, RDF_TYPE, RO.Manifest),
        (m, RDF_TYPE, ORE.ResourceMap),
        (m, ORE.describes, ro.id),
        (ro.id, ORE.isDescribedBy, m),
        (ro.id, DCT.created, Literal("2012-03-01T09:00:00Z", datatype=IRI("http://www.w3.org/2001/XMLSchema#dateTime"))),
        (ro.id, DCT.creator, IRI("http://x/maria")),
    }


def test_gwas_manifest_matches_golden_file():
    ro = gwas_ro()
    golden = parse_turtle((FIXTURES / "gwas-manifest.ttl").read_text(), base=ro.manifest_iri.value)
    g = build_manifest(ro)
    assert graph_isomorphic(g, golden)
    payloads = {r.ref for r in ro.payload_resources()}
    assert len([o for o in g.objects(ro.id, ORE.aggregates) if o in payloads]) == 4


def test_manifest_exactness():
    rng = random.Random(5)
    for i in range(30):
        ro = random_ro(rng, f"http://ex.org/ro{i}/", T0)
        assert set(build_manifest(ro).objects(ro.id, ORE.aggregates)) == set(ro.refs())


def test_manifest_template_has_nothing_else():
    ro = gwas_ro()
    g = build_manifest(ro)
    expected = 8 + sum(1 + len(r.kinds) for r in ro.aggregated) + sum(5 + len(a.targets) for a in ro.annotations)
    assert len(g) == expected


def test_round_trip_gwas():
    ro = gwas_ro()
    back = load_research_object(build_manifest(ro), resolver(ro))
    assert structurally_equal(ro, back)


@pytest.mark.parametrize("seed", range(25))
def test_round_trip_random(seed):
    ro = random_ro(random.Random(seed), "http://ex.org/r/", T0)
    assert validate(ro) == []
    assert structurally_equal(ro, load_research_object(build_manifest(ro), resolver(ro)))


def test_structural_equality_sees_body_changes():
    a, b = gwas_ro(), gwas_ro()
    b.update_content(b.annotations[0].body_ref, b'<> <http://purl.org/dc/terms/title> "Other" .')
    assert not structurally_equal(a, b)


def test_two_ro_subjects_rejected():
    g = build_manifest(gwas_ro())
    g.add((IRI("http://x/other/"), RDF_TYPE, RO.ResearchObject))
    with pytest.raises(ManifestError, match="exactly one"):
        load_research_object(g)


def test_dangling_annotation_in_manifest():
    ro = gwas_ro()
    g = build_manifest(ro)
    g.discard((ro.id, ORE.aggregates, ro.resolve("workflow34.xml")))
    with pytest.raises(ManifestError, match=r"\.ro/annotations/002"):
        load_research_object(g, resolver(ro))


def test_untyped_aggregate_rejected():
    ro = gwas_ro()
    g = build_manifest(ro)
    g.discard((ro.resolve("data2.csv"), RDF_TYPE, RO.Resource))
    with pytest.raises(ManifestError, match="ro:Resource"):
        load_research_object(g, resolver(ro))


def test_validate_codes():
    ro = gwas_ro()
    assert validate(ro) == []
    # hand edit: drop an aggregated ref without touching the annotation on it
    ro.aggregated = [r for r in ro.aggregated if r.ref != ro.resolve("workflow34.xml")]
    assert [v.code for v in validate(ro)] == ["DANGLING_TARGET"]


def test_missing_content_on_disk(tmp_path):
    ro = gwas_ro()
    root = tmp_path / "gwas-to-kegg"
    write_research_object(root, ro)
    (root / "data2.csv").unlink()
    back = read_research_object(root, ro.id)
    assert [(v.code, v.subject) for v in validate(back)] == [("MISSING_CONTENT", ro.resolve("data2.csv").value)]


def test_unparseable_body():
    ro = gwas_ro()
    ro.update_content(ro.annotations[0].body_ref, b"<a> <b> .")
    assert [v.code for v in validate(ro)] == ["UNPARSEABLE_BODY"]


def test_violation_codes_closed():
    from rokit.ro import VIOLATION_CODES

    assert set(VIOLATION_CODES) == {
        "DUPLICATE_REF", "DANGLING_TARGET", "MISSING_CONTENT", "BAD_ID", "UNPARSEABLE_BODY", "EXTERNAL_WITH_CONTENT",
    }
    assert Violation("BAD_ID", "x", "m").to_json() == {"code": "BAD_ID", "subject": "x", "message": "m"}


@pytest.mark.parametrize("seed", range(30))
def test_annotation_closure(seed):
    rng = random.Random(seed)
    ro = random_ro(rng, "http://ex.org/c/", T0)
    for step in range(5):
        mutate(ro, rng, T0 + timedelta(seconds=step))
        assert "DANGLING_TARGET" not in {v.code for v in validate(ro)}


def test_frozen_ro_rejects_every_mutator():
    ro = gwas_ro().freeze()
    calls = [
        lambda: ro.aggregate("new.txt", content=b""),
        lambda: ro.deaggregate("data2.csv"),
        lambda: ro.update_content("data2.csv", b""),
        lambda: ro.annotate([ro.id], Graph(), IRI(MARIA), T0),
        lambda: ro.remove_annotation(ro.annotations[0].id),
    ]
    for call in calls:
        with pytest.raises(FrozenResearchObjectError):
            call()
    assert ro.copy().frozen is False


def test_disk_round_trip(tmp_path):
    ro = gwas_ro()
    root = tmp_path / "gwas-to-kegg"
    write_research_object(root, ro)
    assert (root / ".ro/annotations/001.ttl").is_file()
    assert (root / "data2.csv").read_bytes() == (GWAS / "data2.csv").read_bytes()
    assert structurally_equal(read_research_object(root, ro.id), ro)
    text = serialize_manifest(ro)
    assert "@base" not in text and BASE not in text


def test_manifest_json_projection():
    ro = gwas_ro()
    doc = manifest_json(ro)
    assert doc["id"] == ro.id.value and doc["creator"] == MARIA
    assert [r["ref"] for r in doc["resources"]] == ["data2.csv", "hypothesis.txt", "provenance.rdf", "workflow34.xml"]
    assert [a["targets"] for a in doc["annotations"]] == [["."], ["workflow34.xml"]]
    refs = {r["ref"] for r in doc["resources"]} | {a["body"] for a in doc["annotations"]}
    assert {ro.key(o) for o in build_manifest(ro).objects(ro.id, ORE.aggregates)} == refs


def test_annotation_predicates():
    ro = gwas_ro()
    g = build_manifest(ro)
    ann = ro.annotations[1]
    assert set(g.objects(ann.id, AO.annotatesResource)) == {ro.resolve("workflow34.xml")}
    assert g.objects(ann.id, AO.body) == [ann.body_ref]


def test_removing_an_annotation_prunes_notes_on_its_body():
    ro = gwas_ro()
    title = ro.annotations[0]
    note = ro.annotate([title.body_ref, "data2.csv"], Graph(), IRI(MARIA), T0)
    only_on_body = ro.annotate([title.body_ref], Graph(), IRI(MARIA), T0)
    ro.remove_annotation(title.id)
    assert ro.annotation(note.id).targets == {ro.resolve("data2.csv")}
    assert ro.annotation(only_on_body.id) is None
    assert ro.get(only_on_body.body_ref) is None
    assert validate(ro) == []
