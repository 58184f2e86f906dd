import random

import pytest

from generators import random_graph
from rokit.rdf import (
    IRI,
    RDF_TYPE,
    RO,
    XSD,
    BNode,
    Graph,
    Literal,
    TurtleSyntaxError,
    graph_isomorphic,
    parse_turtle,
    serialize_turtle,
)
from rokit.ro import build_manifest

from conftest import gwas_ro

X = "http://x/"


def test_single_statement():
    g = parse_turtle("<a> <b> <c> .", base=X)
    assert set(g) == {(IRI(X + "a"), IRI(X + "b"), IRI(X + "c"))}


def test_prefixed_type_against_base():
    g = parse_turtle("@prefix ro: <http://purl.org/net/wf4ever/ro#> . <> a ro:ResearchObject .", base="http://x/ro1/")
    assert set(g) == {(IRI("http://x/ro1/"), RDF_TYPE, IRI("http://purl.org/net/wf4ever/ro#ResearchObject"))}
    assert g.prefixes["ro"] == "http://purl.org/net/wf4ever/ro#"


def test_missing_object_reports_the_dot():
    with pytest.raises(TurtleSyntaxError) as err:
        parse_turtle("<a> <b> .", base=X)
    assert (err.value.line, err.value.column) == (1, 9)


def test_error_position_on_later_line():
    with pytest.raises(TurtleSyntaxError) as err:
        parse_turtle("<a> <b> <c> .\n\n  <d> <e> \"open .\n", base=X)
    assert err.value.line == 3


def test_undefined_prefix():
    with pytest.raises(TurtleSyntaxError, match="undefined prefix"):
        parse_turtle("<a> <b> nope:c .", base=X)


def test_relative_iri_without_base():
    with pytest.raises(TurtleSyntaxError, match="base"):
        parse_turtle("<a> <b> <c> .")


def test_abbreviations_and_literals():
    text = """
    @prefix ex: <http://ex.org/> .
    @base <http://base.org/dir/> .
    ex:s a ex:C, ex:D ;
        ex:p "plain", "tagged"@en-GB, "typed"^^ex:dt, 'single', '''long
    'quoted' text''', \"\"\"more \\"escapes\\"\"\"\" ;
        ex:q [ ex:r <../up> ], _:x .
    _:x ex:r [] .
    """
    g = parse_turtle(text, base=X)
    ex = "http://ex.org/"
    s = IRI(ex + "s")
    objs = set(g.objects(s, IRI(ex + "p")))
    assert Literal("plain") in objs
    assert Literal("tagged", language="en-gb") in objs
    assert Literal("typed", datatype=IRI(ex + "dt")) in objs
    assert Literal("long\n    'quoted' text") in objs
    assert Literal('more "escapes"') in objs
    assert set(g.objects(s, RDF_TYPE)) == {IRI(ex + "C"), IRI(ex + "D")}
    (nested,) = [o for o in g.objects(s, IRI(ex + "q")) if g.value(o, IRI(ex + "r")) == IRI("http://base.org/up")]
    assert isinstance(nested, BNode)
    assert len(g.bnodes()) == 3


@pytest.mark.parametrize("text", ["<a> <b> (<c>) .", "<a> <b> 42 .", "<a> <b> true ."])
def test_excluded_shorthands_rejected(text):
    with pytest.raises(TurtleSyntaxError):
        parse_turtle(text, base=X)


def test_empty_graph_serializes_to_prefixes_only():
    text = serialize_turtle(Graph(prefixes={"ro": RO.base}))
    lines = [line for line in text.splitlines() if line.strip()]
    assert lines and all(line.startswith("@prefix") for line in lines)
    assert len(parse_turtle(text)) == 0


def test_manifest_round_trip():
    ro = gwas_ro()
    g = build_manifest(ro)
    text = serialize_turtle(g, base=ro.manifest_iri.value, scope=ro.id.value)
    assert "@base" not in text
    assert graph_isomorphic(parse_turtle(text, base=ro.manifest_iri.value), g)


def test_blank_body_stub_uses_brackets():
    g = Graph()
    body = BNode()
    g.add((IRI(X + "ann"), IRI("http://purl.org/ao/body"), body))
    g.add((body, IRI(X + "says"), Literal("hi")))
    text = serialize_turtle(g)
    assert "[" in text and "_:" not in text
    assert graph_isomorphic(parse_turtle(text), g)


def test_shared_blank_nodes_get_labels():
    b = BNode()
    g = Graph([(IRI(X + "a"), IRI(X + "p"), b), (IRI(X + "c"), IRI(X + "p"), b)])
    text = serialize_turtle(g)
    assert "_:" in text
    assert graph_isomorphic(parse_turtle(text), g)


def test_output_is_deterministic():
    rng = random.Random(7)
    g = random_graph(rng)
    shuffled = Graph(sorted(g, key=lambda t: random.Random(1).random()))
    assert serialize_turtle(g) == serialize_turtle(shuffled)


def test_scope_limits_relativization():
    g = Graph([(IRI("http://x/ro/a"), IRI("http://x/ro/p"), IRI("http://x/people/maria"))])
    text = serialize_turtle(g, base="http://x/ro/.ro/manifest.ttl", scope="http://x/ro/")
    assert "<http://x/people/maria>" in text and "<../a>" in text


def test_typed_datetime_round_trip():
    lit = Literal("2012-03-01T09:00:00Z", datatype=XSD.dateTime)
    g = Graph([(IRI(X + "a"), IRI(X + "t"), lit)])
    assert set(parse_turtle(serialize_turtle(g))) == set(g)


@pytest.mark.parametrize("seed", range(40))
def test_random_round_trip(seed):
    rng = random.Random(seed)
    g = random_graph(rng)
    base = "http://ex.org/" if seed % 2 else None
    assert graph_isomorphic(parse_turtle(serialize_turtle(g, base=base), base=base or X), g)
