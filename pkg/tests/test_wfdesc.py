import itertools
import random

import pytest

from rokit.rdf import IRI, RDF_TYPE, WFDESC, Graph, match_pattern, parse_turtle
from rokit.wfdesc import (
    DataLink,
    Direction,
    Parameter,
    Process,
    Workflow,
    WorkflowCycleError,
    WorkflowError,
    feeds,
    parse_workflow,
    serialize_workflow,
    topological_order,
    unbound_inputs,
    validate_workflow,
)

from conftest import FIXTURES

WF_BASE = "http://example.org/ros/gwas-to-kegg/workflow34.xml"
W = "http://ex.org/wf#"


def fixture_graph() -> Graph:
    return parse_turtle((FIXTURES / "workflow34.wfdesc.ttl").read_text(), base=WF_BASE)


def workflow34() -> Workflow:
    return parse_workflow(fixture_graph())


def chain(names, links, wf_inputs=(), wf_outputs=()):
    """Processes with an ``in``/``out`` port each; links are (src, dst) name pairs."""
    procs = []
    for n in names:
        pid = IRI(W + n)
        procs.append(Process(pid, n, (Parameter(IRI(W + n + "/in"), pid, Direction.IN, "in"),),
                             (Parameter(IRI(W + n + "/out"), pid, Direction.OUT, "out"),)))
    dl = tuple(DataLink(IRI(W + a + "/out"), IRI(W + b + "/in")) for a, b in links)
    wid = IRI(W)
    ins = tuple(Parameter(IRI(W + "in/" + n), wid, Direction.IN, n) for n in wf_inputs)
    outs = tuple(Parameter(IRI(W + "out/" + n), wid, Direction.OUT, n) for n in wf_outputs)
    return Workflow(wid, "t", ins, outs, tuple(procs), dl)


def test_fixture_shape():
    wf = workflow34()
    assert wf.label == "mining_the_Kegg_path"
    assert [p.label for p in wf.processes] == ["Flatten_List_3", "G_P", "input_chr_pos"]
    assert len(wf.datalinks) == 2
    assert [p.name for p in wf.inputs] == ["input_file", "set_width"]
    assert wf.process(IRI(WF_BASE + "#proc/G_P/")).impl_hint == "rshell:gene_pathway"


def test_fixture_is_valid():
    assert validate_workflow(workflow34()) == []


def test_fixture_topological_order():
    assert [p.label for p in topological_order(workflow34())] == ["input_chr_pos", "G_P", "Flatten_List_3"]


def test_fixture_unbound_inputs():
    assert {p.name for p in unbound_inputs(workflow34())} == {"chrom_start", "chrom_end"}


def test_fixture_feeds_partition_inputs():
    wf = workflow34()
    fed = feeds(wf)
    all_inputs = {p.id for q in wf.processes for p in q.inputs}
    linked = {s for s in fed if s in all_inputs}
    unbound = {p.id for p in unbound_inputs(wf)}
    assert linked | unbound == all_inputs and not linked & unbound
    # workflow output is fed by the G_P port of the same name
    assert fed[IRI(WF_BASE + "#out/output_table")] == IRI(WF_BASE + "#proc/G_P/out/output_table")


def test_undeclared_sink_is_named():
    g = fixture_graph()
    link = next(iter(g.objects(IRI(WF_BASE + "#"), WFDESC.hasDataLink)))
    (sink,) = g.objects(link, WFDESC.hasSink)
    g.discard((link, WFDESC.hasSink, sink))
    g.add((link, WFDESC.hasSink, IRI(WF_BASE + "#proc/G_P/in/ghost")))
    with pytest.raises(WorkflowError, match="ghost"):
        parse_workflow(g)


def test_process_as_endpoint_rejected():
    g = fixture_graph()
    link = next(iter(g.objects(IRI(WF_BASE + "#"), WFDESC.hasDataLink)))
    (sink,) = g.objects(link, WFDESC.hasSink)
    g.discard((link, WFDESC.hasSink, sink))
    g.add((link, WFDESC.hasSink, IRI(WF_BASE + "#proc/G_P/")))
    with pytest.raises(WorkflowError, match="not a parameter"):
        parse_workflow(g)


def test_zero_or_two_workflows():
    with pytest.raises(WorkflowError, match="exactly one"):
        parse_workflow(Graph())
    g = fixture_graph()
    g.add((IRI("http://ex.org/other"), RDF_TYPE, WFDESC.Workflow))
    with pytest.raises(WorkflowError, match="exactly one"):
        parse_workflow(g)


def test_empty_workflow():
    g = Graph([(IRI(W), RDF_TYPE, WFDESC.Workflow)])
    wf = parse_workflow(g)
    assert wf.processes == () and validate_workflow(wf) == [] and topological_order(wf) == []
    out = serialize_workflow(wf)
    assert set(out.subjects()) == {IRI(W)}


def test_round_trip():
    wf = workflow34()
    g = serialize_workflow(wf)
    assert parse_workflow(g) == wf
    assert len(match_pattern(g, None, WFDESC.hasDataLink, None)) == 2


def test_two_cycle():
    wf = chain(["A", "B"], [("A", "B"), ("B", "A")])
    assert [v.code for v in validate_workflow(wf)] == ["CYCLE"]
    with pytest.raises(WorkflowCycleError):
        topological_order(wf)


def test_multiple_sources():
    wf = chain(["A", "B", "C"], [("A", "C"), ("B", "C")])
    assert [v.code for v in validate_workflow(wf)] == ["MULTIPLE_SOURCES"]


def test_self_link_and_wrong_direction():
    wf = chain(["A"], [])
    bad = Workflow(wf.id, wf.label, processes=wf.processes, datalinks=(
        DataLink(IRI(W + "A/in"), IRI(W + "A/in")),
        DataLink(IRI(W + "A/in"), IRI(W + "A/out")),
    ))
    assert [v.code for v in validate_workflow(bad)] == ["SELF_LINK", "BAD_DIRECTION"]


def test_independent_processes_in_id_order():
    wf = chain(["b", "c", "a"], [])
    assert [p.label for p in topological_order(wf)] == ["a", "b", "c"]
    # with one edge c->a, brute force the valid orders and take the smallest by id
    linked = chain(["b", "c", "a"], [("c", "a")])
    valid = [
        [p.label for p in perm]
        for perm in itertools.permutations(linked.processes)
        if [p.label for p in perm].index("c") < [p.label for p in perm].index("a")
    ]
    assert [p.label for p in topological_order(linked)] == min(valid, key=lambda o: [W + n for n in o])


def test_fully_linked_pipeline_has_no_unbound_inputs():
    wf = chain(["A", "B"], [("A", "B")], wf_inputs=["in"])
    assert unbound_inputs(wf) == []


def test_single_process_single_input():
    wf = chain(["A"], [])
    assert [p.name for p in unbound_inputs(wf)] == ["in"]


def mesh(rng, n):
    """Processes with one output and n input ports; random links between them."""
    names = [f"p{i:02d}" for i in range(n)]
    rng.shuffle(names)
    procs, links = [], []
    for n_ in names:
        pid = IRI(W + n_)
        ins = tuple(Parameter(IRI(f"{W}{n_}/in{k}"), pid, Direction.IN, f"in{k}") for k in range(n))
        procs.append(Process(pid, n_, ins, (Parameter(IRI(W + n_ + "/out"), pid, Direction.OUT, "out"),)))
    edges = set()
    for _ in range(rng.randint(0, 2 * n)):
        a, b = rng.sample(names, 2) if n > 1 else (names[0], names[0])
        if a == b:
            continue
        edges.add((a, b))
    slot = {}
    for a, b in sorted(edges):
        k = slot.get(b, 0)
        slot[b] = k + 1
        links.append(DataLink(IRI(W + a + "/out"), IRI(f"{W}{b}/in{k}")))
    return Workflow(IRI(W), "mesh", (), (), tuple(procs), tuple(links)), edges


def dfs_has_cycle(names, edges):
    succ = {n: [b for a, b in edges if a == n] for n in names}
    state = {}

    def visit(n):
        state[n] = 1
        for m in succ[n]:
            if state.get(m) == 1 or (m not in state and visit(m)):
                return True
        state[n] = 2
        return False

    return any(n not in state and visit(n) for n in names)


@pytest.mark.parametrize("seed", range(150))
def test_cycle_detection_matches_dfs(seed):
    rng = random.Random(seed)
    wf, edges = mesh(rng, rng.randint(1, 12))
    names = [p.label for p in wf.processes]
    cyclic = dfs_has_cycle(names, edges)
    codes = [v.code for v in validate_workflow(wf)]
    assert ("CYCLE" in codes) == cyclic
    if cyclic:
        with pytest.raises(WorkflowCycleError):
            topological_order(wf)
    else:
        order = [p.label for p in topological_order(wf)]
        assert sorted(order) == sorted(names)
        assert all(order.index(a) < order.index(b) for a, b in edges)
        back = parse_workflow(serialize_workflow(wf))
        shape = lambda w: {(p.id, p.label, frozenset(p.inputs), frozenset(p.outputs)) for p in w.processes}
        assert shape(back) == shape(wf) and set(back.datalinks) == set(wf.datalinks)
