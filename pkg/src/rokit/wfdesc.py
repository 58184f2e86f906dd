"""Workflow descriptions: processes, parameters and data links as a DAG.

A workflow-level input feeds every process input of the same name unless
that input already has a data link; workflow-level outputs are fed the same
way from process outputs. Explicit data links therefore only join processes.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

from rokit.rdf import RDF_TYPE, RDFS, ROKIT, WFDESC, PROV, IRI, BNode, Graph, Literal
from rokit.ro.model import Violation

WORKFLOW_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": RDFS.base,
    "wfdesc": WFDESC.base,
    "prov": PROV.base,
    "rokit": ROKIT.base,
}


class WorkflowError(ValueError):
    pass


class WorkflowCycleError(WorkflowError):
    pass


class Direction(Enum):
    IN = "In"
    OUT = "Out"

    @property
    def rdf_class(self) -> IRI:
        return WFDESC.Input if self is Direction.IN else WFDESC.Output


@dataclass(frozen=True)
class Parameter:
    id: IRI
    owner: IRI
    direction: Direction
    name: str


@dataclass(frozen=True)
class Process:
    id: IRI
    label: str
    inputs: tuple[Parameter, ...] = ()
    outputs: tuple[Parameter, ...] = ()
    impl_hint: str | None = None

    def input(self, name: str) -> Parameter | None:
        return next((p for p in self.inputs if p.name == name), None)

    def output(self, name: str) -> Parameter | None:
        return next((p for p in self.outputs if p.name == name), None)


@dataclass(frozen=True)
class DataLink:
    source: IRI
    sink: IRI


@dataclass(frozen=True)
class Workflow:
    id: IRI
    label: str
    inputs: tuple[Parameter, ...] = ()
    outputs: tuple[Parameter, ...] = ()
    processes: tuple[Process, ...] = ()
    datalinks: tuple[DataLink, ...] = ()

    def process(self, ref: IRI) -> Process | None:
        return next((p for p in self.processes if p.id == ref), None)

    def parameters(self) -> dict[IRI, Parameter]:
        out: dict[IRI, Parameter] = {}
        for p in self.inputs + self.outputs:
            out.setdefault(p.id, p)
        for proc in self.processes:
            for p in proc.inputs + proc.outputs:
                out.setdefault(p.id, p)
        return out

    def input(self, name: str) -> Parameter | None:
        return next((p for p in self.inputs if p.name == name), None)


def _name(g: Graph, node, what: str, required: bool = True) -> str:
    label = g.value(node, RDFS.label)
    if label is not None:
        return label.lexical if isinstance(label, Literal) else str(label)
    if isinstance(node, IRI):
        tail = node.value.rstrip("/")
        for sep in ("/", "#"):
            tail = tail.rsplit(sep, 1)[-1]
        if tail:
            return tail
    if not required:
        return ""
    raise WorkflowError(f"{what} {node} has no rdfs:label")


def _parameters(g: Graph, owner: IRI, direction: Direction) -> tuple[Parameter, ...]:
    pred = WFDESC.hasInput if direction is Direction.IN else WFDESC.hasOutput
    out = []
    for node in g.objects(owner, pred):
        if not isinstance(node, IRI):
            raise WorkflowError(f"parameter of {owner} must be an IRI, got a blank node")
        types = set(g.objects(node, RDF_TYPE))
        other = Direction.OUT if direction is Direction.IN else Direction.IN
        if other.rdf_class in types:
            raise WorkflowError(f"{node} is declared as both input and output")
        out.append(Parameter(node, owner, direction, _name(g, node, "parameter")))
    return tuple(sorted(out, key=lambda p: p.id.value))


def parse_workflow(g: Graph) -> Workflow:
    """Read the single ``wfdesc:Workflow`` described in ``g``."""
    subjects = sorted(g.subjects(RDF_TYPE, WFDESC.Workflow), key=str)
    if len(subjects) != 1:
        raise WorkflowError(f"expected exactly one wfdesc:Workflow, found {len(subjects)}")
    wf_id = subjects[0]
    if not isinstance(wf_id, IRI):
        raise WorkflowError("the workflow must be identified by an IRI")

    processes = []
    for node in g.objects(wf_id, WFDESC.hasProcess):
        if not isinstance(node, IRI):
            raise WorkflowError("processes must be identified by IRIs")
        hint = g.value(node, ROKIT.implementation)
        processes.append(
            Process(
                id=node,
                label=_name(g, node, "process"),
                inputs=_parameters(g, node, Direction.IN),
                outputs=_parameters(g, node, Direction.OUT),
                impl_hint=hint.lexical if isinstance(hint, Literal) else None,
            )
        )
    processes.sort(key=lambda p: p.id.value)

    wf = Workflow(
        id=wf_id,
        label=_name(g, wf_id, "workflow", required=False),
        inputs=_parameters(g, wf_id, Direction.IN),
        outputs=_parameters(g, wf_id, Direction.OUT),
        processes=tuple(processes),
    )
    params = wf.parameters()
    nodes = {p.id for p in processes} | {wf_id}

    links = []
    for node in g.objects(wf_id, WFDESC.hasDataLink):
        ends = []
        for pred in (WFDESC.hasSource, WFDESC.hasSink):
            end = g.value(node, pred)
            if end is None:
                raise WorkflowError(f"data link {node} lacks {pred}")
            if end in nodes:
                raise WorkflowError(f"data link endpoint {end} is not a parameter")
            if end not in params:
                raise WorkflowError(f"data link endpoint {end} is not declared in the workflow")
            ends.append(end)
        links.append(DataLink(ends[0], ends[1]))
    links.sort(key=lambda d: (d.source.value, d.sink.value))
    return Workflow(wf.id, wf.label, wf.inputs, wf.outputs, wf.processes, tuple(links))


def _add_parameters(g: Graph, owner: IRI, params, direction: Direction) -> None:
    pred = WFDESC.hasInput if direction is Direction.IN else WFDESC.hasOutput
    for p in params:
        g.add((owner, pred, p.id))
        g.add((p.id, RDF_TYPE, direction.rdf_class))
        g.add((p.id, RDFS.label, Literal(p.name)))


def serialize_workflow(wf: Workflow) -> Graph:
    g = Graph(prefixes=WORKFLOW_PREFIXES)
    g.add((wf.id, RDF_TYPE, WFDESC.Workflow))
    if wf.label:
        g.add((wf.id, RDFS.label, Literal(wf.label)))
    _add_parameters(g, wf.id, wf.inputs, Direction.IN)
    _add_parameters(g, wf.id, wf.outputs, Direction.OUT)
    for proc in wf.processes:
        g.add((wf.id, WFDESC.hasProcess, proc.id))
        g.add((proc.id, RDF_TYPE, WFDESC.Process))
        g.add((proc.id, RDFS.label, Literal(proc.label)))
        if proc.impl_hint is not None:
            g.add((proc.id, ROKIT.implementation, Literal(proc.impl_hint)))
        _add_parameters(g, proc.id, proc.inputs, Direction.IN)
        _add_parameters(g, proc.id, proc.outputs, Direction.OUT)
    for link in wf.datalinks:
        node = BNode()
        g.add((wf.id, WFDESC.hasDataLink, node))
        g.add((node, RDF_TYPE, WFDESC.DataLink))
        g.add((node, WFDESC.hasSource, link.source))
        g.add((node, WFDESC.hasSink, link.sink))
    return g


# -- analysis ---------------------------------------------------------------


def feeds(wf: Workflow) -> dict[IRI, IRI]:
    """Map each fed process input (and workflow output) to the parameter feeding it.

    Data links take precedence; otherwise a same-named workflow-level
    parameter is the feed.
    """
    out: dict[IRI, IRI] = {}
    for link in wf.datalinks:
        out.setdefault(link.sink, link.source)
    wf_inputs = {p.name: p.id for p in wf.inputs}
    for proc in wf.processes:
        for p in proc.inputs:
            if p.id not in out and p.name in wf_inputs:
                out[p.id] = wf_inputs[p.name]
    for p in wf.outputs:
        if p.id in out:
            continue
        producers = [q.output(p.name) for q in wf.processes if q.output(p.name) is not None]
        if len(producers) == 1:
            out[p.id] = producers[0].id
    return out


def process_edges(wf: Workflow) -> set[tuple[IRI, IRI]]:
    """(upstream process, downstream process) pairs induced by data links."""
    params = wf.parameters()
    procs = {p.id for p in wf.processes}
    edges = set()
    for link in wf.datalinks:
        src, dst = params.get(link.source), params.get(link.sink)
        if src is None or dst is None or src.direction is not Direction.OUT or dst.direction is not Direction.IN:
            continue
        if src.owner in procs and dst.owner in procs:
            edges.add((src.owner, dst.owner))
    return edges


def _kahn(wf: Workflow) -> tuple[list[Process], set[IRI]]:
    by_id = {p.id: p for p in wf.processes}
    indeg = {pid: 0 for pid in by_id}
    succ: dict[IRI, set[IRI]] = defaultdict(set)
    for a, b in process_edges(wf):
        if b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    heap = [(pid.value, pid) for pid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, pid = heapq.heappop(heap)
        order.append(by_id[pid])
        for nxt in succ[pid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, (nxt.value, nxt))
    stuck = {pid for pid, d in indeg.items() if d > 0}
    return order, stuck


def validate_workflow(wf: Workflow) -> list[Violation]:
    out: list[Violation] = []
    seen: set[IRI] = set()
    for proc in wf.processes:
        if proc.id in seen:
            out.append(Violation("DUPLICATE_PROCESS", proc.id.value, f"process {proc.id} is declared twice"))
        seen.add(proc.id)
        names = [p.name for p in proc.inputs + proc.outputs]
        for name in sorted({n for n in names if names.count(n) > 1}):
            out.append(Violation("DUPLICATE_NAME", proc.id.value, f"parameter name {name!r} is used twice"))

    all_params = list(wf.inputs + wf.outputs) + [p for q in wf.processes for p in q.inputs + q.outputs]
    counted: dict[IRI, int] = defaultdict(int)
    for p in all_params:
        counted[p.id] += 1
    for pid in sorted((k for k, n in counted.items() if n > 1), key=str):
        out.append(Violation("DUPLICATE_PARAMETER", pid.value, f"parameter {pid} is declared more than once"))

    params = wf.parameters()
    sinks: dict[IRI, int] = defaultdict(int)
    for link in wf.datalinks:
        src, dst = params.get(link.source), params.get(link.sink)
        if link.source == link.sink:
            out.append(Violation("SELF_LINK", link.sink.value, f"data link joins {link.sink} to itself"))
            continue
        if src is None or dst is None:
            missing = link.source if src is None else link.sink
            out.append(Violation("UNRESOLVED_ENDPOINT", missing.value, f"{missing} is not a declared parameter"))
            continue
        src_ok = (src.direction is Direction.OUT) != (src.owner == wf.id)
        dst_ok = (dst.direction is Direction.IN) != (dst.owner == wf.id)
        if not (src_ok and dst_ok):
            out.append(
                Violation("BAD_DIRECTION", link.sink.value, f"data link {link.source} -> {link.sink} runs the wrong way")
            )
        sinks[link.sink] += 1
    for sink in sorted((s for s, n in sinks.items() if n > 1), key=str):
        out.append(Violation("MULTIPLE_SOURCES", sink.value, f"{sink} has {sinks[sink]} incoming data links"))

    _, stuck = _kahn(wf)
    if stuck:
        names = ", ".join(sorted(p.value for p in stuck))
        out.append(Violation("CYCLE", wf.id.value, f"processes on or behind a cycle: {names}"))
    return out


def topological_order(wf: Workflow) -> list[Process]:
    """Processes in dependency order; ties go to the smaller process IRI."""
    order, stuck = _kahn(wf)
    if stuck:
        raise WorkflowCycleError(f"workflow {wf.id} has a cycle through {sorted(p.value for p in stuck)}")
    return order


def unbound_inputs(wf: Workflow) -> list[Parameter]:
    """Process inputs fed by neither a data link nor a workflow-level input."""
    fed = feeds(wf)
    return [p for proc in wf.processes for p in proc.inputs if p.id not in fed]
