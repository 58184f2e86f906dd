"""Toy workflow enactor and the provenance traces it records.

Identifiers minted for a run ``R``::

    R/<name>                      workflow-level input artifact
    R/<process>                   process run
    R/<process>/in/<port>         artifact bound directly to an unfed process input
    R/<process>/out/<port>        artifact generated by a process run
"""

from __future__ import annotations

import uuid
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Mapping

from rokit.rdf import PROV, RDF_TYPE, WFPROV, IRI, Graph, Literal
from rokit.ro.model import Violation, parse_timestamp, timestamp_literal
from rokit.wfdesc import Process, Workflow, feeds, topological_order, unbound_inputs

Step = Callable[[Mapping[str, bytes]], Mapping[str, bytes]]

TRACE_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "prov": PROV.base,
    "wfprov": WFPROV.base,
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class EnactmentError(RuntimeError):
    pass


class MissingBindingError(EnactmentError):
    def __init__(self, names: list[str]):
        super().__init__("no binding for input parameter(s): " + ", ".join(names))
        self.names = names


class MissingStepError(EnactmentError):
    pass


class StepFailedError(EnactmentError):
    def __init__(self, process: IRI, cause: BaseException | str):
        super().__init__(f"step for process {process} failed: {cause}")
        self.process = process


class UnknownArtifactError(KeyError):
    pass


@dataclass(frozen=True)
class Artifact:
    id: IRI
    value: bytes | None = None
    label: str | None = None


@dataclass(frozen=True)
class ProcessRun:
    id: IRI
    described_by: IRI
    used: Mapping[str, IRI]
    generated: Mapping[str, IRI]
    started: datetime
    ended: datetime


@dataclass(frozen=True)
class Engine:
    id: IRI
    name: str


@dataclass(frozen=True)
class WorkflowRun:
    id: IRI
    described_by: IRI
    process_runs: tuple[ProcessRun, ...]
    engine: Engine
    inputs: Mapping[str, IRI] = field(default_factory=dict)
    outputs: Mapping[str, IRI] = field(default_factory=dict)
    artifacts: Mapping[IRI, Artifact] = field(default_factory=dict)

    def producer(self, artifact: IRI) -> ProcessRun | None:
        return next((pr for pr in self.process_runs if artifact in pr.generated.values()), None)


class StepRegistry:
    """Step implementations keyed by process IRI."""

    def __init__(self):
        self._steps: dict[IRI, Step] = {}

    def register(self, process: Process | IRI, step: Step) -> None:
        key = process.id if isinstance(process, Process) else process
        self._steps[key] = step

    def get(self, process: IRI) -> Step | None:
        return self._steps.get(process)

    def __contains__(self, process: object) -> bool:
        return process in self._steps


class TickClock:
    """Clock that advances one second per reading, so timestamps order the run."""

    def __init__(self, start: datetime | None = None):
        start = start or datetime.now(timezone.utc)
        self._next = start.astimezone(timezone.utc).replace(microsecond=0)

    def __call__(self) -> datetime:
        now = self._next
        self._next += timedelta(seconds=1)
        return now


def _child(run_id: IRI, *parts: str) -> IRI:
    return IRI(run_id.value.rstrip("/") + "/" + "/".join(parts))


def enact(
    wf: Workflow,
    bindings: Mapping[str, bytes],
    registry: StepRegistry,
    engine: Engine,
    run_id: IRI | str | None = None,
    clock: Callable[[], datetime] | None = None,
) -> tuple[WorkflowRun, Graph]:
    """Execute ``wf`` in topological order and return the run and its trace."""
    run_id = IRI(run_id) if isinstance(run_id, str) else run_id or IRI(f"urn:uuid:{uuid.uuid4()}")
    clock = clock or TickClock()
    order = topological_order(wf)

    required = [p.name for p in wf.inputs] + [p.name for p in unbound_inputs(wf)]
    missing = sorted({n for n in required if n not in bindings})
    if missing:
        raise MissingBindingError(missing)
    unregistered = [p.id.value for p in order if p.id not in registry]
    if unregistered:
        raise MissingStepError("no step registered for process(es): " + ", ".join(unregistered))

    artifacts: dict[IRI, Artifact] = {}
    by_param: dict[IRI, IRI] = {}  # parameter id -> artifact carrying its value

    def mint(aid: IRI, value: bytes, label: str) -> IRI:
        if aid in artifacts:
            raise EnactmentError(f"artifact id {aid} minted twice")
        artifacts[aid] = Artifact(aid, value, label)
        return aid

    run_inputs = {}
    for p in wf.inputs:
        run_inputs[p.name] = by_param[p.id] = mint(_child(run_id, p.name), bindings[p.name], p.name)

    fed = feeds(wf)
    runs = []
    for proc in order:
        pr_id = _child(run_id, proc.label)
        used: dict[str, IRI] = {}
        for p in proc.inputs:
            if p.id in fed:
                used[p.name] = by_param[fed[p.id]]
            else:
                used[p.name] = mint(_child(run_id, proc.label, "in", p.name), bindings[p.name], p.name)
        started = clock()
        try:
            result = registry.get(proc.id)({n: artifacts[a].value for n, a in used.items()})
        except Exception as exc:
            raise StepFailedError(proc.id, exc) from exc
        absent = [p.name for p in proc.outputs if p.name not in result]
        if absent:
            raise StepFailedError(proc.id, f"no value for output(s) {', '.join(absent)}")
        generated = {}
        for p in proc.outputs:
            value = result[p.name]
            if not isinstance(value, bytes):
                raise StepFailedError(proc.id, f"output {p.name} is not bytes")
            generated[p.name] = by_param[p.id] = mint(_child(run_id, proc.label, "out", p.name), value, p.name)
        runs.append(ProcessRun(pr_id, proc.id, used, generated, started, clock()))

    outputs = {p.name: by_param[fed[p.id]] for p in wf.outputs if fed.get(p.id) in by_param}
    run = WorkflowRun(run_id, wf.id, tuple(runs), engine, run_inputs, outputs, artifacts)
    return run, emit_trace_graph(run)


def emit_trace_graph(run: WorkflowRun) -> Graph:
    g = Graph(prefixes=TRACE_PREFIXES)
    g.add((run.id, RDF_TYPE, WFPROV.WorkflowRun))
    g.add((run.id, RDF_TYPE, PROV.Activity))
    g.add((run.id, WFPROV.describedByWorkflow, run.described_by))
    g.add((run.id, WFPROV.wasEnactedBy, run.engine.id))
    g.add((run.engine.id, RDF_TYPE, WFPROV.WorkflowEngine))
    g.add((run.engine.id, RDF_TYPE, PROV.SoftwareAgent))

    def artifact(a: IRI) -> None:
        g.add((a, RDF_TYPE, WFPROV.Artifact))
        g.add((a, RDF_TYPE, PROV.Entity))

    for pr in run.process_runs:
        g.add((pr.id, RDF_TYPE, WFPROV.ProcessRun))
        g.add((pr.id, WFPROV.wasPartOfWorkflowRun, run.id))
        g.add((pr.id, WFPROV.describedByProcess, pr.described_by))
        g.add((pr.id, PROV.startedAtTime, timestamp_literal(pr.started)))
        g.add((pr.id, PROV.endedAtTime, timestamp_literal(pr.ended)))
        for a in pr.used.values():
            g.add((pr.id, WFPROV.usedInput, a))
            g.add((pr.id, PROV.used, a))
            artifact(a)
        for a in pr.generated.values():
            g.add((a, WFPROV.wasOutputFrom, pr.id))
            g.add((a, PROV.wasGeneratedBy, pr.id))
            artifact(a)
    return g


def _port(artifact: IRI) -> str:
    return artifact.value.rsplit("/", 1)[-1]


def _expected_inputs(wf: Workflow, run_id: IRI) -> dict[IRI, dict[IRI, str]]:
    """Per process, the artifact IRI each input would carry under the naming scheme."""
    params = wf.parameters()
    labels = {p.id: p.label for p in wf.processes}
    fed = feeds(wf)
    out: dict[IRI, dict[IRI, str]] = {}
    for proc in wf.processes:
        names = {}
        for p in proc.inputs:
            src = params.get(fed[p.id]) if p.id in fed else None
            if src is None:
                aid = _child(run_id, proc.label, "in", p.name)
            elif src.owner == wf.id:
                aid = _child(run_id, src.name)
            else:
                aid = _child(run_id, labels[src.owner], "out", src.name)
            names[aid] = p.name
        out[proc.id] = names
    return out


def parse_trace(g: Graph, wf: Workflow | None = None) -> WorkflowRun:
    """Rebuild a :class:`WorkflowRun` from a trace graph.

    Input names are recovered from ``wf`` when given, by matching each used
    artifact against the IRI the enactor would have minted for that input;
    otherwise (and for outputs) the last path segment of the artifact IRI is
    taken as the port name.
    Process runs are ordered by start time, then IRI.
    """
    runs = g.subjects(RDF_TYPE, WFPROV.WorkflowRun)
    if len(runs) != 1:
        raise ValueError(f"expected exactly one wfprov:WorkflowRun, found {len(runs)}")
    run_id = runs[0]
    described = g.value(run_id, WFPROV.describedByWorkflow)
    engine_id = g.value(run_id, WFPROV.wasEnactedBy)
    if not isinstance(described, IRI) or not isinstance(engine_id, IRI):
        raise ValueError(f"run {run_id} lacks describedByWorkflow or wasEnactedBy")
    engine_name = engine_id.value.rsplit("/", 1)[-1]

    expected = _expected_inputs(wf, run_id) if wf is not None else {}
    process_runs = []
    for pr in g.subjects(WFPROV.wasPartOfWorkflowRun, run_id):
        proc = g.value(pr, WFPROV.describedByProcess)
        names = expected.get(proc, {})
        used = {names.get(a, _port(a)): a for a in g.objects(pr, PROV.used)}
        generated = {_port(a): a for a in g.subjects(PROV.wasGeneratedBy, pr)}
        times = [g.value(pr, p) for p in (PROV.startedAtTime, PROV.endedAtTime)]
        start, end = (parse_timestamp(t.lexical) if isinstance(t, Literal) else _EPOCH for t in times)
        process_runs.append(ProcessRun(pr, proc, used, generated, start, end))
    process_runs.sort(key=lambda pr: (pr.started, pr.id.value))

    inputs = {}
    if wf is not None:
        for p in wf.inputs:
            aid = _child(run_id, p.name)
            if aid in g.subjects(RDF_TYPE, WFPROV.Artifact):
                inputs[p.name] = aid
    artifacts = {a: Artifact(a) for a in g.subjects(RDF_TYPE, WFPROV.Artifact)}
    return WorkflowRun(run_id, described, tuple(process_runs), Engine(engine_id, engine_name), inputs, {}, artifacts)


# -- queries ----------------------------------------------------------------


def lineage(run: WorkflowRun, artifact: IRI) -> set[IRI]:
    """Everything upstream of ``artifact`` (inclusive) over generation and usage edges."""
    known = set(run.artifacts) | {a for pr in run.process_runs for a in (*pr.used.values(), *pr.generated.values())}
    if artifact not in known:
        raise UnknownArtifactError(f"{artifact} is not an artifact of run {run.id}")
    generated_by: dict[IRI, list[ProcessRun]] = defaultdict(list)
    for pr in run.process_runs:
        for a in pr.generated.values():
            generated_by[a].append(pr)
    seen = {artifact}
    stack = [artifact]
    while stack:
        a = stack.pop()
        for pr in generated_by.get(a, ()):
            if pr.id not in seen:
                seen.add(pr.id)
                for u in pr.used.values():
                    if u not in seen:
                        seen.add(u)
                        stack.append(u)
    return seen


def conformance(run: WorkflowRun, wf: Workflow) -> list[Violation]:
    """Differences between what a run recorded and what the plan prescribes."""
    out: list[Violation] = []
    procs = {p.id: p for p in wf.processes}
    run_of: dict[IRI, ProcessRun] = {}
    position: dict[IRI, int] = {}
    if run.described_by != wf.id:
        out.append(Violation("FOREIGN_WORKFLOW", run.id.value, f"run is described by {run.described_by}, not {wf.id}"))
    for i, pr in enumerate(run.process_runs):
        proc = procs.get(pr.described_by)
        if proc is None:
            out.append(Violation("FOREIGN_PROCESS", pr.id.value, f"{pr.described_by} is not a process of {wf.id}"))
            continue
        if proc.id in run_of:
            out.append(Violation("DUPLICATE_PROCESS_RUN", pr.id.value, f"{proc.id} was run more than once"))
            continue
        run_of[proc.id] = pr
        position[proc.id] = i
        extra = sorted(set(pr.used) - {p.name for p in proc.inputs})
        for name in extra:
            out.append(Violation("UNKNOWN_INPUT", pr.id.value, f"{proc.label} has no input named {name!r}"))
        for p in proc.outputs:
            if p.name not in pr.generated:
                out.append(Violation("MISSING_OUTPUT", pr.id.value, f"{proc.label} did not generate {p.name!r}"))

    producers: dict[IRI, list[IRI]] = defaultdict(list)
    for pr in run.process_runs:
        for a in pr.generated.values():
            producers[a].append(pr.id)
    for a in sorted((a for a, ps in producers.items() if len(ps) > 1), key=str):
        out.append(Violation("MULTIPLE_PRODUCERS", a.value, f"{a} is generated by {len(producers[a])} process runs"))

    params = wf.parameters()
    for sink_id, source_id in sorted(feeds(wf).items(), key=lambda kv: kv[0].value):
        sink, source = params[sink_id], params[source_id]
        consumer = run_of.get(sink.owner)
        if consumer is None:
            continue
        if source.owner == wf.id:
            expected = run.inputs.get(source.name)
        else:
            producer = run_of.get(source.owner)
            if producer is None:
                continue
            expected = producer.generated.get(source.name)
            if position[source.owner] > position[sink.owner]:
                out.append(
                    Violation("ORDER_VIOLATION", consumer.id.value, f"{sink.owner} ran before its upstream {source.owner}")
                )
        if expected is None or consumer.used.get(sink.name) != expected:
            out.append(
                Violation(
                    "UNWITNESSED_LINK",
                    consumer.id.value,
                    f"no artifact links {source_id} to {sink_id} in this run",
                )
            )
    return out


def normalized(g: Graph, run_id: IRI) -> Graph:
    """Copy of a trace with the run IRI prefix replaced by a fixed one."""
    prefix = run_id.value.rstrip("/")

    def fix(t):
        if isinstance(t, IRI) and (t.value == prefix or t.value.startswith(prefix + "/")):
            return IRI("urn:run" + t.value[len(prefix) :])
        return t

    return Graph(((fix(s), p, fix(o)) for s, p, o in g), prefixes=g.prefixes)


__all__ = [
    "Artifact", "Engine", "EnactmentError", "MissingBindingError", "MissingStepError",
    "ProcessRun", "StepFailedError", "StepRegistry", "TickClock", "UnknownArtifactError", "WorkflowRun",
    "conformance", "emit_trace_graph", "enact", "lineage", "normalized", "parse_trace",
]
