from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from rokit.cli import CliConfig, dispatch
from rokit.rdf import DCT, IRI, ROKIT, Graph, Literal
from rokit.ro import create_research_object
from rokit.wfprov import TickClock

FIXTURES = Path(__file__).parent / "fixtures"
GWAS = FIXTURES / "gwas"
BASE = "http://example.org/ros/"
MARIA = "http://example.org/people/maria"
T0 = datetime(2012, 3, 1, 9, 0, tzinfo=timezone.utc)

# ref -> --type value used by the scripted session
GWAS_PAYLOADS = (
    ("data2.csv", "dataset"),
    ("workflow34.xml", "wfdesc:Workflow"),
    ("hypothesis.txt", None),
    ("provenance.rdf", "prov:Bundle"),
)


@dataclass(frozen=True)
class Ran:
    code: int
    stdout: str
    stderr: str


class Cli:
    """Runs subcommands in-process against one store root."""

    def __init__(self, root: Path, **kw):
        self.root = root
        self.config = CliConfig(root, kw.pop("base_iri", BASE), clock=kw.pop("clock", TickClock(T0)), **kw)

    def __call__(self, *argv) -> Ran:
        out = io.StringIO()
        status = dispatch([str(a) for a in argv], self.config, out)
        return Ran(status.code, out.getvalue(), status.stderr)

    def ok(self, *argv) -> str:
        status = self(*argv)
        assert status.code == 0, (argv, status.code, status.stderr)
        return status.stdout


def gwas_session(cli: Cli, name: str = "gwas-to-kegg") -> Path:
    """init, add x4, annotate the title and the hypothesis link."""
    cli.ok("init", name, "--creator", MARIA)
    for ref, kind in GWAS_PAYLOADS:
        cli.ok("add", name, GWAS / ref, *(("--type", kind) if kind else ()))
    cli.ok("annotate", name, "--body", GWAS / "title.ttl")
    cli.ok("annotate", name, "--target", "workflow34.xml", "--body", GWAS / "hypothesis-link.ttl")
    return cli.root / name


def gwas_ro(name: str = "gwas-to-kegg", base: str = BASE):
    """The same RO built directly through the model API."""
    from rokit.rdf import PROV, RO, WFDESC

    kinds = {"data2.csv": {RO.Dataset}, "workflow34.xml": {WFDESC.Workflow}, "provenance.rdf": {PROV.Bundle}}
    ro = create_research_object(base + name + "/", MARIA, T0)
    for ref, _ in GWAS_PAYLOADS:
        ro.aggregate(ref, kinds.get(ref, set()), (GWAS / ref).read_bytes())
    title = Graph()
    title.add((ro.id, DCT.title, Literal("GWAS to Kegg")))
    ro.annotate([ro.id], title, IRI(MARIA), T0 + timedelta(seconds=1))
    link = Graph()
    link.add((ro.resolve("workflow34.xml"), ROKIT.hasHypothesis, ro.resolve("hypothesis.txt")))
    ro.annotate(["workflow34.xml"], link, IRI(MARIA), T0 + timedelta(seconds=2))
    return ro


@pytest.fixture
def cli(tmp_path) -> Cli:
    return Cli(tmp_path / "store")


# criterion number -> (passed, seconds, title), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, float, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, secs, title = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n}. {title} ({secs:.2f}s)")


WF34_BASE = "http://example.org/ros/gwas-to-kegg/workflow34.xml"
RUN_481 = "http://example.org/ros/gwas-to-kegg/data/run-481/"
RUN_481_BINDINGS = {
    "input_file": b"chr1\t1000\nchr2\t2000\n",
    "set_width": b"500",
    # configuration parameters of G_P, not fed by any link
    "chrom_start": b"0",
    "chrom_end": b"100000",
}


def workflow34():
    from rokit.rdf import parse_turtle
    from rokit.wfdesc import parse_workflow

    return parse_workflow(parse_turtle((FIXTURES / "workflow34.wfdesc.ttl").read_text(), base=WF34_BASE))


def workflow34_steps(wf):
    from rokit.wfprov import StepRegistry

    def chr_pos(v):
        width = int(v["set_width"])
        rows = [line.split("\t") for line in v["input_file"].decode().splitlines()]
        return {"chr_pos": "\n".join(f"{c}:{int(p) - width}-{int(p) + width}" for c, p in rows).encode()}

    def gene_pathway(v):
        span = f"[{int(v['chrom_start'])},{int(v['chrom_end'])}]"
        return {"output_table": b"\n".join(line + b" " + span.encode() for line in v["chr_pos"].splitlines())}

    steps = {"input_chr_pos": chr_pos, "G_P": gene_pathway, "Flatten_List_3": lambda v: {"flat_list": v["in_list"].replace(b"\n", b";")}}
    registry = StepRegistry()
    for proc in wf.processes:
        registry.register(proc, steps[proc.label])
    return registry


def run_481(run_id: str = RUN_481):
    """Enact the fixture workflow with its inputs and configuration bound."""
    from rokit.wfprov import Engine, enact

    wf = workflow34()
    engine = Engine(IRI("http://example.org/engines/taverna"), "taverna")
    run, trace = enact(wf, RUN_481_BINDINGS, workflow34_steps(wf), engine, run_id, TickClock(T0))
    return wf, run, trace


TOKEN = "s3cret"
AUTH = {"Authorization": f"Bearer {TOKEN}"}
SERVICE_TYPES = {"data2.csv": "ro:Dataset", "workflow34.xml": "wfdesc:Workflow", "provenance.rdf": "prov:Bundle"}


def service_client(root: Path, clock=None):
    from fastapi.testclient import TestClient

    from rokit.service import create_app

    app = create_app(root, token=TOKEN, base="http://testserver/", clock=clock or TickClock(T0))
    return TestClient(app)


def gwas_over_http(c, name: str = "gwas-to-kegg") -> None:
    """create, 4 PUTs, the title annotation, snapshot."""
    assert c.post("/", headers={**AUTH, "Slug": name}, json={"creator": MARIA}).status_code == 201
    for ref, _ in GWAS_PAYLOADS:
        params = {"type": SERVICE_TYPES[ref]} if ref in SERVICE_TYPES else {}
        assert c.put(f"/ROs/{name}/{ref}", content=(GWAS / ref).read_bytes(), params=params, headers=AUTH).status_code == 201
    body = {"targets": ["."], "body": (GWAS / "title.ttl").read_text()}
    assert c.post(f"/ROs/{name}/", json=body, headers=AUTH).status_code == 201
    assert c.post(f"/evolution/{name}/snapshot", headers=AUTH).status_code == 201
