"""``ro``: manage Research Objects in a local directory tree.

Exit codes: 0 success, 64 usage error, 65 data or validation error, 66 I/O
error (including a held lock). ``evaluate`` exits 0/1/2 for fully satisfied,
minimally satisfied and nonconformant.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import shutil
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from pathlib import Path
from typing import Callable, Iterator

from rokit.checklist import ChecklistError, evaluate, parse_checklist, shipped_checklist
from rokit.evolution import (
    ChangeSpecification,
    EvolutionError,
    EvolutionStore,
    SnapshotBlockedError,
    archive,
    diff,
    history,
    snapshot,
)
from rokit.rdf import RO, IRI, TurtleSyntaxError, expand_curie, parse_turtle
from rokit.remote import PushError, push
from rokit.ro import layout
from rokit.ro.model import (
    MANIFEST_PATH,
    ResearchObject,
    ResearchObjectError,
    create_research_object,
    format_timestamp,
    manifest_json,
    validate,
)

TYPE_ALIASES = {"dataset": RO.Dataset, "paper": RO.Paper, "software": RO.Software}


class Exit(IntEnum):
    OK = 0
    USAGE = 64
    DATAERR = 65
    IOERR = 66


@dataclass(frozen=True)
class ExitStatus:
    code: int
    stderr: str = ""


@dataclass
class CliConfig:
    store_root: Path
    base_iri: str
    service_url: str | None = None
    token: str | None = None
    clock: Callable[[], datetime] = field(default=lambda: datetime.now(timezone.utc))
    http_client: Callable[[str, str | None], object] | None = None

    def __post_init__(self) -> None:
        self.store_root = Path(self.store_root)
        IRI(self.base_iri)
        if not self.base_iri.endswith("/"):
            self.base_iri += "/"

    @classmethod
    def from_env(cls, environ: dict | None = None) -> "CliConfig":
        env = os.environ if environ is None else environ
        root = Path(env.get("RO_STORE", ".")).resolve()
        return cls(
            store_root=root,
            base_iri=env.get("RO_BASE_IRI") or root.as_uri() + "/",
            service_url=env.get("RO_SERVICE_URL"),
            token=env.get("RO_TOKEN"),
        )

    def ro_id(self, name: str) -> IRI:
        return IRI(self.base_iri + name + "/")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CliError(Exit.USAGE, f"{self.prog}: {message}")

    def exit(self, status: int = 0, message: str | None = None):
        if message:
            raise CliError(Exit.USAGE if status else Exit.OK, message.strip())
        raise CliError(Exit.USAGE if status else Exit.OK, "")


def _parser() -> _Parser:
    p = _Parser(prog="ro", description="Create, annotate, evolve and check Research Objects.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("name", help="Research Object directory name under the store root")
        return s

    s = cmd("init", "create an empty Research Object")
    s.add_argument("--creator", required=True, help="IRI of the creating agent")
    s = cmd("add", "aggregate files or external IRIs")
    s.add_argument("paths", nargs="+")
    s.add_argument("--type", action="append", default=[], help="dataset, paper, software or any IRI/CURIE")
    s = cmd("annotate", "attach a Turtle body to targets")
    s.add_argument("--target", action="append", default=[], help="ref inside the RO ('.' is the RO itself)")
    s.add_argument("--body", required=True, type=Path, help="Turtle file; relative IRIs resolve against the RO")
    s.add_argument("--creator", help="annotation author IRI (default: the RO creator)")
    s = cmd("remove", "remove a resource or an annotation")
    s.add_argument("ref")
    s = cmd("status", "summary and validation of the live RO")
    s.add_argument("--json", action="store_true")
    cmd("list", "list aggregated resources")
    s = cmd("evaluate", "evaluate against a checklist")
    s.add_argument("--checklist", required=True, help="checklist JSON file or a shipped checklist name")
    s.add_argument("--json", action="store_true")
    for name, help in (("snapshot", "store an immutable snapshot"), ("archive", "store an immutable archive")):
        s = cmd(name, help)
        s.add_argument("--by", help="agent IRI (default: the RO creator)")
    s = cmd("diff", "changes between two versions ('live' names the working RO)")
    s.add_argument("old")
    s.add_argument("new")
    s.add_argument("--json", action="store_true")
    s = cmd("history", "list stored versions")
    s.add_argument("--json", action="store_true")
    s = cmd("bundle", "zip the live RO")
    s.add_argument("-o", "--output", required=True, type=Path)
    s = cmd("push", "upload the live RO to a service")
    s.add_argument("--url", help="service base URL")
    s.add_argument("--token")
    return p


# -- plumbing ---------------------------------------------------------------


@contextlib.contextmanager
def _locked(root: Path) -> Iterator[None]:
    lock = root / layout.LOCK_PATH
    lock.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(Exit.IOERR, f"{root} is locked by another ro process ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


class _Session:
    def __init__(self, args, config: CliConfig, out):
        self.args = args
        self.config = config
        self.out = out
        self.root = config.store_root / args.name
        self.ro_id = config.ro_id(args.name)

    def load(self) -> ResearchObject:
        if not (self.root / MANIFEST_PATH).is_file():
            raise CliError(Exit.DATAERR, f"no Research Object at {self.root} (run 'ro init' first)")
        try:
            return layout.read_research_object(self.root, self.ro_id)
        except (ResearchObjectError, TurtleSyntaxError) as exc:
            raise CliError(Exit.DATAERR, f"cannot load {self.root}: {exc}") from None

    def versions(self) -> EvolutionStore:
        store = EvolutionStore()
        layout.read_versions(self.root, self.ro_id, store)
        return store

    def save(self, ro: ResearchObject) -> None:
        problems = validate(ro)
        if problems:
            raise CliError(Exit.DATAERR, "refusing to write an invalid RO:\n" + _violations(problems))
        layout.write_research_object(self.root, ro)

    def print(self, text: str = "") -> None:
        self.out.write(text + "\n")

    def print_json(self, data) -> None:
        self.out.write(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _violations(vs) -> str:
    return "\n".join(f"  {v.code} {v.subject}: {v.message}" for v in vs)


def _kind(text: str) -> IRI:
    if text.lower() in TYPE_ALIASES:
        return TYPE_ALIASES[text.lower()]
    try:
        return expand_curie(text)
    except ValueError:
        raise CliError(Exit.USAGE, f"--type {text!r} is neither a known alias nor an absolute IRI") from None


def _is_iri(text: str) -> bool:
    head, sep, _ = text.partition(":")
    return bool(sep) and head.isalpha() and len(head) > 1 and "://" in text


# -- subcommands ------------------------------------------------------------


def _init(s: _Session) -> int:
    if (s.root / MANIFEST_PATH).exists():
        raise CliError(Exit.DATAERR, f"{s.root} already holds a Research Object")
    try:
        creator = IRI(s.args.creator)
    except ValueError as exc:
        raise CliError(Exit.USAGE, f"--creator: {exc}") from None
    created_root = not s.root.exists()
    s.root.mkdir(parents=True, exist_ok=True)
    try:
        with _locked(s.root):
            ro = create_research_object(s.ro_id, creator, s.config.clock())
            s.save(ro)
    except BaseException:
        if created_root:
            shutil.rmtree(s.root, ignore_errors=True)
        raise
    s.print(f"created {ro.id.value}")
    return Exit.OK


def _add(s: _Session) -> int:
    kinds = [_kind(t) for t in s.args.type]
    with _locked(s.root):
        ro = s.load()
        root = s.root.resolve()
        for item in s.args.paths:
            if _is_iri(item):
                ro.aggregate(IRI(item), kinds)
                s.print(f"aggregated external {item}")
                continue
            src = Path(item)
            if not src.is_absolute() and (s.root / src).is_file():
                src = s.root / src
            if not src.is_file():
                raise CliError(Exit.IOERR, f"no such file: {item}")
            src = src.resolve()
            try:
                rel = src.relative_to(root).as_posix()
            except ValueError:
                rel = src.name
            if layout.is_version_path(rel) or rel.startswith(".ro/"):
                raise CliError(Exit.DATAERR, f"{rel} lies in a reserved area of the RO")
            ro.aggregate(layout.ref_for_path(rel), kinds, src.read_bytes())
            s.print(f"aggregated {rel}")
        s.save(ro)
    return Exit.OK


def _annotate(s: _Session) -> int:
    try:
        text = s.args.body.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(Exit.IOERR, f"cannot read {s.args.body}: {exc}") from None
    with _locked(s.root):
        ro = s.load()
        try:
            body = parse_turtle(text, base=ro.id.value)
        except TurtleSyntaxError as exc:
            raise CliError(Exit.DATAERR, f"{s.args.body}: {exc}") from None
        creator = IRI(s.args.creator) if s.args.creator else ro.creator
        targets = s.args.target or ["."]
        ann = ro.annotate(targets, body, creator, s.config.clock())
        s.save(ro)
    s.print(f"annotation {ro.key(ann.id)} on {', '.join(sorted(ro.key(t) or '.' for t in ann.targets))}")
    return Exit.OK


def _remove(s: _Session) -> int:
    with _locked(s.root):
        ro = s.load()
        ref = s.args.ref
        if ro.annotation(ref) is not None:
            ro.remove_annotation(ref)
        else:
            ro.deaggregate(ref if _is_iri(ref) else layout.ref_for_path(ref))
        s.save(ro)
    s.print(f"removed {ref}")
    return Exit.OK


def _status(s: _Session) -> int:
    ro = s.load()
    problems = validate(ro)
    store = s.versions()
    recs = history(store, ro.id)
    if s.args.json:
        data = manifest_json(ro)
        data["violations"] = [v.to_json() for v in problems]
        data["versions"] = [r.to_json() for r in recs]
        s.print_json(data)
    else:
        s.print(f"{ro.id.value}")
        s.print(f"  resources:   {len(ro.payload_resources())}")
        s.print(f"  annotations: {len(ro.annotations)}")
        s.print(f"  versions:    {len(recs)}")
        s.print("  valid" if not problems else "  INVALID\n" + _violations(problems))
    return Exit.OK if not problems else Exit.DATAERR


def _list(s: _Session) -> int:
    ro = s.load()
    for r in sorted(ro.payload_resources(), key=lambda r: ro.key(r.ref)):
        kinds = sorted(k.value for k in r.kinds if k != RO.Resource)
        where = "internal" if ro.is_internal(r.ref) else "external"
        s.print(f"{ro.key(r.ref)}\t{where}\t{' '.join(kinds)}")
    for a in sorted(ro.annotations, key=lambda a: a.id.value):
        s.print(f"{ro.key(a.id)}\tannotation\t{' '.join(sorted(ro.key(t) or '.' for t in a.targets))}")
    return Exit.OK


def _evaluate(s: _Session) -> int:
    spec = s.args.checklist
    try:
        if Path(spec).is_file():
            cl = parse_checklist(Path(spec).read_bytes())
        else:
            cl = shipped_checklist(spec)
    except ChecklistError as exc:
        raise CliError(Exit.DATAERR, f"checklist {spec}: {exc}") from None
    except (OSError, ModuleNotFoundError):
        raise CliError(Exit.IOERR, f"no checklist file or shipped checklist named {spec!r}") from None
    report = evaluate(s.load(), cl)
    if s.args.json:
        s.print_json(report.to_json())
    else:
        s.out.write(report.to_text())
    return report.verdict.exit_code


def _version(s: _Session, action) -> int:
    with _locked(s.root):
        ro = s.load()
        store = s.versions()
        agent = IRI(s.args.by) if s.args.by else ro.creator
        try:
            rec = action(ro, store, agent, s.config.clock())
        except SnapshotBlockedError as exc:
            raise CliError(Exit.DATAERR, "cannot version an invalid RO:\n" + _violations(exc.violations)) from None
        layout.write_version(s.root, store, rec.version_id)
    changes = len(rec.change_spec) if rec.change_spec else 0
    s.print(f"{rec.kind.value} {ro.key(rec.version_id)} ({changes} changes)")
    return Exit.OK


def _pick(s: _Session, store: EvolutionStore, label: str) -> ResearchObject:
    if label == "live":
        return s.load()
    vid = IRI(s.ro_id.value + label.strip("/") + "/")
    try:
        return store.get(vid)[0]
    except EvolutionError:
        raise CliError(Exit.DATAERR, f"no stored version {label!r}") from None


def _diff(s: _Session) -> int:
    store = s.versions()
    old, new = _pick(s, store, s.args.old), _pick(s, store, s.args.new)
    spec: ChangeSpecification = diff(old, new)
    if s.args.json:
        s.print_json(spec.to_json())
    elif not spec.changes:
        s.print("no changes")
    else:
        for c in spec.changes:
            s.print(f"{c.kind.value:<13} {c.ref}")
    return Exit.OK


def _history(s: _Session) -> int:
    store = s.versions()
    recs = history(store, s.ro_id)
    if s.args.json:
        s.print_json([r.to_json() for r in recs])
        return Exit.OK
    for r in recs:
        changes = len(r.change_spec) if r.change_spec else 0
        prev = r.derived_from.value[len(s.ro_id.value) :] if r.derived_from else "-"
        s.print(f"{r.version_id.value[len(s.ro_id.value):]}\t{r.kind.value}\t{format_timestamp(r.at)}\tfrom {prev}\t{changes} changes")
    return Exit.OK


def _bundle(s: _Session) -> int:
    ro = s.load()
    target = layout.bundle(s.root, ro, s.args.output)
    s.print(f"wrote {target}")
    return Exit.OK


def _push(s: _Session) -> int:
    url = s.args.url or s.config.service_url
    if not url:
        raise CliError(Exit.USAGE, "push needs --url or RO_SERVICE_URL")
    token = s.args.token or s.config.token
    ro = s.load()
    try:
        location = push(ro, s.args.name, url, token, s.config.http_client)
    except PushError as exc:
        raise CliError(exc.exit_code, str(exc)) from None
    s.print(f"pushed to {location}")
    return Exit.OK


_COMMANDS = {
    "init": _init,
    "add": _add,
    "annotate": _annotate,
    "remove": _remove,
    "status": _status,
    "list": _list,
    "evaluate": _evaluate,
    "snapshot": lambda s: _version(s, snapshot),
    "archive": lambda s: _version(s, archive),
    "diff": _diff,
    "history": _history,
    "bundle": _bundle,
    "push": _push,
}


def dispatch(argv: list[str], config: CliConfig, out=None) -> ExitStatus:
    """Run one subcommand. Output goes to ``out`` (default stdout)."""
    out = sys.stdout if out is None else out
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise CliError(Exit.USAGE, "ro: a subcommand is required (see ro --help)")
        if not layout.VALID_NAME.match(args.name):
            raise CliError(Exit.USAGE, f"bad Research Object name {args.name!r}")
        code = _COMMANDS[args.command](_Session(args, config, out))
        return ExitStatus(int(code))
    except CliError as exc:
        return ExitStatus(int(exc.code), str(exc))
    except ResearchObjectError as exc:
        return ExitStatus(Exit.DATAERR, str(exc))
    except OSError as exc:
        return ExitStatus(Exit.IOERR, str(exc))


def main(argv: list[str] | None = None) -> int:
    status = dispatch(sys.argv[1:] if argv is None else argv, CliConfig.from_env())
    if status.stderr:
        print(status.stderr, file=sys.stderr)
    return status.code


if __name__ == "__main__":
    sys.exit(main())
