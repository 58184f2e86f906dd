"""HTTP service for storing, evolving and querying Research Objects.

Routes::

    POST   /  or  /ROs/                  create (Slug header, JSON {creator, created})
    GET    /ROs/                         names of live ROs (JSON)
    GET    /ROs/<name>/                  manifest, negotiated: text/turtle | application/json
    POST   /ROs/<name>/                  JSON annotation {targets, body, creator?, created?, id?}
                                         or external resource {aggregate, types?}
    PUT    /ROs/<name>/<path>?type=..    store a payload (201 new, 200 overwrite)
    GET    /ROs/<name>/<path>            payload, annotation body or manifest file
    DELETE /ROs/<name>/<path>            remove a resource or an annotation
    GET    /ROs/<name>/vNNN/[<path>]     stored version (read-only; writes give 405)
    POST   /evolution/<name>/snapshot    new snapshot  (also /archive)
    GET    /evolution/<name>             evolution graph of all versions (Turtle)
    GET    /notifications?ro=&since=     Atom feed, newest first
    GET    /query?s=&p=&o=               one triple pattern over every stored graph

State lives in ``<root>/journal.log`` (one JSON event per line, carrying the
data needed to redo it) and ``<root>/blobs/<sha256>``. On startup the journal
is replayed and ``<root>/ROs/<name>/`` is rewritten to match; a torn final
line left by a crash is dropped.
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import os
import re
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from rokit.evolution import (
    EvolutionStore,
    SnapshotBlockedError,
    archive,
    emit_evolution_graph,
    evolution_graph,
    history,
    snapshot,
)
from rokit.rdf import (
    IRI,
    MEDIA_TYPE,
    PROV,
    STANDARD_PREFIXES,
    BNode,
    Graph,
    Literal,
    TurtleSyntaxError,
    expand_curie,
    match_pattern,
    parse_turtle,
    serialize_turtle,
)
from rokit.ro import layout
from rokit.ro.model import (
    ANNOTATION_AREA,
    MANIFEST_PATH,
    ResearchObject,
    ResearchObjectError,
    UnknownResourceError,
    build_manifest,
    create_research_object,
    format_timestamp,
    manifest_json,
    parse_timestamp,
    serialize_manifest,
    validate,
)

JOURNAL = "journal.log"
NAME = re.compile(r"^[a-z0-9-]+$")
ATOM = "application/atom+xml"
DEFAULT_BASE = "http://localhost:8000/"
ANONYMOUS = "urn:rokit:agent:anonymous"


class ServiceError(Exception):
    def __init__(self, status: int, message: str, extra: dict | None = None):
        super().__init__(message)
        self.status = status
        self.extra = extra or {}


@dataclass(frozen=True)
class Event:
    seq: int
    at: datetime
    ro: IRI
    kind: str
    detail: str

    def to_json(self) -> dict:
        return {"seq": self.seq, "at": format_timestamp(self.at), "ro": self.ro.value, "kind": self.kind, "detail": self.detail}


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class ServiceState:
    """Live ROs, stored versions and the event journal behind the HTTP routes."""

    def __init__(self, root: Path, base: str = DEFAULT_BASE, clock: Callable[[], datetime] = _utcnow):
        self.root = Path(root)
        self.base = base if base.endswith("/") else base + "/"
        self.clock = clock
        self.live: dict[str, ResearchObject] = {}
        self.store = EvolutionStore()
        self.events: list[Event] = []
        self._journal_lock = threading.Lock()
        self._create_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._graphs: dict[str, list[tuple[IRI, Graph]]] = {}
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        self._replay()

    # -- identity ------------------------------------------------------------

    def ro_id(self, name: str) -> IRI:
        return IRI(f"{self.base}ROs/{name}/")

    def name_of(self, ro: str) -> str | None:
        if ro in self.live:
            return ro
        for name, live in self.live.items():
            if live.id.value == ro:
                return name
        return None

    def lock(self, name: str) -> threading.Lock:
        with self._create_lock:
            return self._locks.setdefault(name, threading.Lock())

    def get_live(self, name: str) -> ResearchObject:
        ro = self.live.get(name)
        if ro is None:
            raise ServiceError(404, f"no Research Object named {name!r}")
        return ro

    @property
    def seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    # -- persistence ---------------------------------------------------------

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / digest
        if not path.exists():
            layout.atomic_write(path, data)
        return digest

    def blob(self, digest: str) -> bytes:
        return (self.root / "blobs" / digest).read_bytes()

    def _journal(self, name: str, kind: str, detail: str, op: dict, at: datetime) -> Event:
        with self._journal_lock:
            event = Event(self.seq + 1, at, self.ro_id(name), kind, detail)
            line = json.dumps({**event.to_json(), "name": name, "op": op}, sort_keys=True) + "\n"
            with open(self.root / JOURNAL, "ab") as fh:
                fh.write(line.encode("utf-8"))
                fh.flush()
                os.fsync(fh.fileno())
            self.events.append(event)
            return event

    def _replay(self) -> None:
        path = self.root / JOURNAL
        if not path.exists():
            return
        data = path.read_bytes()
        good = 0
        for raw in data.splitlines(keepends=True):
            if not raw.endswith(b"\n"):
                break
            try:
                entry = json.loads(raw)
            except ValueError:
                break
            self._apply(entry["name"], entry["op"])
            self.events.append(
                Event(entry["seq"], parse_timestamp(entry["at"]), IRI(entry["ro"]), entry["kind"], entry["detail"])
            )
            good += len(raw)
        if good != len(data):
            with open(path, "r+b") as fh:
                fh.truncate(good)
        for name in sorted(self.live):
            self._mirror(name, versions=True)

    def _mirror(self, name: str, versions: bool = False) -> None:
        ro = self.live[name]
        root = self.root / "ROs" / name
        layout.write_research_object(root, ro)
        if versions:
            for rec in history(self.store, ro.id):
                layout.write_version(root, self.store, rec.version_id)

    # -- operations (each one: validate, apply, journal, mirror) -------------

    def _apply(self, name: str, op: dict, target: ResearchObject | None = None):
        """Apply one journaled operation to ``target`` (default: the live RO)."""
        action = op["action"]
        if action == "create":
            self.live[name] = create_research_object(self.ro_id(name), op["creator"], parse_timestamp(op["created"]))
            return None
        ro = self.live[name] if target is None else target
        self._graphs.pop(name, None)
        if action == "put":
            kinds = [IRI(k) for k in op["kinds"]] if op.get("kinds") is not None else None
            content = self.blob(op["blob"])
            if ro.get(op["ref"]) is None:
                return ro.aggregate(op["ref"], kinds or (), content)
            return ro.update_content(op["ref"], content, kinds)
        if action == "external":
            return ro.aggregate(IRI(op["ref"]), [IRI(k) for k in op["kinds"]])
        if action == "delete":
            if ro.annotation(op["ref"]) is not None:
                return ro.remove_annotation(op["ref"])
            return ro.deaggregate(op["ref"])
        if action == "annotate":
            body = parse_turtle(self.blob(op["blob"]).decode("utf-8"), base=ro.id.value)
            return ro.annotate(
                op["targets"], body, IRI(op["creator"]), parse_timestamp(op["created"]), op.get("id"), strict=False
            )
        if action in ("snapshot", "archive"):
            fn = snapshot if action == "snapshot" else archive
            return fn(ro, self.store, IRI(op["by"]), parse_timestamp(op["at"]))
        raise ValueError(f"unknown journal action {action!r}")

    def perform(self, name: str, kind: str, detail: str, op: dict):
        """Check ``op`` (on a scratch copy where needed), then apply, journal and mirror it."""
        at = self.clock()
        action = op["action"]
        if action in ("snapshot", "archive"):
            problems = validate(self.live[name])
            if problems:
                raise SnapshotBlockedError(problems)
        elif action != "create":
            self._apply(name, op, target=self.live[name].copy())
        result = self._apply(name, op)
        self._journal(name, kind, detail, op, at)
        self._mirror(name, versions=action in ("snapshot", "archive"))
        return result

    def create(self, name: str, creator: str, created: str | None) -> ResearchObject:
        if not NAME.match(name or ""):
            raise ServiceError(400, f"bad Research Object name {name!r}; use [a-z0-9-]+")
        with self._create_lock:
            if name in self.live:
                raise ServiceError(409, f"Research Object {name!r} already exists")
            created = created or format_timestamp(self.clock())
            IRI(creator)
            parse_timestamp(created)
            self.perform(name, "created", name, {"action": "create", "creator": creator, "created": created})
        return self.live[name]

    # -- graphs for querying -------------------------------------------------

    def graphs(self) -> list[tuple[IRI, Graph]]:
        out: list[tuple[IRI, Graph]] = []
        for name in sorted(self.live):
            cached = self._graphs.get(name)
            if cached is None:
                cached = self._graphs[name] = self._collect(name)
            out.extend(cached)
        return out

    def _collect(self, name: str) -> list[tuple[IRI, Graph]]:
        live = self.live[name]
        ros = [live] + [self.store.get(r.version_id)[0] for r in history(self.store, live.id)]
        out = []
        for ro in ros:
            out.append((ro.manifest_iri, build_manifest(ro)))
            for ann in ro.annotations:
                try:
                    out.append((ann.body_ref, ro.annotation_body(ann)))
                except (UnknownResourceError, TurtleSyntaxError, UnicodeDecodeError):
                    pass
            for r in ro.payload_resources():
                if r.content is None or not (PROV.Bundle in r.kinds or r.ref.value.endswith(".ttl")):
                    continue
                try:
                    out.append((r.ref, parse_turtle(r.content.decode("utf-8"), base=r.ref.value)))
                except (TurtleSyntaxError, UnicodeDecodeError, ValueError):
                    pass
            if ro is not live:
                out.append((IRI(ro.id.value + layout.EVOLUTION_PATH), emit_evolution_graph(self.store, ro.id)))
        return out


# -- HTTP helpers ---------------------------------------------------------------


def _accept(request: Request, offered: list[str]) -> str | None:
    header = request.headers.get("accept", "*/*") or "*/*"
    ranges = []
    for i, part in enumerate(header.split(",")):
        bits = [b.strip() for b in part.split(";")]
        q = 1.0
        for b in bits[1:]:
            if b.startswith("q="):
                try:
                    q = float(b[2:])
                except ValueError:
                    q = 0.0
        ranges.append((bits[0].lower(), q, i))
    best, best_key = None, None
    for mt in offered:
        major = mt.split("/")[0]
        for rng, q, i in ranges:
            if q <= 0:
                continue
            if rng in (mt, f"{major}/*", "*/*"):
                specificity = 2 if rng == mt else (1 if rng.endswith("/*") and rng != "*/*" else 0)
                key = (q, specificity, -offered.index(mt))
                if best_key is None or key > best_key:
                    best, best_key = mt, key
    return best


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse({"error": message, **extra}, status_code=status)


def _term(text: str | None):
    if text is None or text in ("", "*", "?"):
        return None
    if text.startswith('"'):
        m = re.match(r'^"(.*)"(?:@([A-Za-z0-9-]+)|\^\^(.+))?$', text, re.S)
        if m is None:
            raise ValueError(f"malformed literal {text!r}")
        dt = _term(m.group(3)) if m.group(3) else None
        return Literal(m.group(1), datatype=dt, language=m.group(2))
    if text.startswith("_:"):
        raise ValueError("blank nodes cannot be queried")
    prefix, sep, local = text.partition(":")
    if not (text.startswith("<") or (sep and (prefix in STANDARD_PREFIXES or local.startswith("//")))):
        raise ValueError(f"{text!r} is neither a CURIE nor an absolute IRI")
    return expand_curie(text)


def _nt(term) -> str:
    if isinstance(term, IRI):
        return f"<{term.value}>"
    if isinstance(term, BNode):
        return f"_:{term.label}"
    text = json.dumps(term.lexical, ensure_ascii=False)
    if term.language:
        return f"{text}@{term.language}"
    if term.datatype:
        return f"{text}^^<{term.datatype.value}>"
    return text


def _atom(events: list[Event], base: str) -> bytes:
    ns = "http://www.w3.org/2005/Atom"
    ET.register_namespace("", ns)
    feed = ET.Element(f"{{{ns}}}feed")
    ET.SubElement(feed, f"{{{ns}}}id").text = "urn:rokit:notifications"
    ET.SubElement(feed, f"{{{ns}}}title").text = "Research Object notifications"
    updated = format_timestamp(events[0].at) if events else "1970-01-01T00:00:00Z"
    ET.SubElement(feed, f"{{{ns}}}updated").text = updated
    ET.SubElement(feed, f"{{{ns}}}link", rel="self", href=base + "notifications")
    for e in events:
        entry = ET.SubElement(feed, f"{{{ns}}}entry")
        ET.SubElement(entry, f"{{{ns}}}id").text = f"urn:event:{e.seq}"
        ET.SubElement(entry, f"{{{ns}}}updated").text = format_timestamp(e.at)
        ET.SubElement(entry, f"{{{ns}}}title").text = e.kind
        ET.SubElement(entry, f"{{{ns}}}link", rel="related", href=e.ro.value)
        ET.SubElement(entry, f"{{{ns}}}content", type="text").text = e.detail
    return ET.tostring(feed, encoding="utf-8", xml_declaration=True)


def _version_path(path: str) -> bool:
    return layout.is_version_path(path)


# -- application ---------------------------------------------------------------


def create_app(
    root: Path | str | None = None,
    token: str | None = None,
    base: str | None = None,
    clock: Callable[[], datetime] = _utcnow,
) -> FastAPI:
    root = Path(root or os.environ.get("RO_SERVICE_ROOT", "ro-service"))
    token = token if token is not None else os.environ.get("RO_SERVICE_TOKEN")
    state = ServiceState(root, base or os.environ.get("RO_SERVICE_BASE", DEFAULT_BASE), clock)
    app = FastAPI(title="Research Object service")
    app.state.ro = state

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return _error(exc.status, str(exc), **exc.extra)

    @app.exception_handler(ResearchObjectError)
    async def _ro_error(request: Request, exc: ResearchObjectError):
        status = 404 if isinstance(exc, UnknownResourceError) else 409 if "already" in str(exc) else 400
        return _error(status, str(exc))

    def authorize(request: Request) -> None:
        if token is None:
            return
        if request.headers.get("authorization", "") != f"Bearer {token}":
            raise ServiceError(401, "missing or wrong bearer token")

    async def json_body(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            data = json.loads(raw)
        except ValueError:
            raise ServiceError(400, "request body is not JSON") from None
        if not isinstance(data, dict):
            raise ServiceError(400, "request body must be a JSON object")
        return data

    def manifest_response(request: Request, ro: ResearchObject) -> Response:
        chosen = _accept(request, [MEDIA_TYPE, "application/json"])
        if chosen is None:
            raise ServiceError(406, "available representations: text/turtle, application/json")
        if chosen == "application/json":
            return JSONResponse(manifest_json(ro), headers={"Vary": "Accept"})
        # relative to the request URL, which is the RO root
        text = serialize_turtle(build_manifest(ro), base=ro.id.value, scope=ro.id.value)
        return Response(text, media_type=MEDIA_TYPE, headers={"Vary": "Accept"})

    # -- create --------------------------------------------------------------

    async def create(request: Request):
        authorize(request)
        data = await json_body(request)
        name = request.headers.get("slug", "")
        try:
            ro = state.create(name, data.get("creator") or ANONYMOUS, data.get("created"))
        except ValueError as exc:
            raise ServiceError(400, str(exc)) from None
        return Response(status_code=201, headers={"Location": f"/ROs/{name}/", "Content-Location": ro.id.value})

    app.add_api_route("/", create, methods=["POST"])
    app.add_api_route("/ROs/", create, methods=["POST"])

    @app.get("/ROs/")
    def list_ros():
        return {"ros": [{"name": n, "id": state.live[n].id.value} for n in sorted(state.live)]}

    # -- manifests, versions and resources -------------------------------------

    @app.get("/ROs/{name}/")
    def get_manifest(name: str, request: Request):
        return manifest_response(request, state.get_live(name))

    @app.post("/ROs/{name}/")
    async def post_to_ro(name: str, request: Request):
        authorize(request)
        data = await json_body(request)
        with state.lock(name):
            ro = state.get_live(name)
            if "aggregate" in data:
                try:
                    ref = IRI(data["aggregate"])
                    kinds = sorted({expand_curie(t).value for t in data.get("types", [])})
                except ValueError as exc:
                    raise ServiceError(400, str(exc)) from None
                if ro.is_internal(ref):
                    raise ServiceError(400, "internal resources are stored with PUT")
                state.perform(name, "resource-added", ref.value, {"action": "external", "ref": ref.value, "kinds": kinds})
                return Response(status_code=201, headers={"Location": ref.value})
            targets = data.get("targets")
            body = data.get("body")
            if not isinstance(targets, list) or not targets or not isinstance(body, str):
                raise ServiceError(400, "an annotation needs a non-empty 'targets' list and a Turtle 'body'")
            try:
                parse_turtle(body, base=ro.id.value)
                creator = IRI(data.get("creator") or ro.creator.value).value
                created = data.get("created") or format_timestamp(state.clock())
                parse_timestamp(created)
            except (TurtleSyntaxError, ValueError) as exc:
                raise ServiceError(400, str(exc)) from None
            op = {
                "action": "annotate",
                "targets": [str(t) for t in targets],
                "blob": state.put_blob(body.encode("utf-8")),
                "creator": creator,
                "created": created,
            }
            op["id"] = str(data.get("id") or f"{ANNOTATION_AREA}{ro.next_annotation_number():03d}")
            ann = state.perform(name, "annotated", op["id"], op)
        return Response(status_code=201, headers={"Location": f"/ROs/{name}/{ro.key(ann.id)}"})

    @app.get("/ROs/{name}/{path:path}")
    def get_resource(name: str, path: str, request: Request):
        live = state.get_live(name)
        ro = live
        rel = path
        if _version_path(path):
            head, _, rel = path.partition("/")
            vid = IRI(live.id.value + head + "/")
            if vid not in state.store:
                raise ServiceError(404, f"no version {head} of {name}")
            ro = state.store.get(vid)[0]
            if rel == "":
                return manifest_response(request, ro)
        if rel == MANIFEST_PATH:
            return Response(serialize_manifest(ro), media_type=MEDIA_TYPE)
        if ro is not live and rel == layout.EVOLUTION_PATH:
            return Response(serialize_turtle(emit_evolution_graph(state.store, ro.id)), media_type=MEDIA_TYPE)
        res = ro.get(rel)
        if res is None:
            raise ServiceError(404, f"{rel} is not aggregated in {ro.id.value}")
        if res.content is None:
            return Response(status_code=303, headers={"Location": res.ref.value})
        media = MEDIA_TYPE if rel.endswith(".ttl") else mimetypes.guess_type(rel)[0] or "application/octet-stream"
        return Response(res.content, media_type=media)

    @app.put("/ROs/{name}/{path:path}")
    async def put_resource(name: str, path: str, request: Request):
        authorize(request)
        if _version_path(path):
            raise ServiceError(405, "stored versions can no longer be changed")
        content = await request.body()
        try:
            types = request.query_params.getlist("type")
            kinds = sorted({expand_curie(t).value for t in types}) if types else None
            layout.path_for_ref(path)
        except ValueError as exc:
            raise ServiceError(400, str(exc)) from None
        with state.lock(name):
            ro = state.get_live(name)
            existing = ro.get(path)
            if existing is not None and ro.annotation(path) is None and existing.ref in ro.body_refs():
                raise ServiceError(405, "annotation bodies change only through their annotation")
            op = {"action": "put", "ref": path, "kinds": kinds, "blob": state.put_blob(content)}
            state.perform(name, "resource-added", path if existing is None else f"{path} (updated)", op)
        return Response(status_code=200 if existing is not None else 201, headers={"Location": f"/ROs/{name}/{path}"})

    @app.delete("/ROs/{name}/{path:path}")
    def delete_resource(name: str, path: str, request: Request):
        authorize(request)
        if _version_path(path):
            raise ServiceError(405, "stored versions can no longer be changed")
        with state.lock(name):
            ro = state.get_live(name)
            if ro.annotation(path) is None and ro.get(path) is None:
                raise ServiceError(404, f"{path} is not part of {name}")
            state.perform(name, "resource-removed", path, {"action": "delete", "ref": path})
        return Response(status_code=204)

    @app.post("/ROs/{name}/{path:path}")
    def post_elsewhere(name: str, path: str, request: Request):
        authorize(request)
        state.get_live(name)
        if _version_path(path):
            raise ServiceError(405, "stored versions can no longer be changed")
        raise ServiceError(405, "POST is accepted on the RO itself only")

    # -- evolution -------------------------------------------------------------

    @app.post("/evolution/{name}/{target}")
    async def evolve(name: str, target: str, request: Request):
        authorize(request)
        if target not in ("snapshot", "archive"):
            raise ServiceError(404, f"unknown evolution target {target!r}")
        data = await json_body(request)
        with state.lock(name):
            ro = state.get_live(name)
            by = data.get("by") or ro.creator.value
            op = {"action": target, "by": by, "at": format_timestamp(state.clock())}
            try:
                rec = state.perform(name, "snapshotted" if target == "snapshot" else "archived", "", op)
            except SnapshotBlockedError as exc:
                raise ServiceError(
                    409, "the live RO does not validate", {"violations": [v.to_json() for v in exc.violations]}
                ) from None
        label = ro.key(rec.version_id)
        return Response(status_code=201, headers={"Location": f"/ROs/{name}/{label}"})

    @app.get("/evolution/{name}")
    def get_evolution(name: str):
        ro = state.get_live(name)
        return Response(serialize_turtle(evolution_graph(state.store, ro.id)), media_type=MEDIA_TYPE)

    # -- notifications and query -----------------------------------------------

    @app.get("/notifications")
    def notifications(request: Request, ro: str | None = None, since: int | None = None):
        events = list(state.events)
        if ro is not None:
            name = state.name_of(ro)
            events = [e for e in events if name is not None and e.ro == state.ro_id(name)]
        if since is not None:
            events = [e for e in events if e.seq > since]
        events.reverse()
        return Response(_atom(events, str(request.base_url)), media_type=ATOM)

    @app.get("/query")
    def query(request: Request, s: str | None = None, p: str | None = None, o: str | None = None):
        try:
            pattern = [_term(s), _term(p), _term(o)]
        except ValueError as exc:
            raise ServiceError(400, str(exc)) from None
        if isinstance(pattern[0], Literal) or (pattern[1] is not None and not isinstance(pattern[1], IRI)):
            raise ServiceError(400, "literals may appear only in the object position")
        rows = []
        for tag, g in state.graphs():
            for t in match_pattern(g, *pattern):
                rows.append((tag, t))
        chosen = _accept(request, ["application/json", MEDIA_TYPE])
        if chosen is None:
            raise ServiceError(406, "available representations: application/json, text/turtle")
        if chosen == MEDIA_TYPE:
            out = Graph(prefixes={k: STANDARD_PREFIXES[k] for k in ("rdf", "ro", "ore", "ao", "dct", "prov")})
            out.update(t for _, t in rows)
            return Response(serialize_turtle(out), media_type=MEDIA_TYPE)
        return {
            "count": len(rows),
            "rows": [{"s": _nt(t.subject), "p": _nt(t.predicate), "o": _nt(t.object), "graph": tag.value} for tag, t in rows],
        }

    return app


def main() -> None:
    import uvicorn

    uvicorn.run(create_app(), host=os.environ.get("RO_SERVICE_HOST", "127.0.0.1"), port=int(os.environ.get("RO_SERVICE_PORT", "8000")))
