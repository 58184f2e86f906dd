"""Research Object lifecycle: snapshots, archives, change specifications."""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterator

from rokit.rdf import (
    IRI,
    PROV,
    RDF_TYPE,
    RO,
    ROEVO,
    STANDARD_PREFIXES,
    Graph,
    graph_isomorphic,
    merge,
)
from rokit.rdf.iri import resolve
from rokit.ro.model import (
    AggregatedResource,
    Annotation,
    ResearchObject,
    ResearchObjectError,
    Violation,
    format_timestamp,
    parse_timestamp,
    timestamp_literal,
    utc_seconds,
    validate,
)


class VersionKind(enum.Enum):
    LIVE = "live"
    SNAPSHOT = "snapshot"
    ARCHIVED = "archived"

    @property
    def rdf_class(self) -> IRI:
        return {"live": ROEVO.LiveRO, "snapshot": ROEVO.SnapshotRO, "archived": ROEVO.ArchivedRO}[self.value]


class ChangeKind(enum.Enum):
    ADDITION = "addition"
    MODIFICATION = "modification"
    REMOVAL = "removal"

    @property
    def rdf_class(self) -> IRI:
        return {"addition": ROEVO.Addition, "modification": ROEVO.Modification, "removal": ROEVO.Removal}[
            self.value
        ]


class EvolutionError(ResearchObjectError):
    pass


class SnapshotBlockedError(EvolutionError):
    def __init__(self, violations: list[Violation]):
        codes = ", ".join(sorted({v.code for v in violations}))
        super().__init__(f"Research Object does not validate: {codes}")
        self.violations = violations


class DigestMismatchError(EvolutionError):
    pass


class UnknownVersionError(EvolutionError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class Change:
    """One unit change. ``ref`` is the resource path relative to the RO root
    (or the absolute IRI of an external resource)."""

    kind: ChangeKind
    ref: str
    before_digest: str | None = None
    after_digest: str | None = None
    kinds: frozenset[IRI] | None = None

    def __post_init__(self) -> None:
        if self.kind is ChangeKind.ADDITION and (self.before_digest or not self.after_digest):
            raise ValueError("an addition carries only an after digest")
        if self.kind is ChangeKind.REMOVAL and (self.after_digest or not self.before_digest):
            raise ValueError("a removal carries only a before digest")
        if self.kind is ChangeKind.MODIFICATION and (
            not self.before_digest or not self.after_digest or self.before_digest == self.after_digest
        ):
            raise ValueError("a modification carries two different digests")

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "ref": self.ref}
        if self.before_digest:
            out["before"] = self.before_digest
        if self.after_digest:
            out["after"] = self.after_digest
        if self.kinds is not None:
            out["kinds"] = sorted(k.value for k in self.kinds)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Change":
        kinds = data.get("kinds")
        return cls(
            ChangeKind(data["kind"]),
            data["ref"],
            data.get("before"),
            data.get("after"),
            None if kinds is None else frozenset(IRI(k) for k in kinds),
        )


@dataclass(frozen=True)
class ChangeSpecification:
    id: IRI
    changes: tuple[Change, ...] = ()

    def __post_init__(self) -> None:
        refs = [c.ref for c in self.changes]
        if len(refs) != len(set(refs)):
            raise ValueError("at most one change per resource")

    def __len__(self) -> int:
        return len(self.changes)

    def count(self, kind: ChangeKind) -> int:
        return sum(1 for c in self.changes if c.kind is kind)

    def to_json(self) -> dict:
        return {"id": self.id.value, "changes": [c.to_json() for c in self.changes]}

    @classmethod
    def from_json(cls, data: dict) -> "ChangeSpecification":
        return cls(IRI(data["id"]), tuple(Change.from_json(c) for c in data["changes"]))


@dataclass(frozen=True)
class VersionRecord:
    version_id: IRI
    kind: VersionKind
    of_live: IRI
    at: datetime
    by: IRI
    derived_from: IRI | None = None
    change_spec: ChangeSpecification | None = None

    def __post_init__(self) -> None:
        if (self.derived_from is None) != (self.change_spec is None):
            raise ValueError("a change specification is present exactly when the version is derived")

    def to_json(self) -> dict:
        return {
            "version": self.version_id.value,
            "kind": self.kind.value,
            "of": self.of_live.value,
            "at": format_timestamp(self.at),
            "by": self.by.value,
            "derived_from": self.derived_from.value if self.derived_from else None,
            "change_spec": self.change_spec.to_json() if self.change_spec is not None else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "VersionRecord":
        return cls(
            IRI(data["version"]),
            VersionKind(data["kind"]),
            IRI(data["of"]),
            parse_timestamp(data["at"]),
            IRI(data["by"]),
            IRI(data["derived_from"]) if data.get("derived_from") else None,
            ChangeSpecification.from_json(data["change_spec"]) if data.get("change_spec") is not None else None,
        )


# -- digests and change payloads -------------------------------------------


def resource_digest(kinds: frozenset[IRI], content: bytes | None) -> str:
    h = hashlib.sha256()
    h.update("\n".join(sorted(k.value for k in kinds)).encode("utf-8"))
    h.update(b"\0")
    h.update(b"external" if content is None else b"content:" + content)
    return h.hexdigest()


def annotation_record(ro: ResearchObject, ann: Annotation) -> bytes:
    """Canonical, location-independent bytes describing one annotation."""
    body = ro.get(ann.body_ref)
    record = {
        "targets": sorted(ro.key(t) for t in ann.targets),
        "created_by": ann.created_by.value,
        "created_at": format_timestamp(ann.created_at),
        "body": body.content.decode("utf-8") if body is not None and body.content is not None else None,
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def change_payload(ro: ResearchObject) -> Callable[[str], bytes | None]:
    """Resolver for the after-state bytes that ``apply_changes`` needs."""
    anns = {ro.key(a.id): a for a in ro.annotations}

    def lookup(ref: str) -> bytes | None:
        if ref in anns:
            return annotation_record(ro, anns[ref])
        res = ro.get(ref)
        return None if res is None else res.content

    return lookup


def _resource_table(ro: ResearchObject) -> dict[str, AggregatedResource]:
    return {ro.key(r.ref): r for r in ro.payload_resources()}


def _annotation_table(ro: ResearchObject) -> dict[str, Annotation]:
    return {ro.key(a.id): a for a in ro.annotations}


def _same_annotation(old: ResearchObject, a: Annotation, new: ResearchObject, b: Annotation) -> bool:
    if {old.key(t) for t in a.targets} != {new.key(t) for t in b.targets}:
        return False
    if (a.created_by, a.created_at) != (b.created_by, b.created_at):
        return False
    ra, rb = old.get(a.body_ref), new.get(b.body_ref)
    ca = ra.content if ra is not None else None
    cb = rb.content if rb is not None else None
    if ca == cb:
        return True
    if ca is None or cb is None:
        return False
    try:
        return graph_isomorphic(old.annotation_body(a), new.annotation_body(b))
    except Exception:
        return False


def diff(old: ResearchObject, new: ResearchObject, spec_id: IRI | None = None) -> ChangeSpecification:
    """Unit changes turning ``old`` into ``new``, keyed by location-independent refs."""
    changes: list[Change] = []
    ra, rb = _resource_table(old), _resource_table(new)
    for ref in sorted(ra.keys() | rb.keys()):
        x, y = ra.get(ref), rb.get(ref)
        if x is None:
            changes.append(Change(ChangeKind.ADDITION, ref, None, resource_digest(y.kinds, y.content), y.kinds))
        elif y is None:
            changes.append(Change(ChangeKind.REMOVAL, ref, resource_digest(x.kinds, x.content)))
        else:
            before, after = resource_digest(x.kinds, x.content), resource_digest(y.kinds, y.content)
            if before != after:
                changes.append(Change(ChangeKind.MODIFICATION, ref, before, after, y.kinds))
    aa, ab = _annotation_table(old), _annotation_table(new)
    for ref in sorted(aa.keys() | ab.keys()):
        x, y = aa.get(ref), ab.get(ref)
        if x is None:
            changes.append(Change(ChangeKind.ADDITION, ref, None, _sha(annotation_record(new, y))))
        elif y is None:
            changes.append(Change(ChangeKind.REMOVAL, ref, _sha(annotation_record(old, x))))
        elif not _same_annotation(old, x, new, y):
            before, after = _sha(annotation_record(old, x)), _sha(annotation_record(new, y))
            if before != after:
                changes.append(Change(ChangeKind.MODIFICATION, ref, before, after))
    changes.sort(key=lambda c: c.ref)
    return ChangeSpecification(spec_id or IRI(new.id.value + "#changes"), tuple(changes))


def apply_changes(
    base: ResearchObject,
    spec: ChangeSpecification,
    payload: Callable[[str], bytes | None],
) -> ResearchObject:
    """A copy of ``base`` with ``spec`` applied; inverse of :func:`diff`."""
    resources = _resource_table(base)
    anns = _annotation_table(base)
    ann_changes: list[Change] = []
    res_changes: list[Change] = []
    for c in spec.changes:
        is_annotation = c.ref in anns or (c.kinds is None and c.kind is not ChangeKind.REMOVAL)
        (ann_changes if is_annotation else res_changes).append(c)
        if c.kind is ChangeKind.ADDITION:
            if c.ref in resources or c.ref in anns:
                raise EvolutionError(f"cannot add {c.ref}: already present")
            continue
        if c.ref in anns:
            current = _sha(annotation_record(base, anns[c.ref]))
        elif c.ref in resources:
            r = resources[c.ref]
            current = resource_digest(r.kinds, r.content)
        else:
            raise EvolutionError(f"cannot {c.kind.value} {c.ref}: not present")
        if current != c.before_digest:
            raise DigestMismatchError(f"{c.ref}: before digest does not match the base")

    # Patch the lists directly: the cascading model operations would also
    # drop annotations the spec leaves untouched.
    out = base.copy()
    gone_anns = {out.resolve(c.ref) for c in ann_changes if c.kind is not ChangeKind.ADDITION}
    gone = {a.body_ref for a in out.annotations if a.id in gone_anns}
    gone |= {out.resolve(c.ref) for c in res_changes if c.kind is ChangeKind.REMOVAL}
    out.annotations = [a for a in out.annotations if a.id not in gone_anns]
    out.aggregated = [r for r in out.aggregated if r.ref not in gone]
    for c in res_changes:
        if c.kind is ChangeKind.REMOVAL:
            continue
        content = payload(c.ref)
        assert c.kinds is not None
        if resource_digest(c.kinds, content) != c.after_digest:
            raise DigestMismatchError(f"{c.ref}: payload does not match the after digest")
        iri = out.resolve(c.ref)
        if c.kind is ChangeKind.MODIFICATION:
            idx = out.aggregated.index(out.get(iri))
            out.aggregated[idx] = AggregatedResource(iri, c.kinds | {RO.Resource}, content)
        else:
            out._add(iri, c.kinds, content)
    for c in ann_changes:
        if c.kind is ChangeKind.REMOVAL:
            continue
        record = payload(c.ref)
        if record is None or _sha(record) != c.after_digest:
            raise DigestMismatchError(f"{c.ref}: annotation payload does not match the after digest")
        _restore_annotation(out, c.ref, json.loads(record))
    return out


def _restore_annotation(ro: ResearchObject, ref: str, data: dict) -> None:
    ann_id = ro.resolve(ref)
    body_ref = IRI(ann_id.value + ".ttl")
    body = data["body"].encode("utf-8") if data["body"] is not None else None
    if ro.get(body_ref) is not None:
        ro.aggregated.remove(ro.get(body_ref))
    ro._add(body_ref, {RO.Annotation}, body)
    targets = frozenset(IRI(resolve(ro.id.value, t)) for t in data["targets"])
    ro.annotations.append(
        Annotation(ann_id, targets, body_ref, IRI(data["created_by"]), parse_timestamp(data["created_at"]))
    )


# -- the store ---------------------------------------------------------------


class EvolutionStore:
    """Frozen version copies keyed by version IRI. Insertions are serialized."""

    def __init__(self) -> None:
        self._versions: dict[IRI, tuple[ResearchObject, VersionRecord]] = {}
        self._lock = threading.Lock()

    def __contains__(self, version_id: object) -> bool:
        return version_id in self._versions

    def __iter__(self) -> Iterator[VersionRecord]:
        return (rec for _, rec in list(self._versions.values()))

    def __len__(self) -> int:
        return len(self._versions)

    def get(self, version_id: IRI) -> tuple[ResearchObject, VersionRecord]:
        try:
            return self._versions[version_id]
        except KeyError:
            raise UnknownVersionError(f"unknown version {version_id}") from None

    def records(self, live_id: IRI) -> list[VersionRecord]:
        return [rec for _, rec in self._versions.values() if rec.of_live == live_id]

    def latest(self, live_id: IRI) -> VersionRecord | None:
        recs = self.records(live_id)
        return recs[-1] if recs else None

    def next_version_id(self, live_id: IRI) -> IRI:
        return IRI(f"{live_id.value}v{len(self.records(live_id)) + 1:03d}/")

    def add(self, ro: ResearchObject, record: VersionRecord) -> None:
        if not ro.frozen:
            raise EvolutionError("only frozen copies can be stored")
        with self._lock:
            if record.version_id in self._versions:
                raise EvolutionError(f"version {record.version_id} already exists")
            latest = self.latest(record.of_live)
            expected = latest.version_id if latest else None
            if record.derived_from != expected:
                raise EvolutionError(
                    f"{record.version_id} must derive from {expected}; branching is not supported"
                )
            self._versions[record.version_id] = (ro, record)

    def remove_live(self, live_id: IRI) -> None:
        with self._lock:
            for vid in [v for v, (_, rec) in self._versions.items() if rec.of_live == live_id]:
                del self._versions[vid]


def _version(
    live: ResearchObject, store: EvolutionStore, agent: IRI, at: datetime, kind: VersionKind
) -> VersionRecord:
    violations = validate(live)
    if violations:
        raise SnapshotBlockedError(violations)
    at = utc_seconds(at)
    prior = store.latest(live.id)
    version_id = store.next_version_id(live.id)
    frozen = live.rebased(version_id).freeze()
    spec = None
    if prior is not None:
        prior_ro, _ = store.get(prior.version_id)
        spec = diff(prior_ro, frozen, IRI(version_id.value + "#changes"))
    record = VersionRecord(
        version_id, kind, live.id, at, agent, prior.version_id if prior else None, spec
    )
    store.add(frozen, record)
    return record


def snapshot(live: ResearchObject, store: EvolutionStore, agent: IRI, at: datetime) -> VersionRecord:
    """Store an immutable point-in-time copy of ``live``."""
    return _version(live, store, agent, at, VersionKind.SNAPSHOT)


def archive(live: ResearchObject, store: EvolutionStore, agent: IRI, at: datetime) -> VersionRecord:
    """Store an immutable, final copy of ``live``."""
    return _version(live, store, agent, at, VersionKind.ARCHIVED)


def history(store: EvolutionStore, live_id: IRI) -> list[VersionRecord]:
    """Versions of ``live_id`` from the first one along ``derived_from`` links."""
    recs = store.records(live_id)
    successor = {r.derived_from: r for r in recs}
    out: list[VersionRecord] = []
    cur = successor.get(None)
    while cur is not None and len(out) <= len(recs):
        out.append(cur)
        cur = successor.get(cur.version_id)
    return out


EVOLUTION_PREFIXES = {p: STANDARD_PREFIXES[p] for p in ("rdf", "xsd", "prov", "ro", "roevo")}


def emit_evolution_graph(store: EvolutionStore, version_id: IRI) -> Graph:
    """The roevo/PROV description of one stored version."""
    _, rec = store.get(version_id)
    v = rec.version_id
    g = Graph(prefixes=EVOLUTION_PREFIXES)
    g.add((v, RDF_TYPE, rec.kind.rdf_class))
    g.add((v, RDF_TYPE, ROEVO.VersionableResource))
    g.add((v, RDF_TYPE, PROV.Entity))
    if rec.derived_from is None or rec.change_spec is None:
        return g
    prev = rec.derived_from
    cs = rec.change_spec.id
    g.add((v, PROV.wasRevisionOf, prev))
    g.add((v, PROV.wasGeneratedBy, cs))
    g.add((cs, RDF_TYPE, ROEVO.ChangeSpecification))
    g.add((cs, RDF_TYPE, PROV.Activity))
    g.add((cs, PROV.used, prev))
    g.add((cs, PROV.wasAssociatedWith, rec.by))
    g.add((cs, PROV.startedAtTime, timestamp_literal(rec.at)))
    g.add((cs, PROV.endedAtTime, timestamp_literal(rec.at)))
    for i, c in enumerate(rec.change_spec.changes, start=1):
        cid = IRI(f"{v.value}#change-{i}")
        root = prev if c.kind is ChangeKind.REMOVAL else v
        g.add((cs, ROEVO.hasChange, cid))
        g.add((cid, RDF_TYPE, c.kind.rdf_class))
        g.add((cid, ROEVO.relatedResource, IRI(resolve(root.value, c.ref))))
    return g


def evolution_graph(store: EvolutionStore, live_id: IRI) -> Graph:
    """Union of the evolution graphs of every version of ``live_id``."""
    g = Graph(prefixes=EVOLUTION_PREFIXES)
    for rec in history(store, live_id):
        g = merge(g, emit_evolution_graph(store, rec.version_id))
    return g
