"""The Research Object container: aggregation, annotation, manifest, validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable

from rokit.rdf import (
    AO,
    DCT,
    IRI,
    ORE,
    RDF_TYPE,
    RO,
    STANDARD_PREFIXES,
    XSD,
    Graph,
    Literal,
    TurtleSyntaxError,
    graph_isomorphic,
    parse_turtle,
    serialize_turtle,
)
from rokit.rdf.iri import resolve

MANIFEST_PATH = ".ro/manifest.ttl"
ANNOTATION_AREA = ".ro/annotations/"
RESERVED_AREA = ".ro/"

_VERSION_AREA = re.compile(r"^v\d{3}(?:/|$)")
_ANNOTATION_NUMBER = re.compile(r"^\.ro/annotations/(\d+)(?:\.ttl)?$")
_MANIFEST_PREFIXES = ("rdf", "ro", "ore", "ao", "dct", "xsd")

VIOLATION_CODES = frozenset(
    {
        "DUPLICATE_REF",
        "DANGLING_TARGET",
        "MISSING_CONTENT",
        "BAD_ID",
        "UNPARSEABLE_BODY",
        "EXTERNAL_WITH_CONTENT",
    }
)


class ResearchObjectError(Exception):
    """Base class for errors raised by Research Object operations."""


class BadIdentifierError(ResearchObjectError):
    pass


class DuplicateResourceError(ResearchObjectError):
    pass


class UnknownResourceError(ResearchObjectError):
    pass


class ExternalContentError(ResearchObjectError):
    pass


class UnknownTargetError(ResearchObjectError):
    pass


class ManifestError(ResearchObjectError):
    pass


class FrozenResearchObjectError(ResearchObjectError):
    pass


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "subject": self.subject, "message": self.message}


@dataclass(frozen=True)
class AggregatedResource:
    ref: IRI
    kinds: frozenset[IRI] = frozenset({RO.Resource})
    content: bytes | None = None


@dataclass(frozen=True)
class Annotation:
    id: IRI
    targets: frozenset[IRI]
    body_ref: IRI
    created_by: IRI
    created_at: datetime


def utc_seconds(at: datetime) -> datetime:
    """Normalize to an aware UTC datetime at second precision (naive means UTC)."""
    if at.tzinfo is None:
        at = at.replace(tzinfo=timezone.utc)
    return at.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(at: datetime) -> str:
    return utc_seconds(at).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc_seconds(datetime.fromisoformat(text))


def timestamp_literal(at: datetime) -> Literal:
    return Literal(format_timestamp(at), datatype=XSD.dateTime)


def _as_iri(value: str | IRI) -> IRI:
    return value if isinstance(value, IRI) else IRI(value)


@dataclass
class ResearchObject:
    """An identified aggregation of resources plus annotations.

    Mutating methods act in place. ``freeze()`` turns the value read-only;
    every mutator then raises :class:`FrozenResearchObjectError`.
    """

    id: IRI
    creator: IRI
    created_at: datetime
    aggregated: list[AggregatedResource] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    _frozen: bool = field(default=False, repr=False, compare=False)

    # -- addressing ------------------------------------------------------

    def resolve(self, ref: str | IRI) -> IRI:
        if isinstance(ref, IRI):
            return ref
        return IRI(resolve(self.id.value, ref))

    def relative(self, iri: IRI) -> str | None:
        """Path of ``iri`` relative to the RO root, or None if it lies outside."""
        if iri.value.startswith(self.id.value):
            return iri.value[len(self.id.value) :]
        return None

    def is_internal(self, iri: IRI) -> bool:
        rel = self.relative(iri)
        return rel is not None and rel != ""

    def key(self, iri: IRI) -> str:
        """Location-independent name: relative path if internal, else the IRI."""
        rel = self.relative(iri)
        return rel if rel is not None else iri.value

    @property
    def manifest_iri(self) -> IRI:
        return IRI(self.id.value + MANIFEST_PATH)

    # -- lookup ----------------------------------------------------------

    def get(self, ref: str | IRI) -> AggregatedResource | None:
        iri = self.resolve(ref)
        for r in self.aggregated:
            if r.ref == iri:
                return r
        return None

    def refs(self) -> list[IRI]:
        return [r.ref for r in self.aggregated]

    def annotation(self, ann_id: str | IRI) -> Annotation | None:
        iri = self.resolve(ann_id)
        for a in self.annotations:
            if a.id == iri:
                return a
        return None

    def body_refs(self) -> set[IRI]:
        return {a.body_ref for a in self.annotations}

    def payload_resources(self) -> list[AggregatedResource]:
        """Aggregated resources that are not annotation bodies."""
        bodies = self.body_refs()
        return [r for r in self.aggregated if r.ref not in bodies]

    def annotation_body(self, ann: Annotation) -> Graph:
        res = self.get(ann.body_ref)
        if res is None or res.content is None:
            raise UnknownResourceError(f"annotation body {ann.body_ref} is not available")
        return parse_turtle(res.content.decode("utf-8"), base=ann.body_ref.value)

    # -- mutation --------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenResearchObjectError(f"{self.id} is frozen and can no longer be changed")

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "ResearchObject":
        self._frozen = True
        self.aggregated = tuple(self.aggregated)  # type: ignore[assignment]
        self.annotations = tuple(self.annotations)  # type: ignore[assignment]
        return self

    def aggregate(
        self,
        ref: str | IRI,
        kinds: Iterable[IRI] = (),
        content: bytes | None = None,
    ) -> AggregatedResource:
        """Add a resource; ``ro:Resource`` is always among its kinds."""
        iri = self.resolve(ref)
        rel = self.relative(iri)
        if rel is not None and (rel == "" or rel.startswith(RESERVED_AREA) or _VERSION_AREA.match(rel)):
            raise BadIdentifierError(f"{iri} is reserved inside {self.id}")
        return self._add(iri, kinds, content)

    def _add(self, iri: IRI, kinds: Iterable[IRI], content: bytes | None) -> AggregatedResource:
        self._check_mutable()
        if self.get(iri) is not None:
            raise DuplicateResourceError(f"{iri} is already aggregated")
        if content is not None and not self.is_internal(iri):
            raise ExternalContentError(f"external resource {iri} cannot carry content")
        res = AggregatedResource(iri, frozenset(kinds) | {RO.Resource}, content)
        self.aggregated.append(res)
        return res

    def update_content(self, ref: str | IRI, content: bytes, kinds: Iterable[IRI] | None = None) -> AggregatedResource:
        """Replace the payload (and optionally the kinds) of an internal resource."""
        self._check_mutable()
        iri = self.resolve(ref)
        for i, r in enumerate(self.aggregated):
            if r.ref == iri:
                if not self.is_internal(iri):
                    raise ExternalContentError(f"external resource {iri} cannot carry content")
                new_kinds = r.kinds if kinds is None else frozenset(kinds) | {RO.Resource}
                self.aggregated[i] = replace(r, content=content, kinds=new_kinds)
                return self.aggregated[i]
        raise UnknownResourceError(f"{iri} is not aggregated")

    def deaggregate(self, ref: str | IRI) -> AggregatedResource:
        """Remove a resource; annotations left without targets go with it."""
        self._check_mutable()
        iri = self.resolve(ref)
        res = self.get(iri)
        if res is None:
            raise UnknownResourceError(f"{iri} is not aggregated")
        self._cascade({iri})
        return res

    def _cascade(self, gone: set[IRI]) -> None:
        # Removing a body drops its annotation, and an annotation may itself
        # target another body, so repeat until nothing else falls away.
        gone = set(gone)
        while True:
            kept: list[Annotation] = []
            for a in self.annotations:
                if a.body_ref in gone:
                    continue
                if a.targets & gone:
                    a = replace(a, targets=a.targets - gone)
                    if not a.targets:
                        gone.add(a.body_ref)
                        continue
                kept.append(a)
            self.aggregated = [r for r in self.aggregated if r.ref not in gone]
            if len(kept) == len(self.annotations) and all(x is y for x, y in zip(kept, self.annotations)):
                break
            self.annotations = kept

    def next_annotation_number(self) -> int:
        numbers = [0]
        for iri in [a.id for a in self.annotations] + self.refs():
            rel = self.relative(iri)
            if rel is not None and (m := _ANNOTATION_NUMBER.match(rel)):
                numbers.append(int(m.group(1)))
        return max(numbers) + 1

    def annotate(
        self,
        targets: Iterable[str | IRI],
        body: Graph,
        creator: IRI,
        at: datetime,
        ann_id: str | IRI | None = None,
        strict: bool = True,
    ) -> Annotation:
        """Attach ``body`` to ``targets``; the body is stored as an aggregated Turtle document.

        With ``strict=False`` targets need not be aggregated yet; ``validate``
        reports any that are still missing.
        """
        self._check_mutable()
        target_iris = frozenset(self.resolve(t) for t in targets)
        if not target_iris:
            raise UnknownTargetError("an annotation needs at least one target")
        allowed = {self.id, *self.refs()}
        for t in sorted(target_iris, key=lambda i: i.value):
            if strict and t not in allowed:
                raise UnknownTargetError(f"annotation target {t} is not part of {self.id}")
        if ann_id is None:
            ident = self.resolve(f"{ANNOTATION_AREA}{self.next_annotation_number():03d}")
        else:
            ident = self.resolve(ann_id)
            rel = self.relative(ident)
            if rel is None or not _ANNOTATION_NUMBER.match(rel) or rel.endswith(".ttl"):
                raise BadIdentifierError(f"annotation id {ident} is outside the annotation area")
            if self.annotation(ident) is not None:
                raise DuplicateResourceError(f"annotation {ident} already exists")
        body_ref = IRI(ident.value + ".ttl")
        content = serialize_turtle(body, base=body_ref.value, scope=self.id.value).encode("utf-8")
        self._add(body_ref, {RO.Annotation}, content)
        ann = Annotation(ident, target_iris, body_ref, creator, utc_seconds(at))
        self.annotations.append(ann)
        return ann

    def remove_annotation(self, ann_id: str | IRI) -> Annotation:
        self._check_mutable()
        ann = self.annotation(ann_id)
        if ann is None:
            raise UnknownResourceError(f"no annotation {ann_id}")
        self._cascade({ann.body_ref})
        return ann

    # -- copies ----------------------------------------------------------

    def copy(self) -> "ResearchObject":
        """A mutable copy (resources and annotations are immutable values)."""
        return ResearchObject(
            self.id, self.creator, self.created_at, list(self.aggregated), list(self.annotations)
        )

    def rebased(self, new_id: IRI) -> "ResearchObject":
        """A mutable copy whose internal IRIs live under ``new_id``."""

        def move(iri: IRI) -> IRI:
            rel = self.relative(iri)
            return iri if rel is None else IRI(new_id.value + rel)

        return ResearchObject(
            new_id,
            self.creator,
            self.created_at,
            [replace(r, ref=move(r.ref)) for r in self.aggregated],
            [
                replace(
                    a,
                    id=move(a.id),
                    targets=frozenset(move(t) for t in a.targets),
                    body_ref=move(a.body_ref),
                )
                for a in self.annotations
            ],
        )


def create_research_object(id: str | IRI, creator: str | IRI, created_at: datetime) -> ResearchObject:
    """A new, empty Research Object. ``id`` must be absolute and end with '/'."""
    try:
        iri = _as_iri(id)
    except ValueError as exc:
        raise BadIdentifierError(str(exc)) from None
    if not iri.value.endswith("/"):
        raise BadIdentifierError(f"Research Object id must end with '/': {iri}")
    if "#" in iri.value or "?" in iri.value:
        raise BadIdentifierError(f"Research Object id cannot carry a query or fragment: {iri}")
    return ResearchObject(iri, _as_iri(creator), utc_seconds(created_at))


# -- manifest ------------------------------------------------------------


def manifest_prefixes(kinds: Iterable[IRI] = ()) -> dict[str, str]:
    prefixes = {p: STANDARD_PREFIXES[p] for p in _MANIFEST_PREFIXES}
    for k in kinds:
        for p, ns in STANDARD_PREFIXES.items():
            if k.value.startswith(ns):
                prefixes[p] = ns
    return prefixes


def build_manifest(ro: ResearchObject) -> Graph:
    """The resource map describing ``ro``; exactly the triples of the manifest template."""
    kinds = {k for r in ro.aggregated for k in r.kinds}
    g = Graph(prefixes=manifest_prefixes(kinds))
    m = ro.manifest_iri
    g.add((ro.id, RDF_TYPE, RO.ResearchObject))
    g.add((ro.id, RDF_TYPE, ORE.Aggregation))
    g.add((m, RDF_TYPE, RO.Manifest))
    g.add((m, RDF_TYPE, ORE.ResourceMap))
    g.add((m, ORE.describes, ro.id))
    g.add((ro.id, ORE.isDescribedBy, m))
    g.add((ro.id, DCT.created, timestamp_literal(ro.created_at)))
    g.add((ro.id, DCT.creator, ro.creator))
    for r in ro.aggregated:
        g.add((ro.id, ORE.aggregates, r.ref))
        for k in r.kinds:
            g.add((r.ref, RDF_TYPE, k))
    for a in ro.annotations:
        g.add((a.id, RDF_TYPE, RO.Annotation))
        g.add((a.id, RDF_TYPE, AO.Annotation))
        for t in a.targets:
            g.add((a.id, AO.annotatesResource, t))
        g.add((a.id, AO.body, a.body_ref))
        g.add((a.id, DCT.creator, a.created_by))
        g.add((a.id, DCT.created, timestamp_literal(a.created_at)))
    return g


def serialize_manifest(ro: ResearchObject) -> str:
    """Turtle text of the manifest, written relative to its own location."""
    return serialize_turtle(build_manifest(ro), base=ro.manifest_iri.value, scope=ro.id.value)


def manifest_json(ro: ResearchObject) -> dict:
    """JSON projection of the manifest. Annotation bodies appear under their
    annotation, not in ``resources``; refs are relative to the RO root where
    internal."""
    return {
        "id": ro.id.value,
        "created": format_timestamp(ro.created_at),
        "creator": ro.creator.value,
        "resources": [
            {"ref": ro.key(r.ref), "kinds": sorted(k.value for k in r.kinds)}
            for r in sorted(ro.payload_resources(), key=lambda r: r.ref.value)
        ],
        "annotations": [
            {
                "id": ro.key(a.id),
                "targets": sorted(ro.key(t) or "." for t in a.targets),
                "body": ro.key(a.body_ref),
                "creator": a.created_by.value,
                "created": format_timestamp(a.created_at),
            }
            for a in sorted(ro.annotations, key=lambda a: a.id.value)
        ],
    }


def _single(g: Graph, s, p, what: str):
    values = g.objects(s, p)
    if len(values) != 1:
        raise ManifestError(f"{s} must have exactly one {what}, found {len(values)}")
    return values[0]


def load_research_object(
    manifest: Graph,
    payload_resolver: Callable[[IRI], bytes | None] = lambda ref: None,
) -> ResearchObject:
    """Rebuild a Research Object from its manifest graph (inverse of ``build_manifest``)."""
    ro_subjects = [s for s in manifest.subjects(RDF_TYPE, RO.ResearchObject) if isinstance(s, IRI)]
    if len(ro_subjects) != 1:
        raise ManifestError(f"manifest must describe exactly one ro:ResearchObject, found {len(ro_subjects)}")
    ro_id = ro_subjects[0]
    creator = _single(manifest, ro_id, DCT.creator, "dct:creator")
    created = _single(manifest, ro_id, DCT.created, "dct:created")
    if not isinstance(creator, IRI) or not isinstance(created, Literal):
        raise ManifestError(f"{ro_id} has a malformed creator or creation time")
    try:
        ro = create_research_object(ro_id, creator, parse_timestamp(created.lexical))
    except (BadIdentifierError, ValueError) as exc:
        raise ManifestError(str(exc)) from None

    for ref in sorted(manifest.objects(ro_id, ORE.aggregates), key=lambda t: getattr(t, "value", "")):
        if not isinstance(ref, IRI):
            raise ManifestError(f"ore:aggregates object {ref} is not an IRI")
        kinds = frozenset(k for k in manifest.objects(ref, RDF_TYPE) if isinstance(k, IRI))
        if RO.Resource not in kinds:
            raise ManifestError(f"aggregated resource {ref} is not typed ro:Resource")
        content = payload_resolver(ref) if ro.is_internal(ref) else None
        ro.aggregated.append(AggregatedResource(ref, kinds, content))

    allowed = {ro.id, *ro.refs()}
    for ann_id in sorted(manifest.subjects(RDF_TYPE, AO.Annotation), key=lambda t: getattr(t, "value", "")):
        if not isinstance(ann_id, IRI):
            raise ManifestError("annotations must be identified by IRIs")
        targets = frozenset(manifest.objects(ann_id, AO.annotatesResource))
        if not targets:
            raise ManifestError(f"annotation {ann_id} has no target")
        dangling = sorted(t.value for t in targets if t not in allowed)
        if dangling:
            raise ManifestError(f"annotation {ann_id} targets non-aggregated {', '.join(dangling)}")
        body = _single(manifest, ann_id, AO.body, "ao:body")
        by = _single(manifest, ann_id, DCT.creator, "dct:creator")
        at = _single(manifest, ann_id, DCT.created, "dct:created")
        if not isinstance(body, IRI) or not isinstance(by, IRI) or not isinstance(at, Literal):
            raise ManifestError(f"annotation {ann_id} is malformed")
        ro.annotations.append(Annotation(ann_id, targets, body, by, parse_timestamp(at.lexical)))
    return ro


# -- validation and comparison --------------------------------------------


def validate(ro: ResearchObject) -> list[Violation]:
    """Violations of the container invariants; empty when the RO is well formed."""
    out: list[Violation] = []
    rid = ro.id.value
    if not rid.endswith("/") or "#" in rid or "?" in rid:
        out.append(Violation("BAD_ID", rid, "Research Object id must end with '/' and carry no query or fragment"))
    seen: set[IRI] = set()
    for r in ro.aggregated:
        if r.ref in seen:
            out.append(Violation("DUPLICATE_REF", r.ref.value, "resource aggregated more than once"))
        seen.add(r.ref)
        if ro.is_internal(r.ref):
            if r.content is None:
                out.append(Violation("MISSING_CONTENT", r.ref.value, "internal resource has no content"))
        elif r.content is not None:
            out.append(Violation("EXTERNAL_WITH_CONTENT", r.ref.value, "external resource carries content"))
    allowed = {ro.id} | seen
    for a in ro.annotations:
        if not a.targets:
            out.append(Violation("DANGLING_TARGET", a.id.value, "annotation has no target"))
        for t in sorted(a.targets, key=lambda i: i.value):
            if t not in allowed:
                out.append(Violation("DANGLING_TARGET", a.id.value, f"target {t} is not aggregated"))
        body = ro.get(a.body_ref)
        if body is None:
            out.append(Violation("UNPARSEABLE_BODY", a.id.value, f"body {a.body_ref} is not aggregated"))
        elif body.content is not None:
            try:
                parse_turtle(body.content.decode("utf-8"), base=a.body_ref.value)
            except (TurtleSyntaxError, UnicodeDecodeError) as exc:
                out.append(Violation("UNPARSEABLE_BODY", a.id.value, f"body does not parse: {exc}"))
    return out


def _body_graph(ro: ResearchObject, ref: IRI) -> Graph | None:
    res = ro.get(ref)
    if res is None or res.content is None:
        return None
    try:
        return parse_turtle(res.content.decode("utf-8"), base=ref.value)
    except (TurtleSyntaxError, UnicodeDecodeError):
        return None


def structurally_equal(a: ResearchObject, b: ResearchObject) -> bool:
    """Field-by-field equality; annotation bodies are compared up to isomorphism."""
    if (a.id, a.creator, a.created_at) != (b.id, b.creator, b.created_at):
        return False
    ra = {r.ref: r for r in a.aggregated}
    rb = {r.ref: r for r in b.aggregated}
    if ra.keys() != rb.keys() or len(ra) != len(a.aggregated) or len(rb) != len(b.aggregated):
        return False
    anns_a = {x.id: x for x in a.annotations}
    anns_b = {x.id: x for x in b.annotations}
    if anns_a != anns_b:
        return False
    bodies = a.body_refs()
    for ref, x in ra.items():
        y = rb[ref]
        if x.kinds != y.kinds:
            return False
        if ref in bodies and x.content != y.content:
            ga, gb = _body_graph(a, ref), _body_graph(b, ref)
            if ga is None or gb is None or not graph_isomorphic(ga, gb):
                return False
        elif ref not in bodies and x.content != y.content:
            return False
    return True
