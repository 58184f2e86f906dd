"""Checklist evaluation: does a Research Object satisfy a list of requirements?

Checklist documents are JSON::

    {"id": "...", "purpose": "...",
     "requirements": [{"id": "...", "level": "MUST|SHOULD|MAY",
                       "message": "...", "rule": {"kind": "...", ...}}]}

Rule kinds and their fields:

``ResourceOfType``  ``type``: an aggregated resource carries this rdf:type.
``PatternExists``   ``patterns``: up to 8 ``[s, p, o]`` triples that must
                    match jointly. Terms are ``?var``, ``prefix:local``,
                    ``<iri>`` (relative refs resolve against the RO) or a
                    quoted ``"literal"``. ``?ro`` is pre-bound to the RO.
``ContentPresent``  ``scope``: ``"all-internal"`` or a resource ref whose
                    payload must be present.
``AnnotationOn``    ``target``: a ref, or ``"any"``.

Evaluation runs over the manifest merged with every annotation body.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Union

from rokit.rdf import IRI, RDF_TYPE, STANDARD_PREFIXES, Graph, Literal, TurtleSyntaxError, expand_curie, merge
from rokit.rdf.iri import resolve
from rokit.ro.model import ResearchObject, UnknownResourceError, build_manifest

MAX_PATTERNS = 8
_VAR = re.compile(r"^\?[A-Za-z_][A-Za-z0-9_]*$")


class ChecklistError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class Level(enum.Enum):
    MUST = "MUST"
    SHOULD = "SHOULD"
    MAY = "MAY"


class Verdict(enum.Enum):
    FULLY_SATISFIED = "FULLY_SATISFIED"
    MINIMALLY_SATISFIED = "MINIMALLY_SATISFIED"
    NONCONFORMANT = "NONCONFORMANT"

    @property
    def exit_code(self) -> int:
        return {"FULLY_SATISFIED": 0, "MINIMALLY_SATISFIED": 1, "NONCONFORMANT": 2}[self.value]


@dataclass(frozen=True)
class ResourceOfType:
    type: IRI

    def describe(self) -> str:
        return f"an aggregated resource of type {self.type}"


@dataclass(frozen=True)
class PatternExists:
    patterns: tuple[tuple[str, str, str], ...]

    def describe(self) -> str:
        return "a match for " + " . ".join(" ".join(p) for p in self.patterns)


@dataclass(frozen=True)
class ContentPresent:
    scope: str  # "all-internal" or a ref

    def describe(self) -> str:
        if self.scope == "all-internal":
            return "content for every internal resource"
        return f"content for {self.scope}"


@dataclass(frozen=True)
class AnnotationOn:
    target: str  # a ref or "any"

    def describe(self) -> str:
        return "some annotation" if self.target == "any" else f"an annotation on {self.target}"


Rule = Union[ResourceOfType, PatternExists, ContentPresent, AnnotationOn]


@dataclass(frozen=True)
class Requirement:
    id: str
    level: Level
    rule: Rule
    message: str


@dataclass(frozen=True)
class Checklist:
    id: str
    purpose: str
    requirements: tuple[Requirement, ...]


@dataclass(frozen=True)
class Result:
    requirement: Requirement
    passed: bool
    witness: str | None = None
    missing: str | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.requirement.id,
            "level": self.requirement.level.value,
            "passed": self.passed,
            "message": self.requirement.message,
        }
        if self.passed:
            out["witness"] = self.witness
        else:
            out["missing"] = self.missing
        return out


def verdict_for(results: list[tuple[Level, bool]]) -> Verdict:
    if any(level is Level.MUST and not ok for level, ok in results):
        return Verdict.NONCONFORMANT
    if any(level is Level.SHOULD and not ok for level, ok in results):
        return Verdict.MINIMALLY_SATISFIED
    return Verdict.FULLY_SATISFIED


@dataclass(frozen=True)
class Report:
    checklist: Checklist
    ro: IRI
    results: tuple[Result, ...]

    @property
    def verdict(self) -> Verdict:
        return verdict_for([(r.requirement.level, r.passed) for r in self.results])

    def result(self, req_id: str) -> Result:
        return next(r for r in self.results if r.requirement.id == req_id)

    def to_json(self) -> dict:
        return {
            "checklist": self.checklist.id,
            "ro": self.ro.value,
            "verdict": self.verdict.value,
            "results": [r.to_json() for r in self.results],
        }

    def to_text(self) -> str:
        rows = [("REQUIREMENT", "LEVEL", "RESULT", "DETAIL")]
        for r in self.results:
            detail = r.witness if r.passed else f"missing {r.missing}"
            rows.append((r.requirement.id, r.requirement.level.value, "pass" if r.passed else "FAIL", detail or ""))
        widths = [max(len(row[i]) for row in rows) for i in range(3)]
        lines = [f"checklist {self.checklist.id} on {self.ro.value}"]
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)) + "  " + row[3])
        lines.append(f"verdict: {self.verdict.value}")
        return "\n".join(lines) + "\n"


# -- parsing ----------------------------------------------------------------


def _string(obj: dict, key: str, path: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise ChecklistError(f"{path}.{key}", "expected a non-empty string")
    return value


def _check_term(term, path: str) -> str:
    if not isinstance(term, str) or not term:
        raise ChecklistError(path, "expected a term string")
    if term.startswith("?"):
        if not _VAR.match(term):
            raise ChecklistError(path, f"bad variable name {term!r}")
    elif not (term.startswith("<") or (term.startswith('"') and term.endswith('"') and len(term) >= 2)):
        prefix, sep, _ = term.partition(":")
        if not sep or prefix not in STANDARD_PREFIXES:
            raise ChecklistError(path, f"unknown prefix in {term!r}")
    return term


def _rule(obj, path: str) -> Rule:
    if not isinstance(obj, dict):
        raise ChecklistError(path, "expected an object")
    kind = obj.get("kind")
    if kind == "ResourceOfType":
        return ResourceOfType(_iri(_string(obj, "type", path), f"{path}.type"))
    if kind == "PatternExists":
        pats = obj.get("patterns")
        if not isinstance(pats, list) or not pats:
            raise ChecklistError(f"{path}.patterns", "expected a non-empty list")
        if len(pats) > MAX_PATTERNS:
            raise ChecklistError(f"{path}.patterns", f"at most {MAX_PATTERNS} patterns are allowed")
        out = []
        for i, pat in enumerate(pats):
            ppath = f"{path}.patterns[{i}]"
            if not isinstance(pat, list) or len(pat) != 3:
                raise ChecklistError(ppath, "expected [subject, predicate, object]")
            out.append(tuple(_check_term(t, f"{ppath}[{j}]") for j, t in enumerate(pat)))
        return PatternExists(tuple(out))
    if kind == "ContentPresent":
        return ContentPresent(_string(obj, "scope", path))
    if kind == "AnnotationOn":
        return AnnotationOn(_string(obj, "target", path))
    raise ChecklistError(f"{path}.kind", f"unknown rule kind {kind!r}")


def _iri(text: str, path: str) -> IRI:
    try:
        _check_term(text, path)
        return expand_curie(text)
    except ValueError as exc:
        if isinstance(exc, ChecklistError):
            raise
        raise ChecklistError(path, str(exc)) from None


def parse_checklist(doc: bytes | str) -> Checklist:
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise ChecklistError("$", f"not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ChecklistError("$", "expected an object")
    reqs = data.get("requirements")
    if not isinstance(reqs, list):
        raise ChecklistError("requirements", "expected a list")
    out = []
    seen = set()
    for i, req in enumerate(reqs):
        path = f"requirements[{i}]"
        if not isinstance(req, dict):
            raise ChecklistError(path, "expected an object")
        rid = _string(req, "id", path)
        if rid in seen:
            raise ChecklistError(f"{path}.id", f"duplicate requirement id {rid!r}")
        seen.add(rid)
        level = req.get("level")
        if level not in Level._value2member_map_:
            raise ChecklistError(f"{path}.level", f"level must be MUST, SHOULD or MAY, not {level!r}")
        message = req.get("message", "")
        if not isinstance(message, str):
            raise ChecklistError(f"{path}.message", "expected a string")
        out.append(Requirement(rid, Level(level), _rule(req.get("rule"), f"{path}.rule"), message))
    return Checklist(_string(data, "id", "$"), data.get("purpose", "") or "", tuple(out))


def shipped_checklist(name: str) -> Checklist:
    """Load one of the checklists bundled with the package (e.g. ``workflow-ro``)."""
    text = resources.files("rokit.checklists").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return parse_checklist(text)


# -- evaluation -------------------------------------------------------------


def evaluation_graph(ro: ResearchObject) -> Graph:
    """Manifest merged with every parseable annotation body."""
    g = build_manifest(ro)
    for ann in ro.annotations:
        try:
            g = merge(g, ro.annotation_body(ann))
        except (UnknownResourceError, TurtleSyntaxError, UnicodeDecodeError):
            continue
    return g


def _term(text: str, ro: ResearchObject):
    if text.startswith("?"):
        return text
    if text.startswith("<") and text.endswith(">"):
        return IRI(resolve(ro.id.value, text[1:-1]))
    if text.startswith('"'):
        return Literal(text[1:-1])
    return expand_curie(text)


def _solve(g: Graph, patterns, binding: dict) -> dict | None:
    if not patterns:
        return binding
    first, rest = patterns[0], patterns[1:]
    query = [binding.get(t, None) if isinstance(t, str) else t for t in first]
    for t in g.triples(*query):
        extended = dict(binding)
        ok = True
        for slot, value in zip(first, t):
            if isinstance(slot, str):
                if extended.setdefault(slot, value) != value:
                    ok = False
                    break
        if ok:
            found = _solve(g, rest, extended)
            if found is not None:
                return found
    return None


def _evaluate_rule(rule: Rule, ro: ResearchObject, g: Graph) -> tuple[bool, str | None]:
    if isinstance(rule, ResourceOfType):
        refs = set(ro.refs())
        hits = sorted(s.value for s in g.subjects(RDF_TYPE, rule.type) if s in refs)
        return (True, ro.key(IRI(hits[0]))) if hits else (False, None)
    if isinstance(rule, PatternExists):
        patterns = [tuple(_term(t, ro) for t in p) for p in rule.patterns]
        found = _solve(g, patterns, {"?ro": ro.id})
        if found is None:
            return False, None
        shown = ", ".join(f"{k}={(ro.key(v) or '.') if isinstance(v, IRI) else v}" for k, v in sorted(found.items()))
        return True, shown
    if isinstance(rule, ContentPresent):
        if rule.scope == "all-internal":
            lacking = [ro.key(r.ref) for r in ro.aggregated if ro.is_internal(r.ref) and r.content is None]
            if lacking:
                return False, None
            return True, f"{sum(1 for r in ro.aggregated if ro.is_internal(r.ref))} internal resources"
        res = ro.get(rule.scope)
        if res is None or res.content is None:
            return False, None
        return True, ro.key(res.ref)
    if isinstance(rule, AnnotationOn):
        if rule.target == "any":
            anns = sorted(a.id.value for a in ro.annotations)
        else:
            target = ro.resolve(rule.target) if rule.target else ro.id
            anns = sorted(a.id.value for a in ro.annotations if target in a.targets)
        return (True, ro.key(IRI(anns[0]))) if anns else (False, None)
    raise TypeError(f"unknown rule {rule!r}")


def evaluate(ro: ResearchObject, cl: Checklist) -> Report:
    g = evaluation_graph(ro)
    results = []
    for req in cl.requirements:
        ok, witness = _evaluate_rule(req.rule, ro, g)
        results.append(Result(req, ok, witness if ok else None, None if ok else req.rule.describe()))
    return Report(cl, ro.id, tuple(results))
