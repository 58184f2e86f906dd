"""Turtle subset reader and writer.

Supported: ``@prefix``/``@base`` (and the SPARQL-style ``PREFIX``/``BASE``),
``a``, ``;`` and ``,`` abbreviations, labeled and anonymous blank nodes
(``_:x``, ``[]``, ``[ p o ]``), and plain, typed and language-tagged literals
in all four quoting styles. RDF collections and the numeric/boolean
shorthands are rejected with a syntax error.
"""

from __future__ import annotations

import re
from collections import defaultdict

from rokit.rdf.graph import Graph
from rokit.rdf.iri import relativize, resolve
from rokit.rdf.namespaces import RDF_TYPE
from rokit.rdf.terms import IRI, BNode, Literal, Term, is_absolute, term_key

MEDIA_TYPE = "text/turtle"


class TurtleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


_BASE_CHARS = (
    "A-Za-z\u00C0-\u00D6\u00D8-\u00F6\u00F8-\u02FF\u0370-\u037D\u037F-\u1FFF"
    "\u200C-\u200D\u2070-\u218F\u2C00-\u2FEF\u3001-\uD7FF\uF900-\uFDCF\uFDF0-\uFFFD"
    "\U00010000-\U000EFFFF"
)
_U_CHARS = _BASE_CHARS + "_"
_CHARS = _U_CHARS + "\\-0-9\u00B7\u0300-\u036F\u203F-\u2040"
_PLX = r"%[0-9A-Fa-f]{2}|\\[_~.\-!$&'()*+,;=/?#@%]"

_PN_PREFIX = rf"[{_BASE_CHARS}](?:[{_CHARS}.]*[{_CHARS}])?"
_PN_LOCAL = rf"(?:[{_U_CHARS}:0-9]|{_PLX})(?:(?:[{_CHARS}.:]|{_PLX})*(?:[{_CHARS}:]|{_PLX}))?"
_PNAME = re.compile(rf"({_PN_PREFIX})?:({_PN_LOCAL})?")
_BLANK_LABEL = re.compile(rf"_:([{_U_CHARS}0-9](?:[{_CHARS}.]*[{_CHARS}])?)")
_LANGTAG = re.compile(r"@([a-zA-Z]+(?:-[a-zA-Z0-9]+)*)")
_IRIREF = re.compile(r'<((?:[^\x00-\x20<>"{}|^`\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*)>')
_UCHAR = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")
_KEYWORD = re.compile(r"(?i)(PREFIX|BASE)(?=[\s<])")
_SAFE_LOCAL = re.compile(r"^(?:[A-Za-z_][A-Za-z0-9_\-]*)?$")

_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}

XSD_STRING = "http://www.w3.org/2001/XMLSchema#string"


class _Parser:
    def __init__(self, text: str, base: str | None):
        self.text = text
        self.pos = 0
        self.base = base
        self.prefixes: dict[str, str] = {}
        self.bnodes: dict[str, BNode] = {}
        self.graph = Graph()

    # -- low-level helpers ----------------------------------------------

    def error(self, message: str, pos: int | None = None) -> TurtleSyntaxError:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return TurtleSyntaxError(message, line, col)

    def skip_ws(self) -> None:
        text = self.text
        n = len(text)
        while self.pos < n:
            c = text[self.pos]
            if c in " \t\r\n":
                self.pos += 1
            elif c == "#":
                end = text.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            else:
                break

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str, what: str) -> None:
        if self.peek() != ch:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        self.pos += 1

    # -- grammar ---------------------------------------------------------

    def parse(self) -> Graph:
        while self.peek():
            self.statement()
        self.graph.prefixes = dict(self.prefixes)
        return self.graph

    def statement(self) -> None:
        text = self.text
        if text.startswith("@prefix", self.pos):
            self.pos += len("@prefix")
            self.prefix_decl()
            self.expect(".", "'.' after @prefix")
        elif text.startswith("@base", self.pos):
            self.pos += len("@base")
            self.base_decl()
            self.expect(".", "'.' after @base")
        elif (m := _KEYWORD.match(text, self.pos)) is not None:
            self.pos = m.end()
            if m.group(1).upper() == "PREFIX":
                self.prefix_decl()
            else:
                self.base_decl()
        else:
            self.triples()
            self.expect(".", "'.' to end the statement")

    def prefix_decl(self) -> None:
        self.skip_ws()
        m = re.compile(rf"({_PN_PREFIX})?:").match(self.text, self.pos)
        if m is None:
            raise self.error("expected a prefix name")
        self.pos = m.end()
        self.skip_ws()
        self.prefixes[m.group(1) or ""] = self.iriref().value

    def base_decl(self) -> None:
        self.skip_ws()
        self.base = self.iriref().value

    def triples(self) -> None:
        if self.peek() == "[":
            subject = self.blank_property_list()
            if self.peek() == ".":
                return
        else:
            subject = self.subject()
        self.predicate_object_list(subject)

    def subject(self) -> IRI | BNode:
        c = self.peek()
        if c == "(":
            raise self.error("RDF collections are not supported")
        if c == "_":
            return self.blank_label()
        if c in ("", ".", ";", ","):
            raise self.error("expected a subject")
        if c in "\"'":
            raise self.error("a literal cannot be a subject")
        return self.iri()

    def predicate_object_list(self, subject) -> None:
        self.verb_object_list(subject)
        while self.peek() == ";":
            while self.peek() == ";":
                self.pos += 1
            if self.peek() in (".", "]", ""):
                return
            self.verb_object_list(subject)

    def verb_object_list(self, subject) -> None:
        verb = self.verb()
        self.graph.add((subject, verb, self.object()))
        while self.peek() == ",":
            self.pos += 1
            self.graph.add((subject, verb, self.object()))

    def verb(self) -> IRI:
        c = self.peek()
        if c == "a":
            nxt = self.text[self.pos + 1 : self.pos + 2]
            if nxt == "" or nxt in " \t\r\n<[\"'_(#":
                self.pos += 1
                return RDF_TYPE
        if c in ("", ".", ";", ",", "]"):
            raise self.error("expected a predicate")
        if c == "_" or c == "[":
            raise self.error("a blank node cannot be a predicate")
        return self.iri()

    def object(self) -> Term:
        c = self.peek()
        if c == "[":
            return self.blank_property_list()
        if c == "_":
            return self.blank_label()
        if c in "\"'":
            return self.literal()
        if c == "(":
            raise self.error("RDF collections are not supported")
        if c and (c.isdigit() or c in "+-") or (c == "." and self.text[self.pos + 1 : self.pos + 2].isdigit()):
            raise self.error("numeric literal shorthand is not supported")
        if re.match(r"(true|false)(?![\w:])", self.text[self.pos : self.pos + 6]):
            raise self.error("boolean literal shorthand is not supported")
        if c in ("", ".", ";", ",", "]"):
            raise self.error("expected an object")
        return self.iri()

    def blank_property_list(self) -> BNode:
        self.expect("[", "'['")
        node = BNode()
        if self.peek() == "]":
            self.pos += 1
            return node
        self.predicate_object_list(node)
        self.expect("]", "']' to close the blank node")
        return node

    def blank_label(self) -> BNode:
        m = _BLANK_LABEL.match(self.text, self.pos)
        if m is None:
            raise self.error("malformed blank node label")
        self.pos = m.end()
        label = m.group(1)
        if label not in self.bnodes:
            self.bnodes[label] = BNode()
        return self.bnodes[label]

    def iri(self) -> IRI:
        self.skip_ws()
        if self.text.startswith("<", self.pos):
            return self.iriref()
        start = self.pos
        m = _PNAME.match(self.text, self.pos)
        if m is None or m.end() == start:
            raise self.error("expected an IRI or prefixed name")
        prefix = m.group(1) or ""
        if prefix not in self.prefixes:
            raise self.error(f"undefined prefix {prefix!r}", start)
        local = m.group(2) or ""
        local = re.sub(r"\\(.)", r"\1", local)
        self.pos = m.end()
        try:
            return IRI(self.prefixes[prefix] + local)
        except ValueError as exc:
            raise self.error(str(exc), start) from None

    def iriref(self) -> IRI:
        start = self.pos
        m = _IRIREF.match(self.text, self.pos)
        if m is None:
            raise self.error("malformed IRI reference")
        self.pos = m.end()
        raw = _UCHAR.sub(lambda u: chr(int(u.group(1) or u.group(2), 16)), m.group(1))
        if not is_absolute(raw):
            if self.base is None:
                raise self.error(f"relative IRI <{raw}> with no base", start)
            raw = resolve(self.base, raw)
        try:
            return IRI(raw)
        except ValueError as exc:
            raise self.error(str(exc), start) from None

    def literal(self) -> Literal:
        lexical = self.string()
        if self.text.startswith("@", self.pos):
            m = _LANGTAG.match(self.text, self.pos)
            if m is None:
                raise self.error("malformed language tag")
            self.pos = m.end()
            return Literal(lexical, language=m.group(1))
        if self.text.startswith("^^", self.pos):
            self.pos += 2
            return Literal(lexical, datatype=self.iri())
        return Literal(lexical)

    def string(self) -> str:
        text = self.text
        start = self.pos
        q = text[self.pos]
        long = text.startswith(q * 3, self.pos)
        delim = q * 3 if long else q
        self.pos += len(delim)
        out: list[str] = []
        while True:
            if self.pos >= len(text):
                raise self.error("unterminated string literal", start)
            if text.startswith(delim, self.pos):
                if long:
                    # up to two quote characters may precede the closing delimiter
                    run = 0
                    while text.startswith(q, self.pos + run):
                        run += 1
                    if run > 5:
                        raise self.error("too many quote characters in long string", self.pos)
                    out.append(q * (run - 3))
                    self.pos += run
                else:
                    self.pos += 1
                return "".join(out)
            c = text[self.pos]
            if c == "\\":
                nxt = text[self.pos + 1 : self.pos + 2]
                if nxt in _ECHAR:
                    out.append(_ECHAR[nxt])
                    self.pos += 2
                    continue
                m = _UCHAR.match(text, self.pos)
                if m is None:
                    raise self.error("invalid escape sequence")
                out.append(chr(int(m.group(1) or m.group(2), 16)))
                self.pos = m.end()
                continue
            if not long and c in "\r\n":
                raise self.error("line break in a short string literal")
            out.append(c)
            self.pos += 1


def parse_turtle(text: str, base: str | IRI | None = None) -> Graph:
    """Parse a Turtle document; relative IRIs are resolved against ``base``."""
    if isinstance(base, IRI):
        base = base.value
    if base is not None and not is_absolute(base):
        raise ValueError(f"base must be absolute: {base!r}")
    return _Parser(text, base).parse()


# -- serialization -------------------------------------------------------


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


class _Writer:
    def __init__(self, g: Graph, base: str | None, scope: str | None):
        self.g = g
        self.base = base
        self.scope = scope
        self.ns = sorted(g.prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        self.by_subject: dict = defaultdict(list)
        self.obj_refs: dict[BNode, int] = defaultdict(int)
        for t in g:
            self.by_subject[t.subject].append(t)
            if isinstance(t.object, BNode):
                self.obj_refs[t.object] += 1
        self.sig = {b: self._signature(b) for b in g.bnodes()}
        self.labels: dict[BNode, str] = {}
        self.label_queue: list[BNode] = []

    def _signature(self, b: BNode) -> tuple:
        def k(t):
            return (1, "") if isinstance(t, BNode) else term_key(t)

        out = sorted((p.value, k(o)) for _, p, o in self.g.triples(b, None, None))
        inc = sorted((p.value, k(s)) for s, p, _ in self.g.triples(None, None, b))
        return (tuple(out), tuple(inc), b.label)

    def obj_key(self, o: Term) -> tuple:
        if isinstance(o, BNode):
            return (1, self.sig[o])
        return term_key(o)

    def plan(self) -> None:
        inline = {b for b, n in self.obj_refs.items() if n == 1}
        while True:
            reached: set[BNode] = set()
            stack = [s for s in self.by_subject if not (isinstance(s, BNode) and s in inline)]
            stack += [b for b in self.g.bnodes() if b not in inline]
            while stack:
                node = stack.pop()
                for t in self.by_subject.get(node, ()):
                    o = t.object
                    if isinstance(o, BNode) and o in inline and o not in reached:
                        reached.add(o)
                        stack.append(o)
            stranded = sorted((b for b in inline if b not in reached), key=lambda b: self.sig[b])
            if not stranded:
                break
            inline.discard(stranded[0])
        self.inline = inline

    def term(self, t: Term, depth: int = 0) -> str:
        if isinstance(t, IRI):
            return self.iri(t)
        if isinstance(t, BNode):
            if t in self.inline:
                return self.property_list(t, depth + 1)
            if t not in self.labels:
                self.labels[t] = f"b{len(self.labels)}"
                self.label_queue.append(t)
            return "_:" + self.labels[t]
        body = '"' + _escape(t.lexical) + '"'
        if t.language:
            return body + "@" + t.language
        if t.datatype is not None:
            return body + "^^" + self.iri(t.datatype)
        return body

    def iri(self, iri: IRI, verb: bool = False) -> str:
        v = iri.value
        if verb and iri == RDF_TYPE:
            return "a"
        for prefix, ns in self.ns:
            if v.startswith(ns) and _SAFE_LOCAL.match(v[len(ns) :]):
                return f"{prefix}:{v[len(ns):]}"
        if self.base is not None and (self.scope is None or v.startswith(self.scope)):
            rel = relativize(v, self.base)
            if rel is not None:
                return f"<{rel}>"
        return f"<{v}>"

    def predicate_objects(self, node, depth: int) -> list[str]:
        triples = self.by_subject.get(node, [])
        by_pred: dict[IRI, list[Term]] = defaultdict(list)
        for t in triples:
            by_pred[t.predicate].append(t.object)
        preds = sorted(by_pred, key=lambda p: (p != RDF_TYPE, p.value))
        parts = []
        for p in preds:
            objs = sorted(by_pred[p], key=self.obj_key)
            parts.append(self.iri(p, verb=True) + " " + ", ".join(self.term(o, depth) for o in objs))
        return parts

    def property_list(self, b: BNode, depth: int) -> str:
        parts = self.predicate_objects(b, depth)
        if not parts:
            return "[]"
        return "[ " + " ; ".join(parts) + " ]"

    def block(self, head: str, node) -> str:
        parts = self.predicate_objects(node, 0)
        return head + " " + " ;\n    ".join(parts) + " ."

    def write(self) -> str:
        self.plan()
        lines = [f"@prefix {p}: <{ns}> ." for p, ns in sorted(self.g.prefixes.items())]
        blocks: list[str] = []
        iri_subjects = sorted((s for s in self.by_subject if isinstance(s, IRI)), key=term_key)
        for s in iri_subjects:
            blocks.append(self.block(self.iri(s), s))
        roots = sorted(
            (b for b in self.by_subject if isinstance(b, BNode) and b not in self.inline),
            key=lambda b: (self.obj_refs.get(b, 0) == 0, self.sig[b]),
        )
        done: set[BNode] = set()
        queue_pos = 0
        while True:
            if queue_pos < len(self.label_queue):
                b = self.label_queue[queue_pos]
                queue_pos += 1
            else:
                remaining = [b for b in roots if b not in done and b not in self.labels]
                if not remaining:
                    break
                b = remaining[0]
                if self.obj_refs.get(b, 0) == 0 and b not in self.labels:
                    done.add(b)
                    blocks.append(self.block("[]", b))
                    continue
                self.term(b)
                continue
            if b in done:
                continue
            done.add(b)
            if b in self.by_subject:
                blocks.append(self.block("_:" + self.labels[b], b))
        out = "\n".join(lines)
        if blocks:
            out += ("\n\n" if lines else "") + "\n\n".join(blocks)
        return out + "\n"


def serialize_turtle(g: Graph, base: str | IRI | None = None, scope: str | IRI | None = None) -> str:
    """Deterministic Turtle text for ``g``.

    IRIs on the same host as ``base`` (and, if given, starting with ``scope``)
    are written relative to it, so the output must be parsed against the same
    base. No ``@base`` directive is emitted, which keeps the text independent
    of where the document is stored.
    """
    if isinstance(base, IRI):
        base = base.value
    if isinstance(scope, IRI):
        scope = scope.value
    return _Writer(g, base, scope).write()
