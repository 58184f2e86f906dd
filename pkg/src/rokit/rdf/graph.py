"""In-memory triple set with a prefix map."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Iterator

from rokit.rdf.terms import IRI, BNode, Literal, Subject, Term, Triple, triple_key


class FrozenGraphError(RuntimeError):
    """Raised when mutating a graph that has been frozen for sharing."""


class Graph:
    """A set of triples. The prefix map is serialization sugar and never affects equality."""

    def __init__(self, triples: Iterable[tuple] = (), prefixes: dict[str, str] | None = None):
        self.prefixes: dict[str, str] = dict(prefixes or {})
        self._triples: set[Triple] = set()
        self._spo: dict[Subject, dict[IRI, set[Term]]] = defaultdict(lambda: defaultdict(set))
        self._pos: dict[IRI, dict[Term, set[Subject]]] = defaultdict(lambda: defaultdict(set))
        self._osp: dict[Term, dict[Subject, set[IRI]]] = defaultdict(lambda: defaultdict(set))
        self._frozen = False
        for t in triples:
            self.add(t)

    # -- mutation --------------------------------------------------------

    def add(self, triple: tuple) -> None:
        self._check_mutable()
        s, p, o = triple
        if not isinstance(s, (IRI, BNode)):
            raise TypeError(f"subject must be an IRI or blank node, got {s!r}")
        if not isinstance(p, IRI):
            raise TypeError(f"predicate must be an IRI, got {p!r}")
        if not isinstance(o, (IRI, BNode, Literal)):
            raise TypeError(f"object must be an RDF term, got {o!r}")
        t = Triple(s, p, o)
        if t in self._triples:
            return
        self._triples.add(t)
        self._spo[s][p].add(o)
        self._pos[p][o].add(s)
        self._osp[o][s].add(p)

    def update(self, triples: Iterable[tuple]) -> None:
        for t in triples:
            self.add(t)

    def discard(self, triple: tuple) -> None:
        self._check_mutable()
        t = Triple(*triple)
        if t not in self._triples:
            return
        self._triples.remove(t)
        s, p, o = t
        _prune(self._spo, s, p, o)
        _prune(self._pos, p, o, s)
        _prune(self._osp, o, s, p)

    def bind(self, prefix: str, namespace: str) -> None:
        self.prefixes[prefix] = namespace

    def freeze(self) -> "Graph":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenGraphError("graph is frozen")

    # -- access ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, triple: object) -> bool:
        return isinstance(triple, tuple) and Triple(*triple) in self._triples

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self._triples == other._triples

    def __repr__(self) -> str:
        return f"<Graph with {len(self)} triples>"

    def copy(self) -> "Graph":
        return Graph(self._triples, self.prefixes)

    def sorted(self) -> list[Triple]:
        return sorted(self._triples, key=triple_key)

    def triples(self, s=None, p=None, o=None) -> Iterator[Triple]:
        """Yield triples matching the bound positions; ``None`` is a wildcard."""
        if s is not None:
            by_p = self._spo.get(s)
            if not by_p:
                return
            preds = [p] if p is not None else list(by_p)
            for pp in preds:
                objs = by_p.get(pp, ())
                if o is not None:
                    if o in objs:
                        yield Triple(s, pp, o)
                else:
                    for oo in list(objs):
                        yield Triple(s, pp, oo)
        elif p is not None:
            by_o = self._pos.get(p)
            if not by_o:
                return
            objs = [o] if o is not None else list(by_o)
            for oo in objs:
                for ss in list(by_o.get(oo, ())):
                    yield Triple(ss, p, oo)
        elif o is not None:
            for ss, preds in list(self._osp.get(o, {}).items()):
                for pp in list(preds):
                    yield Triple(ss, pp, o)
        else:
            yield from list(self._triples)

    def objects(self, s=None, p=None) -> list[Term]:
        return [t.object for t in self.triples(s, p, None)]

    def subjects(self, p=None, o=None) -> list[Subject]:
        return [t.subject for t in self.triples(None, p, o)]

    def value(self, s, p, default=None):
        """The single object of ``(s, p, ?)``; ``default`` when absent."""
        objs = self.objects(s, p)
        if not objs:
            return default
        if len(objs) > 1:
            raise ValueError(f"multiple values for {s} {p}")
        return objs[0]

    def bnodes(self) -> set[BNode]:
        found: set[BNode] = set()
        for s, _, o in self._triples:
            if isinstance(s, BNode):
                found.add(s)
            if isinstance(o, BNode):
                found.add(o)
        return found


def _prune(index, a, b, c) -> None:
    inner = index[a]
    inner[b].discard(c)
    if not inner[b]:
        del inner[b]
    if not inner:
        del index[a]


def match_pattern(g: Graph, s=None, p=None, o=None) -> list[Triple]:
    """All triples of ``g`` matching the pattern, in deterministic order."""
    return sorted(g.triples(s, p, o), key=triple_key)


def merge(g1: Graph, g2: Graph) -> Graph:
    """Union of two graphs; blank nodes of ``g2`` that clash with ``g1`` are relabeled."""
    g1_labels = {b.label for b in g1.bnodes()}
    g2_nodes = g2.bnodes()
    taken = g1_labels | {b.label for b in g2_nodes}
    rename: dict[BNode, BNode] = {}
    for b in g2_nodes:
        if b.label in g1_labels:
            fresh = BNode()
            while fresh.label in taken:
                fresh = BNode()
            taken.add(fresh.label)
            rename[b] = fresh
    out = Graph(g1, {**g2.prefixes, **g1.prefixes})
    for s, p, o in g2:
        out.add((rename.get(s, s), p, rename.get(o, o)))
    return out
