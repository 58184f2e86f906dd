"""Blank-node-aware graph isomorphism by refined backtracking search."""

from __future__ import annotations

from collections import Counter, defaultdict

from rokit.rdf.graph import Graph
from rokit.rdf.terms import BNode, Triple, term_key

DEFAULT_MAX_BNODES = 64


class IsomorphismCapacityError(ValueError):
    """The graphs hold more blank nodes than the search is allowed to handle."""


def _ground(g: Graph) -> set[Triple]:
    return {t for t in g if not isinstance(t.subject, BNode) and not isinstance(t.object, BNode)}


def _shared_colors(g1: Graph, n1: set[BNode], g2: Graph, n2: set[BNode]):
    """Refine both graphs with one shared color table so colors are comparable."""
    table: dict[tuple, int] = {}
    c1 = {b: 0 for b in n1}
    c2 = {b: 0 for b in n2}

    def k(term, color):
        return (1, color[term]) if isinstance(term, BNode) else term_key(term)

    def sig(g, b, color):
        out = sorted((t.predicate.value, k(t.object, color)) for t in g.triples(b, None, None))
        inc = sorted((t.predicate.value, k(t.subject, color)) for t in g.triples(None, None, b))
        return (color[b], tuple(out), tuple(inc))

    for _ in range(len(n1) + 1):
        s1 = {b: sig(g1, b, c1) for b in n1}
        s2 = {b: sig(g2, b, c2) for b in n2}
        new1 = {b: table.setdefault(s, len(table)) for b, s in s1.items()}
        new2 = {b: table.setdefault(s, len(table)) for b, s in s2.items()}
        stable = len(set(new1.values())) == len(set(c1.values()))
        c1, c2 = new1, new2
        if Counter(c1.values()) != Counter(c2.values()):
            return c1, c2, False
        if stable and _ > 0:
            break
    return c1, c2, True


def graph_isomorphic(g1: Graph, g2: Graph, max_bnodes: int = DEFAULT_MAX_BNODES) -> bool:
    """True iff a bijection of blank nodes maps ``g1``'s triples exactly onto ``g2``'s."""
    if len(g1) != len(g2):
        return False
    n1, n2 = g1.bnodes(), g2.bnodes()
    if max(len(n1), len(n2)) > max_bnodes:
        raise IsomorphismCapacityError(
            f"graph has {max(len(n1), len(n2))} blank nodes; limit is {max_bnodes}"
        )
    if len(n1) != len(n2):
        return False
    if _ground(g1) != _ground(g2):
        return False
    if not n1:
        return True
    c1, c2, ok = _shared_colors(g1, n1, g2, n2)
    if not ok:
        return False

    candidates: dict[int, list[BNode]] = defaultdict(list)
    for b in n2:
        candidates[c2[b]].append(b)
    # most constrained first: smallest color class, then most connected
    order = sorted(n1, key=lambda b: (len(candidates[c1[b]]), -len(list(g1.triples(b))), c1[b]))

    incident: dict[BNode, list[Triple]] = defaultdict(list)
    for t in g1:
        for term in (t.subject, t.object):
            if isinstance(term, BNode):
                incident[term].append(t)

    mapping: dict[BNode, BNode] = {}
    used: set[BNode] = set()

    def image(term):
        return mapping.get(term, term) if isinstance(term, BNode) else term

    def consistent(b: BNode) -> bool:
        for t in incident[b]:
            s, o = t.subject, t.object
            if isinstance(s, BNode) and s not in mapping:
                continue
            if isinstance(o, BNode) and o not in mapping:
                continue
            if (image(s), t.predicate, image(o)) not in g2:
                return False
        return True

    def search(i: int) -> bool:
        if i == len(order):
            return True
        b = order[i]
        for cand in candidates[c1[b]]:
            if cand in used:
                continue
            mapping[b] = cand
            used.add(cand)
            if consistent(b) and search(i + 1):
                return True
            del mapping[b]
            used.discard(cand)
        return False

    return search(0)
