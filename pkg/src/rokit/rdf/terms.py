"""RDF terms: IRIs, blank nodes, literals and triples."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Union

_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')
_LANGTAG = re.compile(r"^[A-Za-z]+(-[A-Za-z0-9]+)*$")

_bnode_ids = itertools.count()


def is_absolute(value: str) -> bool:
    return bool(_SCHEME.match(value))


@dataclass(frozen=True, slots=True, order=True)
class IRI:
    value: str

    def __post_init__(self) -> None:
        if not isinstance(self.value, str):
            raise TypeError(f"IRI value must be str, got {type(self.value).__name__}")
        if _FORBIDDEN.search(self.value):
            raise ValueError(f"illegal character in IRI {self.value!r}")
        if not is_absolute(self.value):
            raise ValueError(f"IRI must be absolute: {self.value!r}")

    def __str__(self) -> str:
        return self.value

    def __repr__(self) -> str:
        return f"IRI({self.value!r})"


def _fresh_label() -> str:
    return f"n{next(_bnode_ids)}"


@dataclass(frozen=True, slots=True)
class BNode:
    """A blank node. Identity is the label; unlabeled nodes get a fresh one."""

    label: str = field(default_factory=_fresh_label)

    def __str__(self) -> str:
        return f"_:{self.label}"


@dataclass(frozen=True, slots=True)
class Literal:
    lexical: str
    datatype: IRI | None = None
    language: str | None = None

    def __post_init__(self) -> None:
        if self.datatype is not None and self.language is not None:
            raise ValueError("a literal cannot carry both a datatype and a language tag")
        if self.language is not None:
            if not _LANGTAG.match(self.language):
                raise ValueError(f"malformed language tag {self.language!r}")
            object.__setattr__(self, "language", self.language.lower())

    def __str__(self) -> str:
        return self.lexical


Subject = Union[IRI, BNode]
Term = Union[IRI, BNode, Literal]


class Triple(NamedTuple):
    subject: Subject
    predicate: IRI
    object: Term


def term_key(term: Term) -> tuple:
    """Total order over terms: IRIs, then blank nodes, then literals."""
    if isinstance(term, IRI):
        return (0, term.value)
    if isinstance(term, BNode):
        return (1, term.label)
    return (2, term.lexical, term.datatype.value if term.datatype else "", term.language or "")


def triple_key(t: Triple) -> tuple:
    return (term_key(t.subject), term_key(t.predicate), term_key(t.object))
