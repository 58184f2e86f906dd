"""Minimal RDF model: terms, graphs, Turtle, isomorphism."""

from rokit.rdf.graph import FrozenGraphError, Graph, match_pattern, merge
from rokit.rdf.isomorphism import IsomorphismCapacityError, graph_isomorphic
from rokit.rdf.namespaces import (
    AO,
    DCT,
    ORE,
    PROV,
    RDF,
    RDF_TYPE,
    RDFS,
    RO,
    ROEVO,
    ROKIT,
    STANDARD_PREFIXES,
    WFDESC,
    WFPROV,
    XSD,
    Namespace,
    expand_curie,
)
from rokit.rdf.terms import IRI, BNode, Literal, Triple, term_key, triple_key
from rokit.rdf.turtle import MEDIA_TYPE, TurtleSyntaxError, parse_turtle, serialize_turtle

__all__ = [
    "AO", "DCT", "IRI", "MEDIA_TYPE", "ORE", "PROV", "RDF", "RDFS", "RDF_TYPE", "RO", "ROEVO",
    "ROKIT", "STANDARD_PREFIXES", "WFDESC", "WFPROV", "XSD", "BNode", "FrozenGraphError", "Graph",
    "IsomorphismCapacityError", "Literal", "Namespace", "Triple", "TurtleSyntaxError",
    "expand_curie", "graph_isomorphic", "match_pattern", "merge", "parse_turtle",
    "serialize_turtle", "term_key", "triple_key",
]
