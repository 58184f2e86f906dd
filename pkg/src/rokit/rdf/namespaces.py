"""Vocabulary namespaces used across the toolkit."""

from __future__ import annotations

from rokit.rdf.terms import IRI


class Namespace:
    """Mints IRIs under a fixed namespace: ``RO.ResearchObject`` or ``RO["Resource"]``."""

    def __init__(self, base: str):
        self.base = base

    def __getitem__(self, local: str) -> IRI:
        return IRI(self.base + local)

    def __getattr__(self, local: str) -> IRI:
        if local.startswith("__"):
            raise AttributeError(local)
        return IRI(self.base + local)

    def __contains__(self, iri: object) -> bool:
        return isinstance(iri, IRI) and iri.value.startswith(self.base)

    def __repr__(self) -> str:
        return f"Namespace({self.base!r})"


RDF = Namespace("http://www.w3.org/1999/02/22-rdf-syntax-ns#")
RDFS = Namespace("http://www.w3.org/2000/01/rdf-schema#")
XSD = Namespace("http://www.w3.org/2001/XMLSchema#")
DCT = Namespace("http://purl.org/dc/terms/")
FOAF = Namespace("http://xmlns.com/foaf/0.1/")
ORE = Namespace("http://www.openarchives.org/ore/terms/")
AO = Namespace("http://purl.org/ao/")
PROV = Namespace("http://www.w3.org/ns/prov#")
RO = Namespace("http://purl.org/net/wf4ever/ro#")
ROEVO = Namespace("http://purl.org/wf4ever/roevo#")
WFDESC = Namespace("http://purl.org/wf4ever/wfdesc#")
WFPROV = Namespace("http://purl.org/wf4ever/wfprov#")
# toolkit extension terms (hypothesis/conclusion roles, step implementation hints)
ROKIT = Namespace("https://w3id.org/rokit/terms#")

RDF_TYPE = RDF.type

STANDARD_PREFIXES: dict[str, str] = {
    "rdf": RDF.base,
    "rdfs": RDFS.base,
    "xsd": XSD.base,
    "dct": DCT.base,
    "foaf": FOAF.base,
    "ore": ORE.base,
    "ao": AO.base,
    "prov": PROV.base,
    "ro": RO.base,
    "roevo": ROEVO.base,
    "wfdesc": WFDESC.base,
    "wfprov": WFPROV.base,
    "rokit": ROKIT.base,
}


def expand_curie(text: str, prefixes: dict[str, str] | None = None) -> IRI:
    """Expand ``prefix:local`` or ``<iri>`` or a bare absolute IRI."""
    if text.startswith("<") and text.endswith(">"):
        return IRI(text[1:-1])
    prefixes = STANDARD_PREFIXES if prefixes is None else prefixes
    prefix, sep, local = text.partition(":")
    if sep and prefix in prefixes and not local.startswith("//"):
        return IRI(prefixes[prefix] + local)
    return IRI(text)
