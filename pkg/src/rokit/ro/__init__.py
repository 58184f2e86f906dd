"""Research Object container model and its on-disk layout."""

from rokit.ro.model import (
    ANNOTATION_AREA,
    MANIFEST_PATH,
    VIOLATION_CODES,
    AggregatedResource,
    Annotation,
    BadIdentifierError,
    DuplicateResourceError,
    ExternalContentError,
    FrozenResearchObjectError,
    ManifestError,
    ResearchObject,
    ResearchObjectError,
    UnknownResourceError,
    UnknownTargetError,
    Violation,
    build_manifest,
    create_research_object,
    load_research_object,
    manifest_json,
    serialize_manifest,
    structurally_equal,
    validate,
)

__all__ = [
    "ANNOTATION_AREA", "MANIFEST_PATH", "VIOLATION_CODES", "AggregatedResource", "Annotation",
    "BadIdentifierError", "DuplicateResourceError", "ExternalContentError",
    "FrozenResearchObjectError", "ManifestError", "ResearchObject", "ResearchObjectError",
    "UnknownResourceError", "UnknownTargetError", "Violation", "build_manifest",
    "create_research_object", "load_research_object", "manifest_json", "serialize_manifest",
    "structurally_equal", "validate",
]
