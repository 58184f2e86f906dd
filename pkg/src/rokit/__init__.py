"""Research Object toolkit: aggregation, annotation, evolution, workflows and provenance."""

__version__ = "0.1.0"
