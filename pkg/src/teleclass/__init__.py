"""Minimally supervised hierarchical multi-label text classification.

Starting from an unlabeled corpus and a class taxonomy whose only
supervision is the class names, the pipeline enriches every class with
indicative terms, pseudo-labels documents through candidate search and
LLM selection, refines the labels with embedding matching, augments rare
classes with generated documents, and trains a multi-label matching
classifier.
"""

__version__ = "0.1.0"

from teleclass.errors import (
    BackendError,
    ConfigError,
    CorpusError,
    MissingVectorError,
    ParseError,
    RateLimitError,
    StageError,
    TaxonomyError,
    TeleclassError,
    TransportError,
    VectorStoreError,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "CorpusError",
    "MissingVectorError",
    "ParseError",
    "RateLimitError",
    "StageError",
    "TaxonomyError",
    "TeleclassError",
    "TransportError",
    "VectorStoreError",
]
