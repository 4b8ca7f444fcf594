"""Measure what papers contribute (from citation contexts) against how their
authors divided the labor (from contribution statements)."""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    PLACEHOLDER,
    AuthorName,
    CitationContext,
    ContributionType,
    Corpus,
    CreditRole,
    PaperRecord,
    derive_initial_forms,
    load_corpus,
)
