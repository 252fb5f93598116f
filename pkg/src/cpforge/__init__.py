"""LLM-assisted constraint-model generation.

Turns natural-language constraint problems into candidate solver model
programs: profile-based exemplar retrieval feeds few-shot generation, a
solver-scored tree search explores modeling alternatives, and a guided
correction loop repairs failures. A scripted backend and a stub runner
make the whole pipeline testable offline.
"""

from .ontology import (
    ConstraintProfile,
    ConstraintType,
    Ontology,
    load_ontology,
    normalize_constraint_name,
    parse_profile,
)
from .retrieval import (
    RetrievalConfig,
    carm_retrieve,
    extract_profile,
    jaccard_similarity,
)
from .store import (
    CorrectionExemplar,
    CorrectionStore,
    Exemplar,
    ExemplarStore,
    cosine_similarity,
    load_store,
    rag_retrieve,
    save_store,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintProfile",
    "ConstraintType",
    "CorrectionExemplar",
    "CorrectionStore",
    "Exemplar",
    "ExemplarStore",
    "Ontology",
    "RetrievalConfig",
    "carm_retrieve",
    "cosine_similarity",
    "extract_profile",
    "jaccard_similarity",
    "load_ontology",
    "load_store",
    "normalize_constraint_name",
    "parse_profile",
    "rag_retrieve",
    "save_store",
]
