"""Constraint-aware retrieval: profile extraction and Jaccard ranking.

Retrieval matches problems on their constraint profiles rather than on
surface text: an analyzer call turns the description into a profile, and
exemplars are ranked by Jaccard similarity between profiles. An empty
query profile carries no signal, so it falls back to plain embedding
retrieval when configured to.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import EmptyStoreError, ProfileParseError
from .ontology import ConstraintProfile, Ontology, parse_profile
from .store import Exemplar, ExemplarStore, rag_retrieve

log = logging.getLogger(__name__)


@dataclass
class RetrievalConfig:
    top_k: int = 4
    empty_profile_fallback: str = "rag"  # "rag" | "error"

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.empty_profile_fallback not in ("rag", "error"):
            raise ValueError("empty_profile_fallback must be 'rag' or 'error'")


@dataclass
class ProfileExtraction:
    """Profile plus the raw analyzer output for the problem trace."""

    profile: ConstraintProfile
    raw_response: str
    parse_warning: str | None = None


@dataclass
class RetrievalResult:
    items: list[tuple[Exemplar, float]] = field(default_factory=list)
    used_fallback: bool = False

    def exemplars(self) -> list[Exemplar]:
        return [ex for ex, _ in self.items]


def extract_profile(
    problem_description: str,
    gateway,
    ontology: Ontology,
) -> ProfileExtraction:
    """One analyzer call, parsed into a constraint profile.

    Gateway errors propagate; a structurally unparseable analyzer reply
    is downgraded to an empty profile with a warning in the trace.
    """
    if not problem_description.strip():
        raise ValueError("problem description must be non-empty")
    response = gateway.complete("analyzer", {"problem": problem_description})
    try:
        profile = parse_profile(response.text, ontology)
        warning = None
    except ProfileParseError as exc:
        profile = ConstraintProfile()
        warning = str(exc)
        log.warning("analyzer output unparseable, using empty profile: %s", exc)
    return ProfileExtraction(profile=profile, raw_response=response.text, parse_warning=warning)


def jaccard_similarity(a: ConstraintProfile, b: ConstraintProfile) -> float:
    """|a ∩ b| / |a ∪ b|; two empty profiles score 0 (0/0 carries no signal)."""
    union = a.types | b.types
    if not union:
        return 0.0
    return len(a.types & b.types) / len(union)


def carm_retrieve(
    query_profile: ConstraintProfile,
    store: ExemplarStore,
    cfg: RetrievalConfig,
    query_text: str | None = None,
    embedder=None,
    exclude_ids: set[str] | None = None,
) -> RetrievalResult:
    """Rank the store by profile Jaccard similarity and return the top-k.

    Ties break by store order. Exemplars whose id is in exclude_ids are
    dropped before ranking (keeps benchmark queries from retrieving
    themselves). An empty query profile delegates to rag_retrieve on the
    raw description when the fallback is enabled, and the result is
    tagged as a fallback.
    """
    exclude_ids = exclude_ids or set()
    candidates = [ex for ex in store if ex.id not in exclude_ids]
    if not candidates:
        raise EmptyStoreError("no exemplars available for retrieval")

    if not query_profile:
        if cfg.empty_profile_fallback == "error":
            raise EmptyStoreError("query profile is empty and fallback is disabled")
        if query_text is None or embedder is None:
            raise ValueError(
                "empty profile requires query_text and an embedder for the rag fallback"
            )
        sub = ExemplarStore(
            exemplars=candidates,
            embedding_dim=store.embedding_dim,
            source_path=store.source_path,
        )
        items = rag_retrieve(query_text, sub, cfg.top_k, embedder)
        return RetrievalResult(items=items, used_fallback=True)

    scored = [
        (jaccard_similarity(query_profile, ex.profile or ConstraintProfile()), idx, ex)
        for idx, ex in enumerate(candidates)
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[: cfg.top_k]
    return RetrievalResult(items=[(ex, score) for score, _, ex in top], used_fallback=False)
