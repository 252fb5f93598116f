"""Solver-guided iterative repair.

When a candidate fails validation, the loop builds an error context from
the solver feedback, retrieves the most relevant correction exemplar in
two stages (embedding shortlist, then profile re-rank), shows the LLM the
exemplar's incorrect code / correction path / correct code next to the
failing model, and re-validates. At most max_rounds repair generations.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import EmptyResponseError, EmptyStoreError, ZeroVectorError
from .gateway import extract_code_block
from .harness import (
    CandidateModel,
    EvalResult,
    TestCase,
    failing_status_lines,
    summarize_feedback,
)
from .ontology import ConstraintProfile, Ontology, scan_profile
from .retrieval import jaccard_similarity
from .store import CorrectionExemplar, CorrectionStore, cosine_similarity

log = logging.getLogger(__name__)


@dataclass
class CorrectionConfig:
    max_rounds: int = 4
    shortlist_k: int = 4

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.shortlist_k < 1:
            raise ValueError("shortlist_k must be >= 1")


@dataclass
class ErrorContext:
    incorrect_code: str
    feedback: str
    inferred_profile: ConstraintProfile
    embedding: list[float]


@dataclass
class ExemplarSelection:
    exemplar: CorrectionExemplar
    embedding_score: float
    profile_score: float


@dataclass
class CorrectionOutcome:
    solved: bool
    model: CandidateModel
    rounds_used: int
    evaluations: list[EvalResult] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    # wall time of each context-build + exemplar-selection op, for cost accounting
    op_walls_ms: list[float] = field(default_factory=list)


def build_error_context(
    candidate: CandidateModel,
    result: EvalResult,
    cases: list[TestCase],
    problem_profile: ConstraintProfile,
    ontology: Ontology,
    gateway,
) -> ErrorContext:
    """Error context for retrieval: solver feedback plus failing status
    lines are what gets embedded (code bodies would swamp the error
    signal); the profile is the problem's profile augmented with any
    constraint names the feedback mentions."""
    feedback = summarize_feedback(result, cases)
    failing = failing_status_lines(result, cases)
    embed_text = feedback + "\n" + "\n".join(failing)
    return ErrorContext(
        incorrect_code=candidate.source,
        feedback=feedback,
        inferred_profile=problem_profile.union(scan_profile(feedback, ontology)),
        embedding=gateway.embed(embed_text),
    )


def _safe_cosine(u: list[float], v: list[float] | None) -> float:
    if v is None:
        return 0.0
    try:
        return cosine_similarity(u, v)
    except ZeroVectorError:
        return 0.0


def select_correction_exemplar(
    c_err: ErrorContext,
    store: CorrectionStore,
    cfg: CorrectionConfig,
) -> ExemplarSelection:
    """Two-stage selection.

    Stage 1 shortlists the top shortlist_k exemplars by cosine similarity
    between the error embedding and each exemplar's error embedding.
    Stage 2 picks the shortlist entry with the highest profile Jaccard
    similarity; ties fall back to the stage-1 score, then store order.
    """
    if len(store) == 0:
        raise EmptyStoreError("correction store is empty")

    stage1 = [
        (_safe_cosine(c_err.embedding, ex.error_embedding), idx, ex)
        for idx, ex in enumerate(store)
    ]
    stage1.sort(key=lambda t: (-t[0], t[1]))
    shortlist = stage1[: cfg.shortlist_k]

    ranked = sorted(
        shortlist,
        key=lambda t: (
            -jaccard_similarity(c_err.inferred_profile, t[2].profile or ConstraintProfile()),
            -t[0],
            t[1],
        ),
    )
    cos_score, _, exemplar = ranked[0]
    return ExemplarSelection(
        exemplar=exemplar,
        embedding_score=cos_score,
        profile_score=jaccard_similarity(
            c_err.inferred_profile, exemplar.profile or ConstraintProfile()
        ),
    )


def correction_round(
    problem_description: str,
    current: CandidateModel,
    c_err: ErrorContext,
    exemplar: CorrectionExemplar,
    gateway,
    round_no: int,
) -> CandidateModel:
    """One repair generation guided by the selected exemplar."""
    response = gateway.complete(
        "correction",
        {
            "problem": problem_description,
            "incorrect_code": current.source,
            "solver_feedback": c_err.feedback,
            "exemplar_description": exemplar.description,
            "exemplar_incorrect_code": exemplar.incorrect_code,
            "exemplar_correction_path": exemplar.correction_path,
            "exemplar_correct_code": exemplar.correct_code,
        },
    )
    code = extract_code_block(response.text)
    return CandidateModel(
        source=code.source,
        prompt_id="correction",
        round=round_no,
        exemplar_id=exemplar.id,
        unfenced=code.unfenced,
        completion_tokens=response.completion_tokens,
    )


def _goal_reached(result: EvalResult, solved_rule: str) -> bool:
    return result.any_pass if solved_rule == "any" else result.all_pass


def correction_loop(
    problem_description: str,
    initial: CandidateModel,
    cases: list[TestCase],
    store: CorrectionStore,
    cfg: CorrectionConfig,
    gateway,
    evaluate,
    ontology: Ontology,
    problem_profile: ConstraintProfile,
    initial_eval: EvalResult | None = None,
    solved_rule: str = "all",
) -> CorrectionOutcome:
    """Repair until the goal is reached or max_rounds is exhausted.

    ``evaluate`` maps a CandidateModel to an EvalResult. On failure the
    best-scoring candidate (not the last one) is reported, with every
    evaluation and a per-round trace attached.
    """
    current = initial
    result = initial_eval if initial_eval is not None else evaluate(initial)
    evaluations = [result]
    attempts: list[tuple[CandidateModel, EvalResult]] = [(initial, result)]
    trace: list[dict] = []
    op_walls: list[float] = []
    rounds_used = 0

    while not _goal_reached(result, solved_rule) and rounds_used < cfg.max_rounds:
        op_start = time.perf_counter()
        c_err = build_error_context(current, result, cases, problem_profile, ontology, gateway)
        selection = select_correction_exemplar(c_err, store, cfg)
        op_walls.append((time.perf_counter() - op_start) * 1000.0)
        rounds_used += 1
        entry = {
            "round": rounds_used,
            "exemplar_id": selection.exemplar.id,
            "embedding_score": selection.embedding_score,
            "profile_score": selection.profile_score,
        }
        try:
            current = correction_round(
                problem_description, current, c_err, selection.exemplar, gateway, rounds_used
            )
        except EmptyResponseError as exc:
            # round is consumed; there is no new candidate to evaluate
            entry["error"] = str(exc)
            trace.append(entry)
            log.warning("correction round %d produced no code: %s", rounds_used, exc)
            continue
        result = evaluate(current)
        evaluations.append(result)
        attempts.append((current, result))
        entry["score"] = result.score
        entry["verdicts"] = [v.status.value for v in result.verdicts]
        trace.append(entry)

    if _goal_reached(result, solved_rule):
        return CorrectionOutcome(
            solved=True,
            model=current,
            rounds_used=rounds_used,
            evaluations=evaluations,
            trace=trace,
            op_walls_ms=op_walls,
        )
    best_idx = max(range(len(attempts)), key=lambda i: (attempts[i][1].score, -i))
    best_model = attempts[best_idx][0]
    return CorrectionOutcome(
        solved=False,
        model=best_model,
        rounds_used=rounds_used,
        evaluations=evaluations,
        trace=trace,
        op_walls_ms=op_walls,
    )
