"""End-to-end orchestration of one problem.

Five modes share one report shape:

  direct    ask for the final answer; verifiable only through checkers
  cot       one-shot chain-of-thought prompt, single generation
  rag       embedding retrieval, four-shot prompt, single generation
  carm      profile extraction, profile-ranked retrieval, generation,
            then the guided correction loop
  carm_tot  like carm, but tree search replaces the single generation

Baseline modes (direct/cot/rag) never enter tree search or correction.
solve_problem never raises past the report boundary: infrastructure
failures become INFRA_ERROR reports.
"""

from __future__ import annotations

import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .correction import CorrectionConfig, correction_loop
from .errors import AllBranchesFailedError, CpforgeError, GatewayError, RunnerUnavailableError
from .gateway import LlmGateway, extract_code_block
from .harness import (
    CandidateModel,
    EvalLimits,
    EvalResult,
    Expectation,
    TestCase,
    Verdict,
    VerdictStatus,
    case_passes,
    evaluate_candidate,
)
from .ontology import Ontology
from .retrieval import RetrievalConfig, carm_retrieve, extract_profile
from .store import CorrectionStore, Exemplar, ExemplarStore, rag_retrieve
from .tot import ToTConfig, explore

log = logging.getLogger(__name__)

MODES = ("direct", "cot", "rag", "carm", "carm_tot")


class Outcome(str, Enum):
    SOLVED = "SOLVED"
    FAILED = "FAILED"
    INFRA_ERROR = "INFRA_ERROR"


@dataclass
class ProblemStatement:
    id: str
    category: str
    description: str
    input_format: str = ""
    test_cases: list[TestCase] = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "ProblemStatement":
        cases = [
            TestCase(
                name=c["name"],
                data=c.get("data"),
                expectation=Expectation.from_dict(c["expectation"]),
            )
            for c in raw.get("test_cases", [])
        ]
        problem = cls(
            id=str(raw["id"]),
            category=raw.get("category", ""),
            description=raw["description"],
            input_format=raw.get("input_format", ""),
            test_cases=cases,
        )
        if not 2 <= len(cases) <= 5:
            log.warning(
                "problem %s has %d test cases (benchmark problems carry 2-5)",
                problem.id,
                len(cases),
            )
        return problem

    @classmethod
    def from_file(cls, path: str | Path) -> "ProblemStatement":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    def prompt_text(self) -> str:
        if self.input_format.strip():
            return f"{self.description}\n\nInput Format:\n{self.input_format}"
        return self.description


@dataclass
class ProblemTiming:
    wall_ms: float = 0.0
    gen_wall_ms: float = 0.0
    solver_wall_ms: float = 0.0
    carm_wall_ms: float = 0.0
    max_tokens_per_call: int = 0
    max_s_per_token: float = 0.0
    max_solver_round_s: float = 0.0
    max_carm_op_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "wall_ms": self.wall_ms,
            "gen_wall_ms": self.gen_wall_ms,
            "solver_wall_ms": self.solver_wall_ms,
            "carm_wall_ms": self.carm_wall_ms,
            "max_tokens_per_call": self.max_tokens_per_call,
            "max_s_per_token": self.max_s_per_token,
            "max_solver_round_s": self.max_solver_round_s,
            "max_carm_op_s": self.max_carm_op_s,
        }

    @property
    def accounted_wall_ms(self) -> float:
        """Wall time in the modeled cost components (generation, solver,
        retrieval); bookkeeping overhead is reported via wall_ms."""
        return self.gen_wall_ms + self.solver_wall_ms + self.carm_wall_ms


@dataclass
class ProblemReport:
    problem_id: str
    category: str
    mode: str
    outcome: Outcome
    profile: list[str] = field(default_factory=list)
    analyzer_response: str | None = None
    retrieval_fallback: bool = False
    retrieved: list[tuple[str, float]] = field(default_factory=list)
    tree_trace: list[dict] | None = None
    correction_trace: list[dict] = field(default_factory=list)
    rounds_used: int = 0
    evaluations: list[dict] = field(default_factory=list)
    ledger: dict = field(default_factory=dict)
    generation_calls: int = 0
    solver_rounds: int = 0
    carm_ops: int = 0
    unverifiable: bool = False
    error: str | None = None
    timing: ProblemTiming = field(default_factory=ProblemTiming)

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "problem_id": self.problem_id,
            "category": self.category,
            "mode": self.mode,
            "outcome": self.outcome.value,
            "profile": self.profile,
            "analyzer_response": self.analyzer_response,
            "retrieval": {"fallback": self.retrieval_fallback, "items": self.retrieved},
            "tree_trace": self.tree_trace,
            "correction_trace": self.correction_trace,
            "rounds_used": self.rounds_used,
            "evaluations": self.evaluations,
            "calls": dict(
                self.ledger,
                generation_calls=self.generation_calls,
                solver_rounds=self.solver_rounds,
                carm_ops=self.carm_ops,
            ),
            "unverifiable": self.unverifiable,
            "error": self.error,
        }
        if include_timing:
            doc["timing"] = self.timing.to_dict()
        return doc


@dataclass
class Runtime:
    """Everything solve_problem needs, resolved once by the composition root."""

    gateway: LlmGateway
    ontology: Ontology
    kb_store: ExemplarStore | None = None
    correction_store: CorrectionStore | None = None
    runner: object | None = None
    retrieval_cfg: RetrievalConfig = field(default_factory=RetrievalConfig)
    correction_cfg: CorrectionConfig = field(default_factory=CorrectionConfig)
    tot_cfg: ToTConfig = field(default_factory=ToTConfig)
    limits: EvalLimits = field(default_factory=EvalLimits)
    solved_rule: str = "all"


def assemble_examples(exemplars: list[Exemplar]) -> str:
    """Few-shot block in the fixed reference format."""
    parts = []
    for i, ex in enumerate(exemplars, start=1):
        parts.append(f"### Example {i}\nProblem: {ex.description}\nCode: {ex.solution_code}")
    return "\n\n".join(parts) if parts else "(no reference examples available)"


def _goal_reached(result: EvalResult, solved_rule: str) -> bool:
    return result.any_pass if solved_rule == "any" else result.all_pass


def _eval_summary(result: EvalResult) -> dict:
    return {
        "passed": list(result.passed),
        "statuses": [v.status.value for v in result.verdicts],
        "score": result.score,
    }


class _Tracker:
    """Per-problem accounting around the scoped gateway and the runner."""

    def __init__(self, gateway: LlmGateway, runtime: Runtime, problem: ProblemStatement):
        self.gateway = gateway
        self.runtime = runtime
        self.problem = problem
        self.eval_results: list[EvalResult] = []
        self.carm_walls_ms: list[float] = []

    def evaluate(self, candidate: CandidateModel) -> EvalResult:
        result = evaluate_candidate(
            candidate, self.problem.test_cases, self.runtime.limits, self.runtime.runner
        )
        self.eval_results.append(result)
        return result

    def timed_carm(self, fn, *args, **kwargs):
        start = time.perf_counter()
        out = fn(*args, **kwargs)
        self.carm_walls_ms.append((time.perf_counter() - start) * 1000.0)
        return out


def _finish_report(
    report: ProblemReport,
    tracker: _Tracker,
    gateway: LlmGateway,
    started: float,
) -> ProblemReport:
    report.ledger = gateway.ledger.snapshot()
    calls = gateway.ledger.calls
    gen_calls = [c for c in calls if c.kind == "llm" and c.template_id != "analyzer"]
    report.generation_calls = len(gen_calls)
    report.solver_rounds = len(tracker.eval_results)
    carm_walls = list(tracker.carm_walls_ms)
    report.carm_ops = len(carm_walls)
    if tracker.eval_results:
        report.evaluations = [_eval_summary(r) for r in tracker.eval_results]

    t = report.timing
    t.wall_ms = (time.perf_counter() - started) * 1000.0
    t.gen_wall_ms = sum(c.wall_ms for c in gen_calls)
    t.solver_wall_ms = sum(r.solver_wall_ms for r in tracker.eval_results)
    # extract_profile's wall is measured around the whole op and already
    # includes the analyzer call, so analyzer walls are not added twice.
    t.carm_wall_ms = sum(carm_walls)
    llm_calls = [c for c in calls if c.kind == "llm"]
    if llm_calls:
        t.max_tokens_per_call = max(c.completion_tokens for c in llm_calls)
        t.max_s_per_token = max(
            (c.wall_ms / 1000.0) / max(c.completion_tokens, 1) for c in llm_calls
        )
    if tracker.eval_results:
        t.max_solver_round_s = max(r.solver_wall_ms for r in tracker.eval_results) / 1000.0
    if carm_walls:
        t.max_carm_op_s = max(carm_walls) / 1000.0
    return report


def _run_direct(problem, gateway, tracker, report, rt) -> Outcome:
    response = gateway.complete("direct", {"problem": problem.prompt_text()})
    answer = response.text
    verdict = Verdict(status=VerdictStatus.SAT, solution=answer, solver_log="direct answer")
    passed = []
    for case in problem.test_cases:
        if case.expectation.kind == "checker":
            passed.append(case_passes(case, verdict))
        else:
            report.unverifiable = True
            passed.append(False)
    result = EvalResult(verdicts=[verdict] * len(problem.test_cases), passed=passed)
    report.evaluations = [_eval_summary(result)]
    return Outcome.SOLVED if _goal_reached(result, rt.solved_rule) else Outcome.FAILED


def _run_single_shot(problem, gateway, tracker, report, rt, mode: str) -> Outcome:
    if mode == "cot":
        prompt_slots = {"problem": problem.prompt_text()}
        template = "cot_one_shot"
    else:  # rag
        # fetch one extra so dropping the query problem itself still fills k
        items = tracker.timed_carm(
            rag_retrieve,
            problem.prompt_text(),
            rt.kb_store,
            rt.retrieval_cfg.top_k + 1,
            gateway,
        )
        items = [(ex, score) for ex, score in items if ex.id != problem.id][: rt.retrieval_cfg.top_k]
        report.retrieved = [(ex.id, score) for ex, score in items]
        prompt_slots = {
            "problem": problem.prompt_text(),
            "examples": assemble_examples([ex for ex, _ in items]),
        }
        template = "rag_few_shot"
    response = gateway.complete(template, prompt_slots)
    code = extract_code_block(response.text)
    candidate = CandidateModel(
        source=code.source,
        prompt_id=template,
        unfenced=code.unfenced,
        completion_tokens=response.completion_tokens,
    )
    result = tracker.evaluate(candidate)
    return Outcome.SOLVED if _goal_reached(result, rt.solved_rule) else Outcome.FAILED


def _run_carm(problem, gateway, tracker, report, rt, with_tree: bool) -> Outcome:
    def extract_and_retrieve():
        extraction = extract_profile(problem.prompt_text(), gateway, rt.ontology)
        retrieval = carm_retrieve(
            extraction.profile,
            rt.kb_store,
            rt.retrieval_cfg,
            query_text=problem.prompt_text(),
            embedder=gateway,
            exclude_ids={problem.id},
        )
        return extraction, retrieval

    # profile extraction + ranking count (and are timed) as one retrieval op
    extraction, retrieval = tracker.timed_carm(extract_and_retrieve)
    profile = extraction.profile
    report.profile = profile.names()
    report.analyzer_response = extraction.raw_response
    report.retrieval_fallback = retrieval.used_fallback
    report.retrieved = [(ex.id, score) for ex, score in retrieval.items]
    examples_text = assemble_examples(retrieval.exemplars())

    initial: CandidateModel | None = None
    initial_eval: EvalResult | None = None

    if with_tree:
        try:
            explored = explore(
                problem.prompt_text(),
                examples_text,
                rt.tot_cfg,
                gateway,
                tracker.evaluate,
                total_cases=len(problem.test_cases),
            )
            report.tree_trace = explored.trace()
            initial = explored.best
            initial_eval = explored.best_node.eval
        except AllBranchesFailedError as exc:
            report.tree_trace = exc.trace
            if exc.best_candidate is None:
                raise GatewayError("every tree node failed to generate")
            initial = exc.best_candidate
            initial_eval = exc.best_eval
    else:
        response = gateway.complete(
            "carm_few_shot",
            {"problem": problem.prompt_text(), "examples": examples_text},
        )
        code = extract_code_block(response.text)
        initial = CandidateModel(
            source=code.source,
            prompt_id="carm_few_shot",
            unfenced=code.unfenced,
            completion_tokens=response.completion_tokens,
        )
        initial_eval = tracker.evaluate(initial)

    if initial_eval is not None and _goal_reached(initial_eval, rt.solved_rule):
        return Outcome.SOLVED

    outcome = correction_loop(
        problem.prompt_text(),
        initial,
        problem.test_cases,
        rt.correction_store,
        rt.correction_cfg,
        gateway,
        tracker.evaluate,
        rt.ontology,
        profile,
        initial_eval=initial_eval,
        solved_rule=rt.solved_rule,
    )
    report.correction_trace = outcome.trace
    report.rounds_used = outcome.rounds_used
    tracker.carm_walls_ms.extend(outcome.op_walls_ms)
    return Outcome.SOLVED if outcome.solved else Outcome.FAILED


def solve_problem(problem: ProblemStatement, mode: str, rt: Runtime) -> ProblemReport:
    """Run one problem through the requested mode and return its report."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    gateway = rt.gateway.scoped()
    tracker = _Tracker(gateway, rt, problem)
    report = ProblemReport(
        problem_id=problem.id, category=problem.category, mode=mode, outcome=Outcome.FAILED
    )
    started = time.perf_counter()

    try:
        if mode == "direct":
            report.outcome = _run_direct(problem, gateway, tracker, report, rt)
        elif mode in ("cot", "rag"):
            report.outcome = _run_single_shot(problem, gateway, tracker, report, rt, mode)
        else:
            report.outcome = _run_carm(problem, gateway, tracker, report, rt, mode == "carm_tot")
    except RunnerUnavailableError as exc:
        report.outcome = Outcome.INFRA_ERROR
        report.error = f"runner unavailable: {exc}"
    except GatewayError as exc:
        report.outcome = Outcome.INFRA_ERROR
        report.error = f"gateway failure: {exc}"
    except CpforgeError as exc:
        report.outcome = Outcome.INFRA_ERROR
        report.error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # report boundary: nothing escapes
        log.error("unexpected failure on problem %s", problem.id, exc_info=True)
        report.outcome = Outcome.INFRA_ERROR
        report.error = f"unexpected: {exc}\n{traceback.format_exc(limit=5)}"

    return _finish_report(report, tracker, gateway, started)
