"""Candidate evaluation against a problem's test cases.

A candidate model is scored by running every test case through the
runner shim and counting passes; that count is the branch score used by
the tree search. Pass/fail is strict: a case passes only when the
normalized verdict matches its declared expectation.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

LOG_EXCERPT_CHARS = 2000
OBJECTIVE_REL_TOL = 1e-6


class VerdictStatus(str, Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    TIMEOUT = "TIMEOUT"
    RUNTIME_ERROR = "RUNTIME_ERROR"
    PROTOCOL_ERROR = "PROTOCOL_ERROR"


@dataclass
class Verdict:
    status: VerdictStatus
    solution: object = None
    objective: float | int | None = None
    solver_log: str = ""
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "solution": self.solution,
            "objective": self.objective,
            "solver_log": self.solver_log,
            "wall_ms": self.wall_ms,
        }


@dataclass
class Expectation:
    """One of: objective_equals (value), satisfiable (bool), checker (command)."""

    kind: str
    value: object

    @classmethod
    def from_dict(cls, raw: dict) -> "Expectation":
        known = ("objective_equals", "satisfiable", "checker")
        keys = [k for k in known if k in raw]
        if len(keys) != 1:
            raise ValueError(f"expectation must declare exactly one of {known}, got {raw!r}")
        return cls(kind=keys[0], value=raw[keys[0]])

    def to_dict(self) -> dict:
        return {self.kind: self.value}


@dataclass
class TestCase:
    __test__ = False  # domain type, not a pytest class

    name: str
    data: object
    expectation: Expectation


@dataclass
class CandidateModel:
    """Generated model source plus provenance."""

    source: str
    prompt_id: str = ""
    round: int = 0
    node_id: str | None = None
    exemplar_id: str | None = None
    unfenced: bool = False
    completion_tokens: int = 0


@dataclass
class EvalResult:
    verdicts: list[Verdict] = field(default_factory=list)
    passed: list[bool] = field(default_factory=list)

    @property
    def score(self) -> int:
        return sum(self.passed)

    @property
    def all_pass(self) -> bool:
        return bool(self.passed) and all(self.passed)

    @property
    def any_pass(self) -> bool:
        return any(self.passed)

    @property
    def solver_wall_ms(self) -> float:
        return sum(v.wall_ms for v in self.verdicts)


@dataclass
class EvalLimits:
    time_limit_s: float = 20.0
    memory_mb: int | None = None
    max_parallel: int = 1


def _objectives_match(expected, got) -> bool:
    if got is None:
        return False
    if isinstance(expected, int) and float(got).is_integer():
        return int(got) == expected
    try:
        expected_f = float(expected)
        got_f = float(got)
    except (TypeError, ValueError):
        return False
    return abs(got_f - expected_f) <= OBJECTIVE_REL_TOL * max(1.0, abs(expected_f))


def _run_checker(command, case: TestCase, verdict: Verdict) -> bool:
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    payload = json.dumps(
        {"data": case.data, "solution": verdict.solution, "objective": verdict.objective}
    )
    try:
        proc = subprocess.run(
            argv, input=payload, capture_output=True, text=True, timeout=60
        )
    except (OSError, subprocess.TimeoutExpired):
        return False
    return proc.returncode == 0


def case_passes(case: TestCase, verdict: Verdict) -> bool:
    exp = case.expectation
    if exp.kind == "satisfiable":
        want = VerdictStatus.SAT if exp.value else VerdictStatus.UNSAT
        return verdict.status == want
    if verdict.status != VerdictStatus.SAT:
        return False
    if exp.kind == "objective_equals":
        return _objectives_match(exp.value, verdict.objective)
    return _run_checker(exp.value, case, verdict)


def evaluate_candidate(
    model: CandidateModel,
    cases: list[TestCase],
    limits: EvalLimits,
    runner,
) -> EvalResult:
    """Run every test case and score the candidate.

    The score is the number of passing cases. Case order in the result
    matches the declaration order; RunnerUnavailableError from the runner
    aborts the evaluation (infrastructure, never a model failure).
    """
    if not model.source.strip():
        raise ValueError("candidate model source is empty")
    if not cases:
        raise ValueError("at least one test case is required")

    if limits.max_parallel > 1:
        with ThreadPoolExecutor(max_workers=limits.max_parallel) as pool:
            verdicts = list(
                pool.map(lambda c: runner.run(model.source, c.data, limits.time_limit_s), cases)
            )
    else:
        verdicts = [runner.run(model.source, c.data, limits.time_limit_s) for c in cases]

    passed = [case_passes(case, verdict) for case, verdict in zip(cases, verdicts)]
    return EvalResult(verdicts=verdicts, passed=passed)


def case_status_line(case: TestCase, verdict: Verdict, ok: bool) -> str:
    exp = case.expectation
    line = f"case {case.name}: {verdict.status.value}"
    if ok:
        return line + " ok"
    if exp.kind == "satisfiable" and verdict.status != VerdictStatus.SAT and exp.value:
        return line + f" expected SAT, got {verdict.status.value}"
    if exp.kind == "satisfiable" and not exp.value:
        return line + f" expected UNSAT, got {verdict.status.value}"
    if exp.kind == "objective_equals" and verdict.status == VerdictStatus.SAT:
        return line + f" objective mismatch: got {verdict.objective}, expected {exp.value}"
    if exp.kind == "checker" and verdict.status == VerdictStatus.SAT:
        return line + " checker rejected the solution"
    return line + " failed"


def failing_status_lines(result: EvalResult, cases: list[TestCase]) -> list[str]:
    return [
        case_status_line(case, verdict, ok)
        for case, verdict, ok in zip(cases, result.verdicts, result.passed)
        if not ok
    ]


def summarize_feedback(result: EvalResult, cases: list[TestCase]) -> str:
    """Deterministic solver feedback: per-case status lines, plus the first
    failing case's log excerpt."""
    if not result.verdicts:
        raise ValueError("result has no verdicts")
    lines = []
    if result.all_pass:
        lines.append(f"ALL PASS ({result.score}/{len(cases)})")
    else:
        lines.append(f"FAILED ({result.score}/{len(cases)} cases passed)")
    for case, verdict, ok in zip(cases, result.verdicts, result.passed):
        lines.append(case_status_line(case, verdict, ok))
    for case, verdict, ok in zip(cases, result.verdicts, result.passed):
        if not ok:
            excerpt = verdict.solver_log[:LOG_EXCERPT_CHARS]
            if excerpt:
                lines.append(f"--- solver log (case {case.name}) ---")
                lines.append(excerpt)
            break
    return "\n".join(lines)
