"""Built-in conformance check: three canonical requests through the full
worker path. Exits nonzero if any case fails, which makes it the install
gate for pointing a pipeline's runner_cmd at this shim."""

from __future__ import annotations

from .shim import execute

SAT_MODEL = """\
from pycsp3 import *
x = Var(dom=range(1, 4))
satisfy(x == 2)
"""

RAISING_MODEL = "undefined_variable + 1\n"

SLEEPING_MODEL = "import time\ntime.sleep(60)\n"


def _check_sat(verdict: dict) -> str | None:
    if verdict["status"] != "SAT":
        return f"expected SAT, got {verdict['status']}: {verdict['solver_log'][:400]}"
    solution = verdict.get("solution")
    values = list(solution.values()) if isinstance(solution, dict) else [solution]
    if not any(v in (2, "2") for v in values):
        return f"solution does not bind the variable to 2: {solution!r}"
    return None


def _check_runtime_error(verdict: dict) -> str | None:
    if verdict["status"] != "RUNTIME_ERROR":
        return f"expected RUNTIME_ERROR, got {verdict['status']}"
    if "NameError" not in verdict["solver_log"]:
        return "traceback missing from solver_log"
    return None


def _check_timeout(verdict: dict) -> str | None:
    if verdict["status"] != "TIMEOUT":
        return f"expected TIMEOUT, got {verdict['status']}"
    if not 20000.0 <= verdict["wall_ms"] <= 21000.0:
        return f"wall_ms {verdict['wall_ms']:.0f} outside [20000, 21000]"
    return None


CASES = (
    ("trivial model solves to the pinned value", SAT_MODEL, 20.0, _check_sat),
    ("exception maps to RUNTIME_ERROR with traceback", RAISING_MODEL, 20.0, _check_runtime_error),
    ("sleeping model hits the 20 s wall clock", SLEEPING_MODEL, 20.0, _check_timeout),
)


def run_self_test() -> int:
    failures = 0
    for name, code, limit, check in CASES:
        verdict = execute(code, None, limit)
        problem = check(verdict)
        if problem is None:
            print(f"PASS  {name}")
        else:
            failures += 1
            print(f"FAIL  {name}: {problem}")
    if failures:
        print(f"self-test failed ({failures}/{len(CASES)} cases)")
        return 1
    print("self-test passed (3/3 cases)")
    return 0
