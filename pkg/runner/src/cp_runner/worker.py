"""Child process that actually executes one candidate model.

Runs standalone (invoked by file path), reads {"code", "data"} as JSON on
stdin, executes the code with ``data`` bound in a fresh namespace, then
asks the pycsp3 toolchain for the outcome. The result JSON travels back
over a duplicated file descriptor saved before the model runs, so model
code that prints, writes to fd 1, or replaces sys.stdout cannot touch the
channel the shim reads.

Only stdlib is imported up front; pycsp3 is imported lazily so models
that never reach the solving step (crashes, sleeps) behave identically
whether or not the toolchain is installed.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
import traceback


def _map_solve_status(status_text: str) -> str | None:
    text = status_text.upper()
    if "OPTIMUM" in text or "SAT" in text and "UNSAT" not in text:
        return "SAT"
    if "UNSAT" in text:
        return "UNSAT"
    return None


def _extract_solution(pycsp3) -> object:
    """Best-effort variable assignment from the last solution."""
    try:
        sol = pycsp3.solution()
    except Exception:
        return None
    if sol is None:
        return None
    try:
        variables = getattr(sol, "variables", None)
        values = getattr(sol, "values", None)
        if variables is not None and values is not None:
            return {str(var): val for var, val in zip(variables, values)}
        return {"raw": str(sol)}
    except Exception as exc:
        return {"raw": f"solution extraction failed: {exc}"}


def _solve(namespace: dict, log: list[str]) -> dict:
    try:
        import pycsp3
    except ImportError:
        return {
            "status": "RUNTIME_ERROR",
            "solution": None,
            "objective": None,
            "solver_log": "solving toolchain unavailable: pycsp3 is not importable "
                          "in the runner environment",
        }
    log.append(f"toolchain: pycsp3 {getattr(pycsp3, '__version__', '(unknown version)')}")
    try:
        result = pycsp3.solve()
    except Exception:
        return {
            "status": "RUNTIME_ERROR",
            "solution": None,
            "objective": None,
            "solver_log": "\n".join(log + ["solve() raised:", traceback.format_exc()]),
        }
    status = _map_solve_status(str(result))
    log.append(f"solver status: {result}")
    if status == "SAT":
        objective = None
        try:
            objective = pycsp3.bound()
        except Exception:
            pass
        return {
            "status": "SAT",
            "solution": _extract_solution(pycsp3),
            "objective": objective,
            "solver_log": "\n".join(log),
        }
    if status == "UNSAT":
        return {"status": "UNSAT", "solution": None, "objective": None,
                "solver_log": "\n".join(log)}
    return {
        "status": "RUNTIME_ERROR",
        "solution": None,
        "objective": None,
        "solver_log": "\n".join(log + [f"solver returned inconclusive status: {result}"]),
    }


def run_model(code: str, data) -> dict:
    # fresh working directory: the toolchain drops compiled artifacts in cwd
    workdir = tempfile.mkdtemp(prefix="cp-runner-")
    os.chdir(workdir)
    sys.argv = ["model.py"]
    log: list[str] = []
    namespace = {"__name__": "__main__", "data": data}
    try:
        exec(compile(code, "<candidate-model>", "exec"), namespace)
    except BaseException:
        return {
            "status": "RUNTIME_ERROR",
            "solution": None,
            "objective": None,
            "solver_log": traceback.format_exc(),
        }
    return _solve(namespace, log)


def main() -> int:
    payload = json.loads(sys.stdin.read())

    # Reserve the response channel before any model code runs: keep a
    # private duplicate of stdout, then point fd 1 (and the high-level
    # handle) at stderr so stray prints become diagnostics.
    result_fd = os.dup(1)
    os.dup2(2, 1)
    sys.stdout = sys.stderr

    verdict = run_model(payload["code"], payload.get("data"))

    with os.fdopen(result_fd, "w", encoding="utf-8") as channel:
        json.dump(verdict, channel, default=str)
        channel.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
