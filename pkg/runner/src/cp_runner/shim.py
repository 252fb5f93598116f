"""Protocol side of the runner: one JSON request on stdin, one JSON
verdict on stdout, diagnostics on stderr only.

The model itself runs in a worker subprocess placed in its own session
(process group), so the wall-clock limit is enforced with a group kill
and a runaway model cannot leave stray children behind. The verdict is
assembled here, after the worker has exited; executed code never holds a
handle to this process's stdout.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

DEFAULT_TIME_CAP_S = 60.0
WORKER_PATH = Path(__file__).with_name("worker.py")

VALID_STATUSES = {"SAT", "UNSAT", "TIMEOUT", "RUNTIME_ERROR", "PROTOCOL_ERROR"}


def _verdict(status: str, solver_log: str, solution=None, objective=None, wall_ms=0.0) -> dict:
    return {
        "status": status,
        "solution": solution,
        "objective": objective,
        "solver_log": solver_log,
        "wall_ms": wall_ms,
    }


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            proc.kill()
        except OSError:
            pass
    proc.wait()


def execute(code: str, data, time_limit_s: float) -> dict:
    """Run one model in a fresh worker process under the wall-clock limit."""
    started = time.perf_counter()
    try:
        proc = subprocess.Popen(
            [sys.executable, str(WORKER_PATH)],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            start_new_session=True,
        )
    except OSError as exc:
        return _verdict("RUNTIME_ERROR", f"could not start worker process: {exc}")

    payload = json.dumps({"code": code, "data": data})
    try:
        stdout, stderr = proc.communicate(payload, timeout=time_limit_s)
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        wall_ms = (time.perf_counter() - started) * 1000.0
        return _verdict(
            "TIMEOUT",
            f"wall-clock limit of {time_limit_s}s exceeded; worker process group killed",
            wall_ms=wall_ms,
        )

    wall_ms = (time.perf_counter() - started) * 1000.0
    stderr_tail = stderr[-2000:] if stderr else ""
    if proc.returncode != 0:
        return _verdict(
            "RUNTIME_ERROR",
            f"worker exited with code {proc.returncode}\n{stderr_tail}",
            wall_ms=wall_ms,
        )
    try:
        verdict = json.loads(stdout)
        status = verdict["status"]
        if status not in VALID_STATUSES:
            raise ValueError(f"bad status {status!r}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        return _verdict(
            "RUNTIME_ERROR",
            f"worker result unreadable ({exc})\n{stderr_tail}",
            wall_ms=wall_ms,
        )
    verdict.setdefault("solution", None)
    verdict.setdefault("objective", None)
    verdict.setdefault("solver_log", "")
    verdict["wall_ms"] = wall_ms
    return verdict


def handle_request(raw: str, time_cap_s: float = DEFAULT_TIME_CAP_S) -> dict:
    """Parse and serve one protocol request; always returns a verdict."""
    try:
        request = json.loads(raw)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
        code = request["code"]
        if not isinstance(code, str) or not code.strip():
            raise ValueError("code must be a non-empty string")
        time_limit_s = float(request.get("time_limit_s", 20.0))
        if not 0.0 < time_limit_s <= time_cap_s:
            raise ValueError(f"time_limit_s must be in (0, {time_cap_s}]")
        data = request.get("data")
    except Exception as exc:
        return _verdict("PROTOCOL_ERROR", f"unreadable request: {exc}")
    return execute(code, data, time_limit_s)


def serve_stdin(time_cap_s: float = DEFAULT_TIME_CAP_S) -> int:
    verdict = handle_request(sys.stdin.read(), time_cap_s)
    sys.stdout.write(json.dumps(verdict))
    sys.stdout.write("\n")
    sys.stdout.flush()
    return 0
