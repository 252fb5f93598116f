"""Client side of the runner protocol.

One solver invocation = one shim subprocess: the request goes to the
child's stdin as a single JSON document and the normalized verdict comes
back as a single JSON document on its stdout. Anything that breaks that
contract (missing executable, nonzero exit, unparseable stdout, no answer
within the grace window) is RunnerUnavailableError: infrastructure, never
a model failure.
"""

from __future__ import annotations

import json
import os
import shlex
import signal
import subprocess
import sys

from .errors import RunnerUnavailableError
from .harness import Verdict, VerdictStatus

# How long past the solver time limit we wait for the shim itself before
# declaring it broken. The shim enforces the limit; this only guards
# against a hung shim.
RESPONSE_GRACE_S = 10.0


def parse_runner_response(stdout: str) -> Verdict:
    stdout = stdout.strip()
    if not stdout:
        raise RunnerUnavailableError("runner produced no response document")
    try:
        doc = json.loads(stdout)
    except json.JSONDecodeError as exc:
        raise RunnerUnavailableError(
            f"runner response is not a single JSON document: {stdout[:200]!r}"
        ) from exc
    if not isinstance(doc, dict) or "status" not in doc:
        raise RunnerUnavailableError(f"runner response missing status: {doc!r}")
    try:
        status = VerdictStatus(doc["status"])
    except ValueError as exc:
        raise RunnerUnavailableError(f"unknown runner status {doc['status']!r}") from exc
    return Verdict(
        status=status,
        solution=doc.get("solution"),
        objective=doc.get("objective"),
        solver_log=str(doc.get("solver_log", "")),
        wall_ms=float(doc.get("wall_ms", 0.0)),
    )


class SubprocessRunner:
    """Invokes the shim named by the ``runner_cmd`` config key."""

    def __init__(self, runner_cmd: str | list[str], grace_s: float = RESPONSE_GRACE_S):
        if isinstance(runner_cmd, str):
            runner_cmd = shlex.split(runner_cmd)
        if not runner_cmd:
            raise RunnerUnavailableError("runner_cmd is empty")
        self.argv = list(runner_cmd)
        self.grace_s = grace_s

    def run(self, code: str, data, time_limit_s: float) -> Verdict:
        request = json.dumps({"code": code, "data": data, "time_limit_s": time_limit_s})
        popen_kwargs = {}
        if os.name == "posix":
            popen_kwargs["start_new_session"] = True
        try:
            proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                **popen_kwargs,
            )
        except OSError as exc:
            raise RunnerUnavailableError(f"cannot start runner {self.argv!r}: {exc}") from exc

        try:
            stdout, stderr = proc.communicate(request, timeout=time_limit_s + self.grace_s)
        except subprocess.TimeoutExpired:
            self._kill(proc)
            raise RunnerUnavailableError(
                f"runner did not respond within limit + {self.grace_s}s grace"
            )

        if proc.returncode != 0:
            raise RunnerUnavailableError(
                f"runner exited with code {proc.returncode}: {stderr.strip()[:500]}"
            )
        return parse_runner_response(stdout)

    @staticmethod
    def _kill(proc: subprocess.Popen) -> None:
        try:
            if os.name == "posix":
                os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
            else:
                proc.kill()
        except (ProcessLookupError, PermissionError, OSError):
            pass
        proc.wait()


def stub_runner_cmd() -> list[str]:
    """Command for the packaged deterministic stub (directive-driven)."""
    return [sys.executable, "-m", "cpforge.stub_runner"]
