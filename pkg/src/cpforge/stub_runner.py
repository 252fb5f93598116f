"""Deterministic stand-in for a real solver shim.

Speaks the runner protocol exactly (one JSON request on stdin, one JSON
verdict on stdout) but never solves anything: the verdict is read from
directives embedded in the candidate source. This is what the offline
test suite and scripted benchmark scenarios point ``runner_cmd`` at.

Directive lines recognized inside the code text:

    #verdict: {"status": "SAT", "objective": 42}
    #verdict[2]: {"status": "UNSAT"}        # only when data == 2
    #sleep: 1.5                              # delay before responding

The ``#verdict[...]`` key is matched against the request's data via
canonical JSON. Code with no directive yields RUNTIME_ERROR, mirroring a
model that cannot run.
"""

from __future__ import annotations

import json
import re
import sys
import time

_DIRECTIVE = re.compile(r"^#verdict(?:\[(?P<key>.*)\])?:\s*(?P<body>\{.*\})\s*$")
_SLEEP = re.compile(r"^#sleep:\s*(?P<seconds>[0-9.]+)\s*$")


def _canonical(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def pick_verdict(code: str, data) -> dict:
    default = None
    keyed = {}
    sleep_s = 0.0
    for line in code.splitlines():
        line = line.strip()
        match = _DIRECTIVE.match(line)
        if match:
            body = json.loads(match.group("body"))
            if match.group("key") is None:
                default = body
            else:
                keyed[_canonical(json.loads(match.group("key")))] = body
            continue
        match = _SLEEP.match(line)
        if match:
            sleep_s = float(match.group("seconds"))
    if sleep_s:
        time.sleep(sleep_s)
    verdict = keyed.get(_canonical(data), default)
    if verdict is None:
        return {
            "status": "RUNTIME_ERROR",
            "solution": None,
            "objective": None,
            "solver_log": "stub runner: no #verdict directive found in model source",
        }
    out = {
        "status": verdict.get("status", "RUNTIME_ERROR"),
        "solution": verdict.get("solution"),
        "objective": verdict.get("objective"),
        "solver_log": verdict.get("solver_log", "stub runner directive verdict"),
    }
    if out["status"] == "SAT" and out["solution"] is None:
        out["solution"] = {"x": 1}
    return out


def main() -> int:
    start = time.perf_counter()
    time_limit_s = 0.0
    try:
        request = json.loads(sys.stdin.read())
        code = request["code"]
        data = request.get("data")
        time_limit_s = float(request.get("time_limit_s", 0.0))
        verdict = pick_verdict(code, data)
    except Exception as exc:  # unreadable request -> protocol error response
        verdict = {
            "status": "PROTOCOL_ERROR",
            "solution": None,
            "objective": None,
            "solver_log": f"stub runner could not read request: {exc}",
        }
    wall_ms = (time.perf_counter() - start) * 1000.0
    if verdict["status"] == "TIMEOUT":
        # a real shim only reports TIMEOUT at the limit; keep that invariant
        wall_ms = max(wall_ms, time_limit_s * 1000.0)
    verdict["wall_ms"] = wall_ms
    sys.stdout.write(json.dumps(verdict))
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
