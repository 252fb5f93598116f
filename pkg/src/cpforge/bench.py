"""Dataset-level evaluation: solving accuracy, per-category breakdown,
and cost accounting with a per-problem upper-bound estimate.

The JSON report is the stable machine contract. Everything that varies
between otherwise identical runs (wall clocks, measured rates, the
bounds derived from them) lives under the single top-level "timestamps"
key, so two runs with the same scripted config agree byte-for-byte once
that key is dropped.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyRunError
from .pipeline import Outcome, ProblemReport, ProblemStatement, Runtime, solve_problem
from .tot import predicted_node_count

log = logging.getLogger(__name__)

TOKEN_RULE = "whitespace-delimited words"


def solving_accuracy(reports: list[ProblemReport]) -> float:
    """Percentage of reports with outcome SOLVED.

    INFRA_ERROR reports stay in the denominator and are flagged in the
    bench report rather than silently dropped.
    """
    if not reports:
        raise EmptyRunError("no reports to aggregate")
    solved = sum(1 for r in reports if r.outcome == Outcome.SOLVED)
    return 100.0 * solved / len(reports)


def category_breakdown(reports: list[ProblemReport]) -> list[dict]:
    """Per-category (solved, total, SA) rows, largest categories first."""
    groups: dict[str, list[ProblemReport]] = {}
    for r in reports:
        groups.setdefault(r.category or "(uncategorized)", []).append(r)
    rows = []
    for category, members in groups.items():
        solved = sum(1 for r in members if r.outcome == Outcome.SOLVED)
        rows.append(
            {
                "category": category,
                "solved": solved,
                "total": len(members),
                "sa_percent": 100.0 * solved / len(members),
            }
        )
    rows.sort(key=lambda row: (-row["total"], row["category"]))
    return rows


def cost_upper_bound(
    k: int,
    l_gen_tokens: float,
    f_token_s: float,
    t_solver_s: float,
    t_carm_s: float = 0.0,
    n_nodes: int = 1,
) -> float:
    """Upper-bound wall seconds for one problem.

    k generation rounds, each possibly costing a full generation
    (l_gen_tokens at f_token_s per token), a solver validation and a
    retrieval op; tree search multiplies the whole budget by the node
    count.
    """
    per_pass = k * l_gen_tokens * f_token_s + k * t_solver_s + k * t_carm_s
    return n_nodes * per_pass


def _problem_bound_s(report: ProblemReport, rt: Runtime, mode: str) -> float:
    t = report.timing
    n_nodes = predicted_node_count(rt.tot_cfg) if mode == "carm_tot" else 1
    return cost_upper_bound(
        k=rt.correction_cfg.max_rounds + 1,
        l_gen_tokens=max(1, t.max_tokens_per_call),
        f_token_s=t.max_s_per_token,
        t_solver_s=t.max_solver_round_s,
        t_carm_s=t.max_carm_op_s,
        n_nodes=n_nodes,
    )


def _avg(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


@dataclass
class BenchReport:
    dataset_id: str
    mode: str
    run_id: str
    reports: list[ProblemReport] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    rt: Runtime | None = None

    @property
    def sa_percent(self) -> float:
        return solving_accuracy(self.reports)

    def cost_counters(self) -> dict:
        reports = self.reports
        rounds = [r.rounds_used for r in reports]
        return {
            "avg_llm_calls": _avg(r.ledger.get("llm_calls", 0) for r in reports),
            "max_llm_calls": max((r.ledger.get("llm_calls", 0) for r in reports), default=0),
            "avg_generation_calls": _avg(r.generation_calls for r in reports),
            "max_generation_calls": max((r.generation_calls for r in reports), default=0),
            "avg_solver_rounds": _avg(r.solver_rounds for r in reports),
            "max_solver_rounds": max((r.solver_rounds for r in reports), default=0),
            "avg_carm_ops": _avg(r.carm_ops for r in reports),
            "max_carm_ops": max((r.carm_ops for r in reports), default=0),
            "avg_correction_rounds": _avg(rounds),
            "max_correction_rounds": max(rounds, default=0),
            "token_rule": TOKEN_RULE,
        }

    def timing_section(self) -> dict:
        per_problem = {}
        violations = []
        for r in self.reports:
            bound_s = _problem_bound_s(r, self.rt, self.mode) if self.rt else 0.0
            accounted_s = r.timing.accounted_wall_ms / 1000.0
            per_problem[r.problem_id] = dict(
                r.timing.to_dict(),
                accounted_wall_ms=r.timing.accounted_wall_ms,
                upper_bound_s=bound_s,
            )
            if self.rt is not None and accounted_s > bound_s:
                violations.append(r.problem_id)
        gen_walls = [r.timing.gen_wall_ms for r in self.reports]
        solver_walls = [r.timing.solver_wall_ms for r in self.reports]
        carm_walls = [r.timing.carm_wall_ms for r in self.reports]
        total_tokens = sum(r.ledger.get("total_completion_tokens", 0) for r in self.reports)
        total_gen_wall_s = sum(gen_walls) / 1000.0
        return {
            "started": self.started_at,
            "finished": self.finished_at,
            "avg_f_token_s": (total_gen_wall_s / total_tokens) if total_tokens else 0.0,
            "avg_gen_wall_ms": _avg(gen_walls),
            "max_gen_wall_ms": max(gen_walls, default=0.0),
            "avg_solver_wall_ms": _avg(solver_walls),
            "max_solver_wall_ms": max(solver_walls, default=0.0),
            "avg_carm_wall_ms": _avg(carm_walls),
            "max_carm_wall_ms": max(carm_walls, default=0.0),
            "cost_bound_violations": violations,
            "per_problem": per_problem,
        }

    def to_dict(self) -> dict:
        solved = sum(1 for r in self.reports if r.outcome == Outcome.SOLVED)
        infra = sum(1 for r in self.reports if r.outcome == Outcome.INFRA_ERROR)
        return {
            "dataset": self.dataset_id,
            "mode": self.mode,
            "config": self.config,
            "sa_percent": self.sa_percent,
            "solved": solved,
            "total": len(self.reports),
            "infra_errors": infra,
            "categories": category_breakdown(self.reports),
            "cost": self.cost_counters(),
            "problems": [r.to_dict(include_timing=False) for r in self.reports],
            "timestamps": self.timing_section(),
        }

    def to_text(self) -> str:
        doc = self.to_dict()
        lines = [
            f"dataset: {doc['dataset']}",
            f"mode:    {doc['mode']}",
            f"solved:  {doc['solved']}/{doc['total']}"
            + (f"  ({doc['infra_errors']} infra errors)" if doc["infra_errors"] else ""),
            f"SA:      {doc['sa_percent']:.1f}%",
            "",
            f"{'category':<42} {'solved':>6} {'total':>6} {'SA%':>7}",
            "-" * 64,
        ]
        for row in doc["categories"]:
            lines.append(
                f"{row['category']:<42} {row['solved']:>6} {row['total']:>6} "
                f"{row['sa_percent']:>7.1f}"
            )
        cost = doc["cost"]
        lines += [
            "",
            f"{'per problem':<28} {'avg':>10} {'max':>8}",
            "-" * 48,
            f"{'LLM calls':<28} {cost['avg_llm_calls']:>10.2f} {cost['max_llm_calls']:>8}",
            f"{'generation calls':<28} {cost['avg_generation_calls']:>10.2f} "
            f"{cost['max_generation_calls']:>8}",
            f"{'solver rounds':<28} {cost['avg_solver_rounds']:>10.2f} "
            f"{cost['max_solver_rounds']:>8}",
            f"{'retrieval ops':<28} {cost['avg_carm_ops']:>10.2f} {cost['max_carm_ops']:>8}",
            f"{'correction rounds':<28} {cost['avg_correction_rounds']:>10.2f} "
            f"{cost['max_correction_rounds']:>8}",
        ]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        run_dir = Path(out_dir) / self.run_id
        problems_dir = run_dir / "problems"
        problems_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "report.json").write_text(
            json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        (run_dir / "report.txt").write_text(self.to_text(), encoding="utf-8")
        for r in self.reports:
            (problems_dir / f"{r.problem_id}.json").write_text(
                json.dumps(r.to_dict(include_timing=True), indent=2) + "\n", encoding="utf-8"
            )
        return run_dir


def run_bench(
    problems: list[ProblemStatement],
    mode: str,
    rt: Runtime,
    dataset_id: str = "dataset",
    run_id: str = "run",
    config_snapshot: dict | None = None,
    workers: int = 1,
) -> BenchReport:
    """Solve every problem and aggregate.

    Report order always follows dataset order. The default single worker
    keeps scripted response queues deterministic; raise ``workers`` for
    live backends, where problems are independent.
    """
    if not problems:
        raise EmptyRunError("dataset contains no problems")
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda p: solve_problem(p, mode, rt), problems))
    else:
        reports = [solve_problem(p, mode, rt) for p in problems]
    bench = BenchReport(
        dataset_id=dataset_id,
        mode=mode,
        run_id=run_id,
        reports=reports,
        config=config_snapshot or {},
        started_at=started,
        finished_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
        rt=rt,
    )
    violations = bench.timing_section()["cost_bound_violations"]
    if violations:
        log.error("cost bound violated for problems: %s", violations)
    return bench
