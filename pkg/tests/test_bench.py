import json
import random

import pytest

from cpforge.bench import (
    category_breakdown,
    cost_upper_bound,
    run_bench,
    solving_accuracy,
)
from cpforge.errors import EmptyRunError
from cpforge.pipeline import Outcome, ProblemReport

from .conftest import make_problem
from .test_pipeline import ANALYZER_TSP, FAIL, PASS, make_runtime


def _report(outcome, category="c", problem_id="p"):
    return ProblemReport(
        problem_id=problem_id, category=category, mode="carm", outcome=outcome
    )


# ---------------------------------------------------------------- accuracy

def test_sa_two_of_four():
    reports = [_report(Outcome.SOLVED), _report(Outcome.SOLVED),
               _report(Outcome.FAILED), _report(Outcome.FAILED)]
    assert solving_accuracy(reports) == 50.0


def test_sa_zero_of_ten():
    assert solving_accuracy([_report(Outcome.FAILED)] * 10) == 0.0


def test_sa_140_reports_56_solved_is_40_percent():
    reports = [_report(Outcome.SOLVED)] * 56 + [_report(Outcome.FAILED)] * 84
    assert len(reports) == 140
    assert solving_accuracy(reports) == 40.0


def test_sa_counts_infra_in_denominator():
    reports = [_report(Outcome.SOLVED), _report(Outcome.INFRA_ERROR)]
    assert solving_accuracy(reports) == 50.0


def test_sa_empty_run():
    with pytest.raises(EmptyRunError):
        solving_accuracy([])


def test_sa_permutation_invariant():
    rng = random.Random(3)
    reports = [_report(rng.choice(list(Outcome))) for _ in range(30)]
    baseline = solving_accuracy(reports)
    for _ in range(5):
        rng.shuffle(reports)
        assert solving_accuracy(reports) == baseline


# ---------------------------------------------------------------- categories

def test_single_category_all_solved():
    rows = category_breakdown([_report(Outcome.SOLVED, "only")] * 3)
    assert rows == [{"category": "only", "solved": 3, "total": 3, "sa_percent": 100.0}]


def test_two_categories_breakdown():
    reports = (
        [_report(Outcome.SOLVED, "a")] * 3
        + [_report(Outcome.FAILED, "a")]
        + [_report(Outcome.FAILED, "b")]
    )
    rows = category_breakdown(reports)
    assert rows[0] == {"category": "a", "solved": 3, "total": 4, "sa_percent": 75.0}
    assert rows[1] == {"category": "b", "solved": 0, "total": 1, "sa_percent": 0.0}
    assert solving_accuracy(reports) == 60.0


def test_category_rows_match_group_by_oracle():
    rng = random.Random(11)
    categories = [f"cat{i}" for i in range(11)]
    reports = [
        _report(rng.choice([Outcome.SOLVED, Outcome.FAILED]), rng.choice(categories))
        for _ in range(120)
    ]
    rows = category_breakdown(reports)

    oracle = {}
    for r in reports:
        solved, total = oracle.get(r.category, (0, 0))
        oracle[r.category] = (solved + (r.outcome == Outcome.SOLVED), total + 1)
    assert {row["category"]: (row["solved"], row["total"]) for row in rows} == oracle
    totals = [row["total"] for row in rows]
    assert totals == sorted(totals, reverse=True)
    assert sum(row["solved"] for row in rows) == sum(
        1 for r in reports if r.outcome == Outcome.SOLVED
    )


# ---------------------------------------------------------------- cost bound

def test_cost_bound_hand_computed():
    # 5 * 1000 * 0.03 + 5 * 20 + 5 * 0 = 250
    assert cost_upper_bound(
        k=5, l_gen_tokens=1000, f_token_s=0.03, t_solver_s=20.0
    ) == pytest.approx(250.0)


def test_cost_bound_tree_multiplier():
    base = cost_upper_bound(k=5, l_gen_tokens=1000, f_token_s=0.03, t_solver_s=20.0)
    with_tree = cost_upper_bound(
        k=5, l_gen_tokens=1000, f_token_s=0.03, t_solver_s=20.0, n_nodes=6
    )
    assert with_tree == pytest.approx(6 * base)


def test_cost_bound_single_shot_degenerate():
    assert cost_upper_bound(
        k=1, l_gen_tokens=500, f_token_s=0.01, t_solver_s=2.0
    ) == pytest.approx(500 * 0.01 + 2.0)


# ---------------------------------------------------------------- bench run

def _scripted_bench(n_problems=4, solvable=2):
    problems = [make_problem(pid=f"p{i}", category=f"cat{i % 2}") for i in range(n_problems)]
    queues = {
        "analyzer": [ANALYZER_TSP] * n_problems,
        "carm_few_shot": [PASS] * solvable + [FAIL] * (n_problems - solvable),
        "correction": [FAIL] * 4 * (n_problems - solvable),
    }
    rt = make_runtime(queues)
    return problems, rt


def test_run_bench_aggregates_and_writes(tmp_path):
    problems, rt = _scripted_bench()
    bench = run_bench(problems, "carm", rt, dataset_id="toy", run_id="t1")
    assert bench.sa_percent == 50.0
    run_dir = bench.write(tmp_path)
    assert (run_dir / "report.json").exists()
    assert (run_dir / "report.txt").exists()
    assert sorted(p.name for p in (run_dir / "problems").iterdir()) == [
        "p0.json", "p1.json", "p2.json", "p3.json",
    ]
    doc = json.loads((run_dir / "report.json").read_text())
    assert doc["sa_percent"] == 50.0
    assert doc["cost"]["max_llm_calls"] == 6
    assert "timestamps" in doc


def test_bench_cost_bound_holds_per_problem():
    problems, rt = _scripted_bench()
    bench = run_bench(problems, "carm", rt)
    timing = bench.timing_section()
    assert timing["cost_bound_violations"] == []
    for problem_id, stats in timing["per_problem"].items():
        assert stats["accounted_wall_ms"] / 1000.0 <= stats["upper_bound_s"], problem_id


def test_bench_report_text_renders():
    problems, rt = _scripted_bench()
    text = run_bench(problems, "carm", rt).to_text()
    assert "SA:" in text
    assert "cat0" in text and "cat1" in text


def test_empty_dataset_raises():
    with pytest.raises(EmptyRunError):
        run_bench([], "carm", make_runtime({}))


def test_parallel_workers_preserve_order_and_outcomes():
    # responses pinned by prompt hash stay deterministic under concurrency
    problems = [make_problem(pid=f"p{i}", description=f"problem number {i}") for i in range(6)]
    rt = make_runtime({})
    by_hash = {}
    for i, p in enumerate(problems):
        prompt = rt.gateway.render("cot_one_shot", {"problem": p.prompt_text()})
        from cpforge.gateway import ScriptedBackend

        by_hash[ScriptedBackend.prompt_hash(prompt)] = PASS if i % 2 == 0 else FAIL
    rt.gateway.backend.by_prompt_hash = by_hash

    bench = run_bench(problems, "cot", rt, workers=3)
    assert [r.problem_id for r in bench.reports] == [f"p{i}" for i in range(6)]
    outcomes = [r.outcome for r in bench.reports]
    assert outcomes == [
        Outcome.SOLVED, Outcome.FAILED, Outcome.SOLVED,
        Outcome.FAILED, Outcome.SOLVED, Outcome.FAILED,
    ]
    assert bench.sa_percent == 50.0
