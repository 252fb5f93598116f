import json
import sys

from cpforge.harness import EvalLimits, Expectation, TestCase
from cpforge.ontology import load_ontology
from cpforge.pipeline import (
    Outcome,
    ProblemStatement,
    Runtime,
    assemble_examples,
    solve_problem,
)
from cpforge.runner import SubprocessRunner

from .conftest import (
    InMemoryRunner,
    make_correction_store,
    make_gateway,
    make_kb,
    make_problem,
    model_response,
)

ONTOLOGY = load_ontology()

FAIL = model_response(all_status="UNSAT")
PASS = model_response(all_status="SAT")
ANALYZER_TSP = '["Circuit", "Sum", "Element", "Minimum"]'


def make_runtime(queues, runner=None, solved_rule="all"):
    return Runtime(
        gateway=make_gateway(queues),
        ontology=ONTOLOGY,
        kb_store=make_kb(
            ONTOLOGY,
            {
                "tpp": ["Circuit", "Element"],
                "kb2": ["Cumulative"],
                "kb3": ["Regular"],
                "kb4": ["Table"],
                "kb5": ["NoOverlap"],
            },
        ),
        correction_store=make_correction_store(
            ONTOLOGY,
            [("ce1", ["Circuit"], [1.0] + [0.0] * 15),
             ("ce2", ["Sum"], [0.0, 1.0] + [0.0] * 14)],
        ),
        runner=runner or InMemoryRunner(),
        limits=EvalLimits(time_limit_s=5.0),
        solved_rule=solved_rule,
    )


def gen_calls(report):
    return report.generation_calls


# ---------------------------------------------------------------- carm

def test_carm_right_first_time_uses_two_llm_calls():
    rt = make_runtime({"analyzer": [ANALYZER_TSP], "carm_few_shot": [PASS]})
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.SOLVED
    assert report.ledger["llm_calls"] == 2
    assert report.rounds_used == 0
    assert report.profile == ["Circuit", "Element", "Minimum", "Sum"]
    assert report.retrieved[0][0] == "tpp"


def test_carm_wrong_then_right():
    rt = make_runtime(
        {"analyzer": [ANALYZER_TSP], "carm_few_shot": [FAIL], "correction": [PASS]}
    )
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.SOLVED
    assert report.rounds_used == 1
    assert gen_calls(report) == 2  # initial + one correction
    assert report.ledger["llm_calls"] == 3  # + analyzer


def test_carm_always_wrong_exhausts_budget():
    rt = make_runtime(
        {"analyzer": [ANALYZER_TSP], "carm_few_shot": [FAIL], "correction": [FAIL] * 4}
    )
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.FAILED
    assert report.rounds_used == 4
    assert report.solver_rounds == 5
    assert report.ledger["llm_calls"] == 6  # the per-problem maximum


def test_carm_empty_profile_falls_back_to_rag():
    rt = make_runtime({"analyzer": ["[]"], "carm_few_shot": [PASS]})
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.SOLVED
    assert report.retrieval_fallback


# ---------------------------------------------------------------- baselines

def test_cot_wrong_model_fails_with_one_generation():
    rt = make_runtime({"cot_one_shot": [FAIL]})
    report = solve_problem(make_problem(), "cot", rt)
    assert report.outcome == Outcome.FAILED
    assert gen_calls(report) == 1
    assert report.rounds_used == 0


def test_baselines_never_enter_correction_or_tree():
    for mode, queues in [
        ("cot", {"cot_one_shot": [FAIL]}),
        ("rag", {"rag_few_shot": [FAIL]}),
        ("direct", {"direct": ["ANSWER: 41"]}),
    ]:
        rt = make_runtime(queues)
        report = solve_problem(make_problem(), mode, rt)
        templates = [c.template_id for c in rt.gateway.ledger.calls if c.kind == "llm"]
        assert "correction" not in templates
        assert "tot_expand" not in templates
        assert report.tree_trace is None
        assert report.correction_trace == []


def test_rag_mode_retrieves_and_solves():
    rt = make_runtime({"rag_few_shot": [PASS]})
    report = solve_problem(make_problem(), "rag", rt)
    assert report.outcome == Outcome.SOLVED
    assert len(report.retrieved) == 4
    assert report.profile == []  # no analyzer in rag mode


# ---------------------------------------------------------------- carm_tot

def test_carm_tot_all_wrong_visits_six_nodes_then_four_rounds():
    rt = make_runtime(
        {
            "analyzer": [ANALYZER_TSP],
            "tot_expand": [FAIL] * 6,
            "correction": [FAIL] * 4,
        }
    )
    report = solve_problem(make_problem(), "carm_tot", rt)
    assert report.outcome == Outcome.FAILED
    assert len(report.tree_trace) == 6
    assert report.rounds_used == 4
    # 6 node evaluations + 4 correction evaluations, no re-evaluation of the best node
    assert report.solver_rounds == 10


def test_carm_tot_early_stop_skips_correction():
    rt = make_runtime({"analyzer": [ANALYZER_TSP], "tot_expand": [PASS]})
    report = solve_problem(make_problem(), "carm_tot", rt)
    assert report.outcome == Outcome.SOLVED
    assert len(report.tree_trace) == 1
    assert report.rounds_used == 0


# ---------------------------------------------------------------- direct

def _checker_case(tmp_path, name, expect_token):
    checker = tmp_path / f"check_{name}.py"
    checker.write_text(
        "import json, sys\n"
        "doc = json.load(sys.stdin)\n"
        f"sys.exit(0 if {expect_token!r} in str(doc['solution']) else 1)\n",
        encoding="utf-8",
    )
    return TestCase(
        name=name,
        data=None,
        expectation=Expectation(kind="checker", value=f"{sys.executable} {checker}"),
    )


def test_direct_mode_with_checkers(tmp_path):
    problem = ProblemStatement(
        id="d1",
        category="Puzzles",
        description="what is the answer",
        test_cases=[_checker_case(tmp_path, "c1", "42"), _checker_case(tmp_path, "c2", "42")],
    )
    rt = make_runtime({"direct": ["ANSWER: 42"]})
    report = solve_problem(problem, "direct", rt)
    assert report.outcome == Outcome.SOLVED
    assert not report.unverifiable


def test_direct_mode_without_checkers_is_unverifiable_and_unsolved():
    rt = make_runtime({"direct": ["ANSWER: 7"]})
    report = solve_problem(make_problem(), "direct", rt)
    assert report.outcome == Outcome.FAILED
    assert report.unverifiable


# ---------------------------------------------------------------- infra

def test_missing_runner_is_infra_error():
    rt = make_runtime(
        {"analyzer": [ANALYZER_TSP], "carm_few_shot": [FAIL]},
        runner=SubprocessRunner(["/nonexistent/shim"]),
    )
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.INFRA_ERROR
    assert "runner" in report.error


def test_gateway_exhaustion_is_infra_error():
    rt = make_runtime({})  # no scripted responses at all
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.INFRA_ERROR
    assert "gateway" in report.error


# ---------------------------------------------------------------- misc

def test_solved_rule_any():
    one_of_two = model_response(pass_data=[1])
    rt = make_runtime({"analyzer": [ANALYZER_TSP], "carm_few_shot": [one_of_two]},
                      solved_rule="any")
    report = solve_problem(make_problem(), "carm", rt)
    assert report.outcome == Outcome.SOLVED


def test_report_is_json_serializable_and_self_contained():
    rt = make_runtime({"analyzer": [ANALYZER_TSP], "carm_few_shot": [PASS]})
    report = solve_problem(make_problem(), "carm", rt)
    doc = json.loads(json.dumps(report.to_dict()))
    assert doc["outcome"] == "SOLVED"
    assert doc["calls"]["llm_calls"] == 2
    assert doc["timing"]["wall_ms"] > 0


def test_problem_statement_case_count_warning(caplog):
    raw = {
        "id": "w1",
        "category": "c",
        "description": "d",
        "input_format": "",
        "test_cases": [
            {"name": "only", "data": 1, "expectation": {"satisfiable": True}}
        ],
    }
    with caplog.at_level("WARNING"):
        problem = ProblemStatement.from_dict(raw)
    assert problem.id == "w1"
    assert any("test cases" in r.message for r in caplog.records)


def test_assemble_examples_format():
    rt = make_runtime({})
    text = assemble_examples(list(rt.kb_store)[:2])
    assert text.startswith("### Example 1")
    assert "### Example 2" in text
    assert "Problem: " in text and "Code: " in text
