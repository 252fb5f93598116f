"""Shared fixtures: scripted gateways, an in-process runner that obeys the
same verdict directives as the subprocess stub, and store builders."""

from __future__ import annotations

import json
import random

import pytest

from cpforge.gateway import HashingEmbedder, LlmGateway, ScriptedBackend
from cpforge.harness import Expectation, TestCase, Verdict, VerdictStatus
from cpforge.ontology import ConstraintProfile, load_ontology, profile_from_names
from cpforge.pipeline import ProblemStatement
from cpforge.store import CorrectionExemplar, CorrectionStore, Exemplar, ExemplarStore
from cpforge.stub_runner import pick_verdict


@pytest.fixture(scope="session")
def ontology():
    return load_ontology()


class InMemoryRunner:
    """Runner that resolves verdicts from the stub directives in-process."""

    def run(self, code: str, data, time_limit_s: float) -> Verdict:
        doc = pick_verdict(code, data)
        status = VerdictStatus(doc["status"])
        # a real shim reports TIMEOUT only at the limit
        wall_ms = time_limit_s * 1000.0 if status == VerdictStatus.TIMEOUT else 0.01
        return Verdict(
            status=status,
            solution=doc.get("solution"),
            objective=doc.get("objective"),
            solver_log=doc.get("solver_log", ""),
            wall_ms=wall_ms,
        )


@pytest.fixture
def runner():
    return InMemoryRunner()


def make_gateway(queues=None, by_prompt_hash=None, retry_backoff=(0.0, 0.0, 0.0)):
    return LlmGateway(
        backend=ScriptedBackend(queues=queues or {}, by_prompt_hash=by_prompt_hash),
        embedder=HashingEmbedder(dim=16),
        retry_backoff_s=retry_backoff,
    )


def sat_cases(n: int) -> list[TestCase]:
    """n cases expecting SAT, with distinct integer data 1..n."""
    return [
        TestCase(name=f"tc{i}", data=i, expectation=Expectation(kind="satisfiable", value=True))
        for i in range(1, n + 1)
    ]


def model_response(pass_data=(), all_status=None, body="x = 1", fence=True) -> str:
    """Scripted LLM response whose embedded directives make the stub
    runner pass exactly the cases whose data is in pass_data."""
    lines = []
    if all_status is not None:
        lines.append(f'#verdict: {{"status": "{all_status}"}}')
    else:
        for d in pass_data:
            lines.append(f'#verdict[{json.dumps(d)}]: {{"status": "SAT"}}')
        lines.append('#verdict: {"status": "UNSAT"}')
    code = "\n".join(lines + [body])
    if fence:
        return f"some reasoning\n```python\n{code}\n```\n"
    return code


def make_problem(pid="p1", n_cases=2, category="Puzzles", description="A toy problem."):
    return ProblemStatement(
        id=pid,
        category=category,
        description=description,
        input_format="n: an integer",
        test_cases=sat_cases(n_cases),
    )


def make_kb(ontology, profiles: dict[str, list[str]], dim=16) -> ExemplarStore:
    """Store with one exemplar per entry; embeddings are hashed from the id."""
    embedder = HashingEmbedder(dim=dim)
    exemplars = []
    for ex_id, names in profiles.items():
        exemplars.append(
            Exemplar(
                id=ex_id,
                description=f"problem {ex_id}",
                solution_code=f"# solution for {ex_id}",
                profile=profile_from_names(names, ontology),
                embedding=embedder.embed(f"problem {ex_id}"),
            )
        )
    return ExemplarStore(exemplars=exemplars, embedding_dim=dim)


def make_correction_store(ontology, entries, dim=16) -> CorrectionStore:
    """entries: list of (id, profile names, error_embedding)."""
    exemplars = []
    for ex_id, names, vec in entries:
        exemplars.append(
            CorrectionExemplar(
                id=ex_id,
                description=f"problem {ex_id}",
                incorrect_code=f"# bad {ex_id}",
                correction_path=f"replace the wrong constraint in {ex_id}",
                correct_code=f"# good {ex_id}",
                profile=profile_from_names(names, ontology),
                error_embedding=list(vec),
            )
        )
    return CorrectionStore(exemplars=exemplars, embedding_dim=dim)


def random_profile(rng: random.Random, ontology) -> ConstraintProfile:
    names = [e.canonical_name for e in ontology]
    picked = rng.sample(names, k=rng.randint(0, len(names)))
    return profile_from_names(picked, ontology)
