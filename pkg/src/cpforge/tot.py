"""Beam-limited tree search over modeling alternatives.

Every node is a complete candidate model (partial models cannot be
solver-scored). Root nodes try distinct modeling directives; each level
keeps the best-scoring beam and expands every kept node with revision
directives. A node's score is the number of test cases its model passes,
so the search needs no value network: the solver is the judge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    AllBranchesFailedError,
    EmptyResponseError,
    GatewayError,
)
from .gateway import extract_code_block
from .harness import CandidateModel, EvalResult

log = logging.getLogger(__name__)


class ThoughtKind(str, Enum):
    GLOBAL_CONSTRAINT_SELECTION = "global_constraint_selection"
    VARIABLE_DEFINITION_STRATEGY = "variable_definition_strategy"
    AUXILIARY_VARIABLE_INTRODUCTION = "auxiliary_variable_introduction"


_KIND_ORDER = (
    ThoughtKind.GLOBAL_CONSTRAINT_SELECTION,
    ThoughtKind.VARIABLE_DEFINITION_STRATEGY,
    ThoughtKind.AUXILIARY_VARIABLE_INTRODUCTION,
)

_DIRECTIVES = {
    ThoughtKind.GLOBAL_CONSTRAINT_SELECTION: (
        "Concentrate on selecting the right global constraints for this problem "
        "(for example AllDifferent, Cumulative, Circuit, NoOverlap). Prefer one "
        "well-chosen global constraint over many small arithmetic constraints."
    ),
    ThoughtKind.VARIABLE_DEFINITION_STRATEGY: (
        "Concentrate on the variable definition strategy: reconsider whether the "
        "decision variables should be arrays or named variables, integer or "
        "Boolean, indexed by position or by value."
    ),
    ThoughtKind.AUXILIARY_VARIABLE_INTRODUCTION: (
        "Concentrate on introducing auxiliary variables that simplify the "
        "constraints or help the solver prune, and link them to the decision "
        "variables with channeling constraints."
    ),
}

_ROOT_PARENT_CODE = "(none: start from scratch)"


@dataclass
class ToTConfig:
    initial_thoughts: int = 2  # root candidates generated up front
    beam: int = 2              # nodes kept per level; children per kept node
    max_depth: int = 2         # total levels, roots included

    def __post_init__(self):
        if self.initial_thoughts < 1 or self.beam < 1:
            raise ValueError("initial_thoughts and beam must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class ThoughtNode:
    id: str
    parent_id: str | None
    thought_kind: ThoughtKind
    depth: int
    candidate: CandidateModel | None = None
    eval: EvalResult | None = None
    failed: str | None = None  # generation failure reason, if any

    @property
    def score(self) -> int:
        return self.eval.score if self.eval is not None else 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "thought_kind": self.thought_kind.value,
            "depth": self.depth,
            "score": self.score,
            "completion_tokens": self.candidate.completion_tokens if self.candidate else 0,
            "unfenced": bool(self.candidate and self.candidate.unfenced),
            "failed": self.failed,
        }


@dataclass
class ExploreResult:
    best: CandidateModel
    best_node: ThoughtNode
    nodes: list[ThoughtNode] = field(default_factory=list)
    early_stopped: bool = False

    @property
    def visited(self) -> int:
        return len(self.nodes)

    def trace(self) -> list[dict]:
        return [n.to_dict() for n in self.nodes]


def predicted_node_count(cfg: ToTConfig) -> int:
    """Closed-form node count of a full search (no early stop).

    W roots plus a full m-ary expansion over max_depth levels:
    W * (m^n - 1) / (m - 1), with the beam-1 case read as W * n and a
    zero-depth tree visiting just the W roots.
    """
    w, m, n = cfg.initial_thoughts, cfg.beam, cfg.max_depth
    if n == 0:
        return w
    if m == 1:
        return w * n
    return w * (m**n - 1) // (m - 1)


def _node_order_key(order: dict[str, int]):
    def key(node: ThoughtNode):
        tokens = node.candidate.completion_tokens if node.candidate else 0
        return (-node.score, tokens, order[node.id])

    return key


def explore(
    problem_description: str,
    examples_text: str,
    cfg: ToTConfig,
    gateway,
    evaluate,
    total_cases: int,
) -> ExploreResult:
    """Search for the best-scoring candidate model.

    ``evaluate`` maps a CandidateModel to an EvalResult. Stops as soon as
    any node passes all ``total_cases`` cases. Generation failures score
    the node 0 and do not abort the search. Raises AllBranchesFailedError
    when the tree is exhausted with every node at score 0.
    """
    nodes: list[ThoughtNode] = []
    order: dict[str, int] = {}

    def new_node(parent: ThoughtNode | None, kind: ThoughtKind, depth: int) -> ThoughtNode:
        node = ThoughtNode(
            id=f"n{len(nodes) + 1}",
            parent_id=parent.id if parent else None,
            thought_kind=kind,
            depth=depth,
        )
        order[node.id] = len(nodes)
        nodes.append(node)
        return node

    def generate_and_score(node: ThoughtNode, parent_code: str) -> bool:
        """Fill in candidate + eval. True when the node passes everything."""
        slots = {
            "problem": problem_description,
            "examples": examples_text,
            "thought_directive": _DIRECTIVES[node.thought_kind],
            "parent_code": parent_code,
        }
        try:
            response = gateway.complete("tot_expand", slots)
            code = extract_code_block(response.text)
        except (GatewayError, EmptyResponseError) as exc:
            node.failed = str(exc)
            log.warning("tree node %s generation failed: %s", node.id, exc)
            return False
        node.candidate = CandidateModel(
            source=code.source,
            prompt_id="tot_expand",
            node_id=node.id,
            unfenced=code.unfenced,
            completion_tokens=response.completion_tokens,
        )
        node.eval = evaluate(node.candidate)
        return node.eval.score == total_cases

    def finish(early: bool) -> ExploreResult:
        scored = [n for n in nodes if n.candidate is not None]
        if not scored:
            raise AllBranchesFailedError(None, [n.to_dict() for n in nodes])
        best = min(scored, key=_node_order_key(order))
        if best.score == 0:
            raise AllBranchesFailedError(
                best.candidate, [n.to_dict() for n in nodes], best_eval=best.eval
            )
        return ExploreResult(
            best=best.candidate, best_node=best, nodes=nodes, early_stopped=early
        )

    # Level 1: W roots with distinct directives.
    level = []
    for i in range(cfg.initial_thoughts):
        node = new_node(None, _KIND_ORDER[i % len(_KIND_ORDER)], depth=0)
        if generate_and_score(node, _ROOT_PARENT_CODE):
            return ExploreResult(
                best=node.candidate, best_node=node, nodes=nodes, early_stopped=True
            )
        level.append(node)

    # Levels 2..max_depth: keep the beam, expand each kept node.
    for depth in range(1, max(cfg.max_depth, 1)):
        expandable = sorted(
            (n for n in level if n.candidate is not None), key=_node_order_key(order)
        )[: cfg.beam]
        if not expandable:
            break
        next_level = []
        for parent in expandable:
            for j in range(cfg.beam):
                kind = _KIND_ORDER[j % len(_KIND_ORDER)]
                child = new_node(parent, kind, depth=depth)
                parent_code = (
                    "Revise this model; keep what works and change what the "
                    "directive targets:\n" + parent.candidate.source
                )
                if generate_and_score(child, parent_code):
                    return ExploreResult(
                        best=child.candidate, best_node=child, nodes=nodes, early_stopped=True
                    )
                next_level.append(child)
        level = next_level

    return finish(early=False)
