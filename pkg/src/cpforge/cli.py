"""Operator entry points.

Subcommands: index, solve, bench, inspect-retrieval, replay.

Exit codes are the machine contract besides emitted files:
0 solved / clean run, 1 failed, 2 infrastructure error, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import run_bench
from .config import build_runtime, load_config
from .errors import ConfigError, CpforgeError
from .pipeline import Outcome, ProblemStatement, solve_problem
from .retrieval import carm_retrieve, extract_profile
from .store import load_store, save_store

log = logging.getLogger(__name__)

EXIT_SOLVED = 0
EXIT_FAILED = 1
EXIT_INFRA = 2
EXIT_CONFIG = 3


def load_dataset(path: str | Path) -> list[ProblemStatement]:
    """Directory of problem files, a JSON Lines file, or one JSON list."""
    path = Path(path)
    if path.is_dir():
        return [ProblemStatement.from_file(p) for p in sorted(path.glob("*.json"))]
    text = path.read_text("utf-8")
    if path.suffix == ".jsonl":
        return [
            ProblemStatement.from_dict(json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
    doc = json.loads(text)
    if isinstance(doc, list):
        return [ProblemStatement.from_dict(p) for p in doc]
    return [ProblemStatement.from_dict(doc)]


def _config_from_args(args, **extra):
    overrides = {
        "mode": getattr(args, "mode", None),
        "runner_cmd": getattr(args, "runner_cmd", None),
        "knowledge_base": getattr(args, "knowledge_base", None),
        "correction_db": getattr(args, "correction_db", None),
        "ontology_path": getattr(args, "ontology", None),
        "prompts_dir": getattr(args, "prompts_dir", None),
    }
    overrides.update(extra)
    return load_config(getattr(args, "config", None), overrides)


def cmd_index(args) -> int:
    cfg = _config_from_args(args, mode="direct")  # indexing needs no runner
    rt = build_runtime(cfg)
    store = load_store(args.kb_in, kind=args.kind, ontology=rt.ontology)
    vector_attr = "embedding" if args.kind == "modeling" else "error_embedding"
    changed = 0
    for ex in store:
        if ex.profile is None:
            extraction = extract_profile(ex.description, rt.gateway, rt.ontology)
            ex.profile = extraction.profile
            changed += 1
        if getattr(ex, vector_attr) is None:
            if not args.with_embeddings:
                log.warning("record %s has no embedding (embeddings disabled)", ex.id)
                continue
            text = ex.description if args.kind == "modeling" else ex.correction_path
            setattr(ex, vector_attr, rt.gateway.embed(text))
            changed += 1
    save_store(store, args.kb_out)
    print(f"indexed {len(store)} records ({changed} fields filled) -> {args.kb_out}")
    return 0


def _outcome_exit(outcome: Outcome) -> int:
    return {
        Outcome.SOLVED: EXIT_SOLVED,
        Outcome.FAILED: EXIT_FAILED,
        Outcome.INFRA_ERROR: EXIT_INFRA,
    }[outcome]


def cmd_solve(args) -> int:
    cfg = _config_from_args(args)
    rt = build_runtime(cfg)
    problem = ProblemStatement.from_file(args.problem)
    report = solve_problem(problem, cfg.mode, rt)
    doc = report.to_dict()
    doc["config"] = cfg.snapshot()
    rendered = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
    else:
        print(rendered)
    return _outcome_exit(report.outcome)


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    rt = build_runtime(cfg)
    dataset_path = args.dataset or cfg.dataset
    if not dataset_path:
        raise ConfigError("dataset path is required", key="dataset")
    problems = load_dataset(dataset_path)
    bench = run_bench(
        problems,
        cfg.mode,
        rt,
        dataset_id=str(dataset_path),
        run_id=args.run_id,
        config_snapshot=cfg.snapshot(),
        workers=cfg.workers,
    )
    run_dir = bench.write(args.out)
    print(bench.to_text())
    print(f"reports written to {run_dir}")
    infra = any(r.outcome == Outcome.INFRA_ERROR for r in bench.reports)
    return EXIT_INFRA if infra else EXIT_SOLVED


def cmd_inspect_retrieval(args) -> int:
    cfg = _config_from_args(args)
    rt = build_runtime(cfg)
    dataset_path = args.dataset or cfg.dataset
    if not dataset_path:
        raise ConfigError("dataset path is required", key="dataset")
    problems = {p.id: p for p in load_dataset(dataset_path)}
    if args.problem_id not in problems:
        print(f"unknown problem id {args.problem_id!r}", file=sys.stderr)
        return EXIT_FAILED
    problem = problems[args.problem_id]
    if rt.kb_store is None:
        raise ConfigError("knowledge_base is required", key="knowledge_base")
    extraction = extract_profile(problem.prompt_text(), rt.gateway, rt.ontology)
    result = carm_retrieve(
        extraction.profile,
        rt.kb_store,
        rt.retrieval_cfg,
        query_text=problem.prompt_text(),
        embedder=rt.gateway,
        exclude_ids={problem.id},
    )
    print(f"problem:  {problem.id}")
    print(f"profile:  {extraction.profile.names()}")
    print(f"fallback: {result.used_fallback}")
    print(f"{'rank':<5} {'exemplar':<24} {'score':>8}  profile")
    print("-" * 70)
    for rank, (ex, score) in enumerate(result.items, start=1):
        names = ex.profile.names() if ex.profile else []
        print(f"{rank:<5} {ex.id:<24} {score:>8.4f}  {names}")
    return EXIT_SOLVED


def cmd_replay(args) -> int:
    """Run a self-contained scripted scenario file.

    The scenario bundles a config object plus either one problem or a
    dataset, so recorded control-flow cases replay with no other files.
    """
    scenario = json.loads(Path(args.scenario).read_text("utf-8"))
    cfg = load_config(None, scenario.get("config", {}))
    rt = build_runtime(cfg)
    if "problem" in scenario:
        problem = ProblemStatement.from_dict(scenario["problem"])
        report = solve_problem(problem, cfg.mode, rt)
        print(json.dumps(report.to_dict(), indent=2))
        return _outcome_exit(report.outcome)
    problems = [ProblemStatement.from_dict(p) for p in scenario.get("dataset", [])]
    bench = run_bench(
        problems,
        cfg.mode,
        rt,
        dataset_id=args.scenario,
        run_id=args.run_id,
        config_snapshot=cfg.snapshot(),
    )
    if args.out:
        bench.write(args.out)
    print(bench.to_text())
    infra = any(r.outcome == Outcome.INFRA_ERROR for r in bench.reports)
    return EXIT_INFRA if infra else EXIT_SOLVED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpforge",
        description="LLM-assisted constraint-model generation and benchmarking",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--mode", choices=("direct", "cot", "rag", "carm", "carm_tot"))
    common.add_argument("--runner-cmd", dest="runner_cmd")
    common.add_argument("--knowledge-base", dest="knowledge_base")
    common.add_argument("--correction-db", dest="correction_db")
    common.add_argument("--ontology")
    common.add_argument("--prompts-dir", dest="prompts_dir")

    p = sub.add_parser("index", parents=[common], help="fill profiles/embeddings in a store")
    p.add_argument("kb_in")
    p.add_argument("kb_out")
    p.add_argument("--kind", choices=("modeling", "correction"), default="modeling")
    p.add_argument("--with-embeddings", action="store_true", default=False)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("solve", parents=[common], help="solve one problem file")
    p.add_argument("problem")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", parents=[common], help="run a dataset")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--out", default="bench-out")
    p.add_argument("--run-id", dest="run_id", default="run")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser(
        "inspect-retrieval", parents=[common], help="print the scored ranking for a problem"
    )
    p.add_argument("problem_id")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_inspect_retrieval)

    p = sub.add_parser("replay", parents=[common], help="run a scripted scenario file")
    p.add_argument("scenario")
    p.add_argument("--out")
    p.add_argument("--run-id", dest="run_id", default="replay")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error ({exc.key}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CpforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
