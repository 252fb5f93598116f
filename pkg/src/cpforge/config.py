"""Run configuration: one JSON file, fully resolved and validated before
any backend, network, or subprocess activity, then frozen into every
report for provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .correction import CorrectionConfig
from .errors import ConfigError, StoreFormatError
from .gateway import (
    GenerationParams,
    HashingEmbedder,
    HttpBackend,
    HttpEmbedder,
    LlmGateway,
    ScriptedBackend,
    ScriptedEmbedder,
    load_templates,
)
from .harness import EvalLimits
from .ontology import load_ontology
from .pipeline import MODES, Runtime
from .retrieval import RetrievalConfig
from .runner import SubprocessRunner
from .store import load_store
from .tot import ToTConfig

# modes that need each resource
_NEEDS_RUNNER = ("cot", "rag", "carm", "carm_tot")
_NEEDS_KB = ("rag", "carm", "carm_tot")
_NEEDS_CORRECTION = ("carm", "carm_tot")


@dataclass
class RunConfig:
    mode: str = "carm"
    dataset: str | None = None
    knowledge_base: str | None = None
    correction_db: str | None = None
    ontology_path: str | None = None
    prompts_dir: str | None = None
    runner_cmd: str | None = None
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)
    tot: ToTConfig = field(default_factory=ToTConfig)
    limits: EvalLimits = field(default_factory=EvalLimits)
    generation_backend: dict = field(default_factory=lambda: {"type": "scripted"})
    analyzer_backend: dict | None = None  # optional second slot; defaults to the modeler
    embedding_backend: dict = field(default_factory=lambda: {"type": "hashing", "dim": 32})
    generation_params: GenerationParams = field(default_factory=GenerationParams)
    max_in_flight: int = 4
    workers: int = 1
    solved_rule: str = "all"
    raw: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        """The resolved config embedded in reports."""
        return {
            "mode": self.mode,
            "paths": {
                "dataset": self.dataset,
                "knowledge_base": self.knowledge_base,
                "correction_db": self.correction_db,
                "ontology_path": self.ontology_path,
                "prompts_dir": self.prompts_dir,
                "runner_cmd": self.runner_cmd,
            },
            "retrieval": {
                "top_k": self.retrieval.top_k,
                "empty_profile_fallback": self.retrieval.empty_profile_fallback,
            },
            "correction": {
                "max_rounds": self.correction.max_rounds,
                "shortlist_k": self.correction.shortlist_k,
            },
            "tot": {
                "initial_thoughts": self.tot.initial_thoughts,
                "beam": self.tot.beam,
                "max_depth": self.tot.max_depth,
            },
            "limits": {
                "time_limit_s": self.limits.time_limit_s,
                "memory_mb": self.limits.memory_mb,
                "max_parallel_solvers": self.limits.max_parallel,
            },
            "generation_backend": self.generation_backend,
            "analyzer_backend": self.analyzer_backend,
            "embedding_backend": self.embedding_backend,
            "generation_params": {
                "temperature": self.generation_params.temperature,
                "max_tokens": self.generation_params.max_tokens,
                "seed": self.generation_params.seed,
            },
            "max_in_flight": self.max_in_flight,
            "workers": self.workers,
            "solved_rule": self.solved_rule,
            "token_rule": "whitespace-delimited words",
        }


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be an object", key=key)
    return value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a config file, apply flag overrides (flags win), validate."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", key="config")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}", key="config")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v

    paths = _section(raw, "paths")
    try:
        cfg = RunConfig(
            mode=raw.get("mode", "carm"),
            dataset=raw.get("dataset", paths.get("dataset")),
            knowledge_base=raw.get("knowledge_base", paths.get("knowledge_base")),
            correction_db=raw.get("correction_db", paths.get("correction_db")),
            ontology_path=raw.get("ontology_path", paths.get("ontology_path")),
            prompts_dir=raw.get("prompts_dir", paths.get("prompts_dir")),
            runner_cmd=raw.get("runner_cmd", paths.get("runner_cmd")),
            retrieval=RetrievalConfig(**_section(raw, "retrieval")),
            correction=CorrectionConfig(**_section(raw, "correction")),
            tot=ToTConfig(**_section(raw, "tot")),
            limits=_limits(_section(raw, "limits")),
            generation_backend=raw.get("generation_backend", {"type": "scripted"}),
            analyzer_backend=raw.get("analyzer_backend"),
            embedding_backend=raw.get("embedding_backend", {"type": "hashing", "dim": 32}),
            generation_params=GenerationParams(**_section(raw, "generation_params")),
            max_in_flight=int(raw.get("max_in_flight", 4)),
            workers=int(raw.get("workers", 1)),
            solved_rule=raw.get("solved_rule", "all"),
            raw=raw,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}", key="config")
    except ValueError as exc:
        raise ConfigError(str(exc), key="config")
    validate_config(cfg)
    return cfg


def _limits(section: dict) -> EvalLimits:
    return EvalLimits(
        time_limit_s=float(section.get("time_limit_s", 20.0)),
        memory_mb=section.get("memory_mb"),
        max_parallel=int(section.get("max_parallel_solvers", 1)),
    )


def validate_config(cfg: RunConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}", key="mode")
    if cfg.solved_rule not in ("all", "any"):
        raise ConfigError("solved_rule must be 'all' or 'any'", key="solved_rule")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1", key="workers")
    if cfg.mode in _NEEDS_RUNNER and not cfg.runner_cmd:
        raise ConfigError(f"runner_cmd is required for mode {cfg.mode}", key="runner_cmd")
    if cfg.mode in _NEEDS_KB and not cfg.knowledge_base:
        raise ConfigError(
            f"knowledge_base is required for mode {cfg.mode}", key="knowledge_base"
        )
    if cfg.mode in _NEEDS_CORRECTION and not cfg.correction_db:
        raise ConfigError(
            f"correction_db is required for mode {cfg.mode}", key="correction_db"
        )
    backend_type = cfg.generation_backend.get("type")
    if backend_type not in ("scripted", "http"):
        raise ConfigError(
            "generation_backend.type must be 'scripted' or 'http'", key="generation_backend"
        )
    if backend_type == "http" and not cfg.generation_backend.get("base_url"):
        raise ConfigError("generation_backend.base_url is required", key="generation_backend")
    embed_type = cfg.embedding_backend.get("type")
    if embed_type not in ("hashing", "scripted", "http"):
        raise ConfigError(
            "embedding_backend.type must be 'hashing', 'scripted' or 'http'",
            key="embedding_backend",
        )


def _load_fixtures(spec: dict) -> dict:
    fixtures = spec.get("fixtures")
    if fixtures is None:
        return spec
    if isinstance(fixtures, str):
        try:
            return json.loads(Path(fixtures).read_text("utf-8"))
        except FileNotFoundError:
            raise ConfigError(
                f"scripted fixtures file not found: {fixtures}", key="generation_backend"
            )
    return fixtures


def build_backend(spec: dict):
    if spec.get("type") == "http":
        return HttpBackend(
            base_url=spec["base_url"],
            model=spec.get("model", ""),
            api_key_env=spec.get("api_key_env", ""),
            timeout_s=float(spec.get("timeout_s", 120.0)),
        )
    fixtures = _load_fixtures(spec)
    return ScriptedBackend(
        queues=fixtures.get("responses", {}),
        by_prompt_hash=fixtures.get("by_prompt_hash", {}),
    )


def build_embedder(spec: dict):
    kind = spec.get("type", "hashing")
    if kind == "http":
        return HttpEmbedder(
            base_url=spec["base_url"],
            # the reference setup used OpenAI's ada-002 embeddings
            model=spec.get("model", "text-embedding-ada-002"),
            api_key_env=spec.get("api_key_env", ""),
        )
    if kind == "scripted":
        fixtures = _load_fixtures(spec)
        embeddings = fixtures.get("embeddings", fixtures)
        return ScriptedEmbedder(
            by_text=embeddings.get("texts", {}),
            dim=int(embeddings.get("dim", 32)),
            strict=bool(embeddings.get("strict", False)),
        )
    return HashingEmbedder(dim=int(spec.get("dim", 32)))


def build_runtime(cfg: RunConfig) -> Runtime:
    """Construct every runtime component a solve/bench run needs.

    Validation has already passed; nothing here performs network I/O.
    Unreadable or malformed files named by the config surface as
    ConfigError with the offending key.
    """
    try:
        ontology = load_ontology(cfg.ontology_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load ontology: {exc}", key="ontology_path")
    overrides = {}
    if cfg.analyzer_backend is not None:
        overrides["analyzer"] = build_backend(cfg.analyzer_backend)
    gateway = LlmGateway(
        backend=build_backend(cfg.generation_backend),
        embedder=build_embedder(cfg.embedding_backend),
        templates=load_templates(cfg.prompts_dir),
        params=cfg.generation_params,
        backend_overrides=overrides,
        max_in_flight=cfg.max_in_flight,
    )
    kb_store = None
    if cfg.knowledge_base:
        try:
            kb_store = load_store(cfg.knowledge_base, kind="modeling", ontology=ontology)
        except (OSError, StoreFormatError) as exc:
            raise ConfigError(f"cannot load knowledge base: {exc}", key="knowledge_base")
    correction_store = None
    if cfg.correction_db:
        try:
            correction_store = load_store(
                cfg.correction_db, kind="correction", ontology=ontology
            )
        except (OSError, StoreFormatError) as exc:
            raise ConfigError(f"cannot load correction store: {exc}", key="correction_db")
    runner = SubprocessRunner(cfg.runner_cmd) if cfg.runner_cmd else None
    return Runtime(
        gateway=gateway,
        ontology=ontology,
        kb_store=kb_store,
        correction_store=correction_store,
        runner=runner,
        retrieval_cfg=cfg.retrieval,
        correction_cfg=cfg.correction,
        tot_cfg=cfg.tot,
        limits=cfg.limits,
        solved_rule=cfg.solved_rule,
    )
