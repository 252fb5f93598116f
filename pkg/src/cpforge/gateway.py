"""Uniform access to text-generation and embedding backends.

The gateway renders prompt templates, dispatches to a backend (HTTP
chat-completions or the deterministic scripted backend used by the whole
offline test suite), retries transient failures, and keeps a call ledger.
Token counts for the scripted backend are whitespace word counts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (
    EmbedderUnavailableError,
    EmptyResponseError,
    GatewayError,
    TemplateError,
)

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 3500

# Slot tokens look like {problem}; anything with spaces, digits-first or
# punctuation inside braces is left alone so code samples in template
# bodies survive rendering.
_SLOT = re.compile(r"\{([a-z][a-z0-9_]*)\}")

_FENCE = re.compile(r"```([A-Za-z0-9_+.-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


def count_tokens(text: str) -> int:
    """Whitespace word count; the package-wide token approximation."""
    return len(text.split())


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    def slots(self) -> set[str]:
        return set(_SLOT.findall(self.body))

    def render(self, slots: dict[str, str]) -> str:
        def replace(match: re.Match) -> str:
            name = match.group(1)
            if name not in slots:
                raise TemplateError(
                    f"template {self.id!r} references slot {{{name}}} "
                    "which was not supplied",
                    missing_slot=name,
                )
            return str(slots[name])

        return _SLOT.sub(replace, self.body)


def load_templates(prompts_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load *.txt prompt templates by file stem.

    With no directory the shipped prompts are used; with a directory,
    shipped prompts are the base and files in the directory override
    or extend them.
    """
    templates: dict[str, PromptTemplate] = {}
    shipped = resources.files("cpforge").joinpath("prompts")
    for entry in shipped.iterdir():
        if entry.name.endswith(".txt"):
            templates[entry.name[:-4]] = PromptTemplate(
                id=entry.name[:-4], body=entry.read_text("utf-8")
            )
    if prompts_dir is not None:
        for file in sorted(Path(prompts_dir).glob("*.txt")):
            templates[file.stem] = PromptTemplate(id=file.stem, body=file.read_text("utf-8"))
    return templates


@dataclass
class GenerationParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: int | None = None


@dataclass
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    backend_id: str


@dataclass
class CallRecord:
    kind: str  # "llm" | "embed"
    template_id: str
    completion_tokens: int
    wall_ms: float


class CallLedger:
    """Monotone counters over backend calls; safe for concurrent writers."""

    def __init__(self):
        self._lock = threading.Lock()
        self.llm_calls = 0
        self.embed_calls = 0
        self.total_completion_tokens = 0
        self.wall_ms_per_call: list[float] = []
        self.calls: list[CallRecord] = []

    def record_llm(self, template_id: str, completion_tokens: int, wall_ms: float) -> None:
        with self._lock:
            self.llm_calls += 1
            self.total_completion_tokens += completion_tokens
            self.wall_ms_per_call.append(wall_ms)
            self.calls.append(CallRecord("llm", template_id, completion_tokens, wall_ms))

    def record_embed(self, wall_ms: float) -> None:
        with self._lock:
            self.embed_calls += 1
            self.calls.append(CallRecord("embed", "", 0, wall_ms))

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "llm_calls": self.llm_calls,
                "embed_calls": self.embed_calls,
                "total_completion_tokens": self.total_completion_tokens,
            }


class ScriptedBackend:
    """Deterministic backend: ordered response queues per template id,
    plus an optional map from prompt sha256 to a pinned response.

    The acceptance suite's control-flow scenarios are all driven through
    this backend.
    """

    backend_id = "scripted"

    def __init__(
        self,
        queues: dict[str, list[str]] | None = None,
        by_prompt_hash: dict[str, str] | None = None,
    ):
        self.queues = {k: list(v) for k, v in (queues or {}).items()}
        self.by_prompt_hash = dict(by_prompt_hash or {})

    @staticmethod
    def prompt_hash(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def push(self, template_id: str, *responses: str) -> None:
        self.queues.setdefault(template_id, []).extend(responses)

    def generate(self, prompt: str, template_id: str, params: GenerationParams) -> str:
        pinned = self.by_prompt_hash.get(self.prompt_hash(prompt))
        if pinned is not None:
            return pinned
        queue = self.queues.get(template_id)
        if not queue:
            raise GatewayError(
                f"scripted queue for template {template_id!r} is exhausted",
                reason="retries_exhausted",
            )
        return queue.pop(0)


class HttpBackend:
    """Chat-completions-style JSON endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "",
        timeout_s: float = 120.0,
        session=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self.backend_id = f"http:{model}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, prompt: str, template_id: str, params: GenerationParams) -> str:
        import requests

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise GatewayError(str(exc), reason="timeout") from exc
        except requests.RequestException as exc:
            raise GatewayError(str(exc), reason="http_status") from exc
        if resp.status_code != 200:
            raise GatewayError(
                f"backend returned HTTP {resp.status_code}: {resp.text[:500]}",
                reason="http_status",
            )
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion payload: {body}") from exc


class HashingEmbedder:
    """Deterministic offline embedding via signed feature hashing.

    Not a semantic model; it gives stable, reproducible vectors so the
    retrieval machinery can run with no network.
    """

    backend_id = "hashing"

    def __init__(self, dim: int = 32):
        self.dim = dim

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for word in text.casefold().split():
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[bucket] += sign
        return vec


class ScriptedEmbedder:
    """Embeddings pinned per exact text; unknown texts either fall back to
    hashing (default) or raise, depending on strict."""

    backend_id = "scripted-embed"

    def __init__(self, by_text: dict[str, list[float]] | None = None, dim: int = 32, strict: bool = False):
        self.by_text = dict(by_text or {})
        self.strict = strict
        self._fallback = HashingEmbedder(dim)

    def embed(self, text: str) -> list[float]:
        if text in self.by_text:
            return list(self.by_text[text])
        if self.strict:
            raise EmbedderUnavailableError(f"no scripted embedding for text: {text[:80]!r}")
        return self._fallback.embed(text)


class HttpEmbedder:
    """Embeddings endpoint client (OpenAI-style /embeddings)."""

    def __init__(self, base_url: str, model: str, api_key_env: str = "", timeout_s: float = 60.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self.backend_id = f"http-embed:{model}"

    def embed(self, text: str) -> list[float]:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.session.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise EmbedderUnavailableError(str(exc)) from exc
        if resp.status_code != 200:
            raise EmbedderUnavailableError(f"HTTP {resp.status_code}: {resp.text[:300]}")
        try:
            return list(resp.json()["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as exc:
            raise EmbedderUnavailableError("malformed embedding payload") from exc


class LlmGateway:
    """Template rendering + backend dispatch + retry + accounting.

    ``scoped()`` returns a view that shares backends and templates but
    also records calls into its own ledger, which is how per-problem
    accounting stays correct when problems run concurrently.
    """

    def __init__(
        self,
        backend,
        embedder=None,
        templates: dict[str, PromptTemplate] | None = None,
        params: GenerationParams | None = None,
        retry_max: int = 3,
        retry_backoff_s: tuple[float, ...] = (1.0, 2.0, 4.0),
        backend_overrides: dict[str, object] | None = None,
        max_in_flight: int = 4,
        _ledgers: list[CallLedger] | None = None,
        _gate: threading.Semaphore | None = None,
    ):
        self.backend = backend
        self.embedder = embedder
        self.templates = templates if templates is not None else load_templates()
        self.params = params or GenerationParams()
        self.retry_max = retry_max
        self.retry_backoff_s = retry_backoff_s
        # per-template backend routing, e.g. a dedicated analyzer model
        self.backend_overrides = backend_overrides or {}
        self._ledgers = _ledgers or [CallLedger()]
        self._gate = _gate or threading.Semaphore(max_in_flight)

    @property
    def ledger(self) -> CallLedger:
        return self._ledgers[-1]

    def scoped(self) -> "LlmGateway":
        child = LlmGateway(
            backend=self.backend,
            embedder=self.embedder,
            templates=self.templates,
            params=self.params,
            retry_max=self.retry_max,
            retry_backoff_s=self.retry_backoff_s,
            backend_overrides=self.backend_overrides,
            _ledgers=self._ledgers + [CallLedger()],
            _gate=self._gate,
        )
        return child

    def render(self, template_id: str, slots: dict[str, str]) -> str:
        template = self.templates.get(template_id)
        if template is None:
            raise TemplateError(f"no template named {template_id!r}")
        return template.render(slots)

    def complete(
        self,
        template_id: str,
        slots: dict[str, str],
        params: GenerationParams | None = None,
    ) -> LlmResponse:
        prompt = self.render(template_id, slots)
        params = params or self.params
        backend = self.backend_overrides.get(template_id, self.backend)

        last_error: GatewayError | None = None
        for attempt in range(self.retry_max):
            start = time.perf_counter()
            try:
                with self._gate:
                    text = backend.generate(prompt, template_id, params)
            except GatewayError as exc:
                last_error = exc
                if exc.reason == "retries_exhausted":
                    raise  # deterministic failure; retrying cannot help
                if attempt + 1 < self.retry_max:
                    delay = self.retry_backoff_s[min(attempt, len(self.retry_backoff_s) - 1)]
                    log.warning("gateway retry %d after %s (%.1fs)", attempt + 1, exc.reason, delay)
                    time.sleep(delay)
                continue
            wall_ms = (time.perf_counter() - start) * 1000.0
            response = LlmResponse(
                text=text,
                prompt_tokens=count_tokens(prompt),
                completion_tokens=count_tokens(text),
                latency_ms=wall_ms,
                backend_id=getattr(backend, "backend_id", "unknown"),
            )
            for ledger in self._ledgers:
                ledger.record_llm(template_id, response.completion_tokens, wall_ms)
            return response
        raise GatewayError(
            f"all {self.retry_max} attempts failed: {last_error}",
            reason="retries_exhausted",
        )

    def embed(self, text: str) -> list[float]:
        if self.embedder is None:
            raise EmbedderUnavailableError("no embedding backend configured")
        start = time.perf_counter()
        vector = self.embedder.embed(text)
        wall_ms = (time.perf_counter() - start) * 1000.0
        for ledger in self._ledgers:
            ledger.record_embed(wall_ms)
        return vector


@dataclass
class ExtractedCode:
    source: str
    fenced: bool
    labeled: bool

    @property
    def unfenced(self) -> bool:
        return not self.fenced


def extract_code_block(response_text: str, language: str = "python") -> ExtractedCode:
    """Pull model source out of an LLM response.

    Preference order: first fenced block labeled with the target
    language, then the largest fenced block, then the whole text flagged
    unfenced. Raises EmptyResponseError on blank input.
    """
    if not response_text or not response_text.strip():
        raise EmptyResponseError("backend returned an empty response")
    blocks = _FENCE.findall(response_text)
    labeled = [body for lang, body in blocks if lang.casefold() == language.casefold()]
    if labeled:
        return ExtractedCode(source=labeled[0].strip("\n"), fenced=True, labeled=True)
    if blocks:
        largest = max((body for _, body in blocks), key=len)
        return ExtractedCode(source=largest.strip("\n"), fenced=True, labeled=False)
    return ExtractedCode(source=response_text.strip(), fenced=False, labeled=False)
