"""Exemplar knowledge bases: loading, canonical persistence, and the
embedding-similarity retrieval baseline.

Two kinds of store exist. The modeling store holds (description, solution
code) pairs with a precomputed constraint profile and description
embedding. The correction store additionally carries the incorrect code
and the prose correction path, with an embedding of the error context.

Files are UTF-8 JSON Lines, one object per record. Loading is strict:
the first malformed record fails the whole load with its line number.
File order is preserved and is the stable tie-break order for every
ranking in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DimensionMismatchError,
    EmptyStoreError,
    StoreFormatError,
    ZeroVectorError,
)
from .ontology import (
    ConstraintProfile,
    Ontology,
    normalize_constraint_name,
    profile_from_names,
)

# chunking defaults for the embedding baseline; "tokens" are whitespace words
CHUNK_SIZE = 700
CHUNK_OVERLAP = 100


@dataclass
class Exemplar:
    id: str
    description: str
    solution_code: str
    profile: ConstraintProfile | None = None
    embedding: list[float] | None = None
    category: str | None = None


@dataclass
class CorrectionExemplar:
    id: str
    description: str
    incorrect_code: str
    correction_path: str
    correct_code: str
    profile: ConstraintProfile | None = None
    error_embedding: list[float] | None = None


@dataclass
class ExemplarStore:
    exemplars: list[Exemplar] = field(default_factory=list)
    embedding_dim: int | None = None
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.exemplars)

    def __iter__(self):
        return iter(self.exemplars)


@dataclass
class CorrectionStore:
    exemplars: list[CorrectionExemplar] = field(default_factory=list)
    embedding_dim: int | None = None
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.exemplars)

    def __iter__(self):
        return iter(self.exemplars)


_MODELING_FIELDS = ("id", "description", "solution_code", "profile", "embedding", "category")
_CORRECTION_FIELDS = (
    "id",
    "description",
    "incorrect_code",
    "correction_path",
    "correct_code",
    "profile",
    "error_embedding",
)


def _require_text(record: dict, key: str, line_no: int) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value:
        raise StoreFormatError(f"field {key!r} must be a non-empty string", line_no)
    return value


def _optional_vector(record: dict, key: str, line_no: int) -> list[float] | None:
    value = record.get(key)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(x, (int, float)) for x in value):
        raise StoreFormatError(f"field {key!r} must be a list of numbers", line_no)
    return [float(x) for x in value]


def _optional_profile(
    record: dict, line_no: int, ontology: Ontology | None
) -> ConstraintProfile | None:
    value = record.get("profile")
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise StoreFormatError("field 'profile' must be a list of names", line_no)
    if ontology is None:
        # no ontology supplied: keep names verbatim as canonical
        return ConstraintProfile.of(*value)
    unknown = [n for n in value if normalize_constraint_name(n, ontology) is None]
    if unknown:
        raise StoreFormatError(f"profile names not in ontology: {unknown}", line_no)
    return profile_from_names(value, ontology)


def load_store(
    path: str | Path,
    kind: str = "modeling",
    ontology: Ontology | None = None,
) -> ExemplarStore | CorrectionStore:
    """Load and validate a knowledge-base file.

    kind is "modeling" or "correction". Embeddings may be absent (the
    ``index`` command fills them in); every present embedding must share
    one dimension. Raises StoreFormatError with the offending line number
    on the first invalid record.
    """
    if kind not in ("modeling", "correction"):
        raise ValueError(f"unknown store kind {kind!r}")
    path = Path(path)
    records = []
    seen_ids: set[str] = set()
    dim: int | None = None
    vector_key = "embedding" if kind == "modeling" else "error_embedding"

    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(record, dict):
                raise StoreFormatError("record must be a JSON object", line_no)

            rid = _require_text(record, "id", line_no)
            if rid in seen_ids:
                raise StoreFormatError(f"duplicate id {rid!r}", line_no)
            seen_ids.add(rid)

            vector = _optional_vector(record, vector_key, line_no)
            if vector is not None:
                if dim is None:
                    dim = len(vector)
                elif len(vector) != dim:
                    raise StoreFormatError(
                        f"embedding length {len(vector)} != store dimension {dim}", line_no
                    )
            profile = _optional_profile(record, line_no, ontology)

            if kind == "modeling":
                category = record.get("category")
                if category is not None and not isinstance(category, str):
                    raise StoreFormatError("field 'category' must be a string", line_no)
                records.append(
                    Exemplar(
                        id=rid,
                        description=_require_text(record, "description", line_no),
                        solution_code=_require_text(record, "solution_code", line_no),
                        profile=profile,
                        embedding=vector,
                        category=category,
                    )
                )
            else:
                records.append(
                    CorrectionExemplar(
                        id=rid,
                        description=_require_text(record, "description", line_no),
                        incorrect_code=_require_text(record, "incorrect_code", line_no),
                        correction_path=_require_text(record, "correction_path", line_no),
                        correct_code=_require_text(record, "correct_code", line_no),
                        profile=profile,
                        error_embedding=vector,
                    )
                )

    cls = ExemplarStore if kind == "modeling" else CorrectionStore
    return cls(exemplars=records, embedding_dim=dim, source_path=str(path))


def _fmt_number(x: float) -> str:
    # Canonical numeric form: at most 9 significant digits, no trailing noise.
    if isinstance(x, int):
        return str(x)
    return format(x, ".9g")


def _fmt_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return _fmt_number(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def _record_dict(ex) -> dict:
    profile = ex.profile.names() if ex.profile is not None else None
    if isinstance(ex, Exemplar):
        return {
            "id": ex.id,
            "description": ex.description,
            "solution_code": ex.solution_code,
            "profile": profile,
            "embedding": ex.embedding,
            "category": ex.category,
        }
    return {
        "id": ex.id,
        "description": ex.description,
        "incorrect_code": ex.incorrect_code,
        "correction_path": ex.correction_path,
        "correct_code": ex.correct_code,
        "profile": profile,
        "error_embedding": ex.error_embedding,
    }


def render_record(ex) -> str:
    """One canonical JSON line: fixed field order, 9-digit floats."""
    fields = _MODELING_FIELDS if isinstance(ex, Exemplar) else _CORRECTION_FIELDS
    record = _record_dict(ex)
    parts = (f"{json.dumps(k)}: {_fmt_value(record[k])}" for k in fields)
    return "{" + ", ".join(parts) + "}"


def save_store(store: ExemplarStore | CorrectionStore, path: str | Path) -> None:
    """Write the store in canonical form; save(load(f)) is byte-identical
    for files already in canonical form."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ex in store:
            fh.write(render_record(ex))
            fh.write("\n")


def cosine_similarity(u: list[float], v: list[float]) -> float:
    """u.v / (|u||v|), clamped into [-1, 1].

    Raises DimensionMismatchError on unequal lengths and ZeroVectorError
    when either vector has zero norm (callers treat that as score 0).
    """
    if len(u) != len(v):
        raise DimensionMismatchError(f"vector lengths differ: {len(u)} vs {len(v)}")
    dot = math.fsum(a * b for a, b in zip(u, v))
    norm_u = math.sqrt(math.fsum(a * a for a in u))
    norm_v = math.sqrt(math.fsum(b * b for b in v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return max(-1.0, min(1.0, dot / (norm_u * norm_v)))


def chunk_text(text: str, chunk_size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[str]:
    """Split text into word windows of chunk_size with the given overlap.

    Word = whitespace-delimited token; this approximates the backend
    tokenizer closely enough for retrieval and is recorded in report
    metadata as the counting rule.
    """
    words = text.split()
    if len(words) <= chunk_size:
        return [text]
    step = chunk_size - overlap
    chunks = []
    start = 0
    while True:
        chunks.append(" ".join(words[start : start + chunk_size]))
        if start + chunk_size >= len(words):
            break
        start += step
    return chunks


def _safe_cosine(u: list[float], v: list[float]) -> float:
    try:
        return cosine_similarity(u, v)
    except ZeroVectorError:
        return 0.0


def rag_retrieve(
    query_text: str,
    store: ExemplarStore,
    k: int,
    embedder,
) -> list[tuple[Exemplar, float]]:
    """Top-k exemplars by cosine similarity between the query embedding and
    each exemplar's description.

    Descriptions longer than one chunk are scored per chunk (the best
    chunk wins and the exemplar appears once); single-chunk descriptions
    use the precomputed embedding when present. Ties break by store
    order. Returns min(k, len(store)) pairs in non-increasing score order.
    """
    if len(store) == 0:
        raise EmptyStoreError("cannot retrieve from an empty store")
    if k < 1:
        raise ValueError("k must be >= 1")
    query_vec = embedder.embed(query_text)

    scored: list[tuple[float, int, Exemplar]] = []
    for idx, ex in enumerate(store):
        chunks = chunk_text(ex.description)
        if len(chunks) == 1 and ex.embedding is not None:
            score = _safe_cosine(query_vec, ex.embedding)
        else:
            score = max(_safe_cosine(query_vec, embedder.embed(c)) for c in chunks)
        scored.append((score, idx, ex))

    scored.sort(key=lambda t: (-t[0], t[1]))
    return [(ex, score) for score, _, ex in scored[:k]]
