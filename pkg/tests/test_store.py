import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from cpforge.errors import (
    DimensionMismatchError,
    EmptyStoreError,
    StoreFormatError,
    ZeroVectorError,
)
from cpforge.ontology import load_ontology
from cpforge.store import (
    CHUNK_OVERLAP,
    CHUNK_SIZE,
    Exemplar,
    ExemplarStore,
    chunk_text,
    cosine_similarity,
    load_store,
    rag_retrieve,
    save_store,
)

ONTOLOGY = load_ontology()


def _record(i, dim=3, **over):
    rec = {
        "id": f"ex{i}",
        "description": f"problem number {i}",
        "solution_code": f"# code {i}",
        "profile": ["Circuit"],
        "embedding": [float(i), 1.0, 0.0][:dim],
        "category": "Puzzles",
    }
    rec.update(over)
    return rec


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


class FixedEmbedder:
    """Returns a pinned vector for known texts, zeros otherwise."""

    def __init__(self, by_text, dim):
        self.by_text = by_text
        self.dim = dim

    def embed(self, text):
        return self.by_text.get(text, [0.0] * self.dim)


# ---------------------------------------------------------------- loading

def test_load_well_formed_preserves_order(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [_record(3), _record(1), _record(2)])
    store = load_store(path, "modeling", ONTOLOGY)
    assert [ex.id for ex in store] == ["ex3", "ex1", "ex2"]
    assert store.embedding_dim == 3


def test_load_wrong_embedding_length_names_line(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [_record(1), _record(2, embedding=[1.0, 2.0])])
    with pytest.raises(StoreFormatError) as err:
        load_store(path, "modeling", ONTOLOGY)
    assert err.value.line_no == 2


def test_load_empty_file_is_valid(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text("", encoding="utf-8")
    store = load_store(path, "modeling", ONTOLOGY)
    assert len(store) == 0


def test_load_duplicate_id_fails(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [_record(1), _record(1)])
    with pytest.raises(StoreFormatError) as err:
        load_store(path, "modeling", ONTOLOGY)
    assert err.value.line_no == 2
    assert "duplicate" in str(err.value)


def test_load_unknown_profile_name_fails(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [_record(1, profile=["NotAConstraint"])])
    with pytest.raises(StoreFormatError):
        load_store(path, "modeling", ONTOLOGY)


def test_load_invalid_json_names_line(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text(json.dumps(_record(1)) + "\n{oops\n", encoding="utf-8")
    with pytest.raises(StoreFormatError) as err:
        load_store(path, "modeling", ONTOLOGY)
    assert err.value.line_no == 2


def test_load_correction_store_requires_content_fields(tmp_path):
    path = tmp_path / "corr.jsonl"
    record = {
        "id": "c1",
        "description": "d",
        "incorrect_code": "bad",
        "correction_path": "fix it",
        "correct_code": "good",
        "profile": ["Sum"],
        "error_embedding": [1.0, 0.0],
    }
    _write_jsonl(path, [record])
    store = load_store(path, "correction", ONTOLOGY)
    assert store.exemplars[0].correction_path == "fix it"

    record = dict(record, id="c2", correct_code="")
    _write_jsonl(path, [record])
    with pytest.raises(StoreFormatError):
        load_store(path, "correction", ONTOLOGY)


def test_save_load_roundtrip_is_byte_identical(tmp_path):
    raw = tmp_path / "kb.jsonl"
    _write_jsonl(raw, [_record(1, embedding=[0.123456789123, 1 / 3, 2.0]), _record(2)])
    canonical = tmp_path / "canonical.jsonl"
    save_store(load_store(raw, "modeling", ONTOLOGY), canonical)
    rewritten = tmp_path / "rewritten.jsonl"
    save_store(load_store(canonical, "modeling", ONTOLOGY), rewritten)
    assert canonical.read_bytes() == rewritten.read_bytes()


# ---------------------------------------------------------------- cosine

def test_cosine_identical_unit_vectors():
    assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0


def test_cosine_orthogonal():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_hand_computed_value():
    # 32 / (sqrt(14) * sqrt(77)), worked out independently of the implementation
    expected = 32.0 / (math.sqrt(14.0) * math.sqrt(77.0))
    assert expected == pytest.approx(0.974631846, abs=1e-9)
    assert cosine_similarity([1, 2, 3], [4, 5, 6]) == pytest.approx(expected, abs=1e-12)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine_similarity([1.0], [1.0, 2.0])


def test_cosine_zero_vector():
    with pytest.raises(ZeroVectorError):
        cosine_similarity([0.0, 0.0], [1.0, 2.0])


@given(
    st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=8).filter(
        lambda v: any(abs(x) > 1e-6 for x in v)
    )
)
def test_cosine_self_similarity_is_one(vec):
    assert cosine_similarity(vec, vec) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- chunking

def test_chunk_short_text_is_one_chunk():
    assert chunk_text("a few words only") == ["a few words only"]


def test_chunk_long_text_windows():
    words = [f"w{i}" for i in range(1500)]
    chunks = chunk_text(" ".join(words))
    assert len(chunks) == 3
    assert chunks[0].split() == words[:CHUNK_SIZE]
    step = CHUNK_SIZE - CHUNK_OVERLAP
    assert chunks[1].split() == words[step : step + CHUNK_SIZE]
    assert chunks[2].split()[-1] == "w1499"


# ---------------------------------------------------------------- retrieval

def _random_store(n, dim, rng):
    exemplars = [
        Exemplar(
            id=f"ex{i}",
            description=f"text {i}",
            solution_code="#",
            embedding=[rng.uniform(-1, 1) for _ in range(dim)],
        )
        for i in range(n)
    ]
    return ExemplarStore(exemplars=exemplars, embedding_dim=dim)


def test_rag_query_identical_to_description_ranks_first():
    rng = random.Random(7)
    store = _random_store(20, 8, rng)
    target = store.exemplars[13]
    embedder = FixedEmbedder({"query": list(target.embedding)}, 8)
    (first, score), *_ = rag_retrieve("query", store, 4, embedder)
    assert first.id == target.id
    assert score == pytest.approx(1.0, abs=1e-12)


def test_rag_k_larger_than_store_returns_everything_sorted():
    rng = random.Random(8)
    store = _random_store(5, 4, rng)
    qvec = [rng.uniform(-1, 1) for _ in range(4)]
    out = rag_retrieve("q", store, 50, FixedEmbedder({"q": qvec}, 4))
    assert len(out) == 5
    scores = [s for _, s in out]
    assert scores == sorted(scores, reverse=True)


def test_rag_order_matches_brute_force_oracle():
    rng = random.Random(9)
    store = _random_store(200, 8, rng)
    qvec = [rng.uniform(-1, 1) for _ in range(8)]

    def oracle_order():
        def cos(u, v):
            dot = sum(a * b for a, b in zip(u, v))
            nu = math.sqrt(sum(a * a for a in u))
            nv = math.sqrt(sum(b * b for b in v))
            return dot / (nu * nv)

        scored = [(-cos(qvec, ex.embedding), i, ex.id) for i, ex in enumerate(store)]
        return [ex_id for _, _, ex_id in sorted(scored)]

    got = [ex.id for ex, _ in rag_retrieve("q", store, 200, FixedEmbedder({"q": qvec}, 8))]
    assert got == oracle_order()


def test_rag_multi_chunk_description_scored_at_best_chunk():
    # the matching words live in the second window only
    dim = 8
    late_words = "needle " * 50
    description = " ".join(["filler"] * 1200) + " " + late_words
    from cpforge.gateway import HashingEmbedder

    embedder = HashingEmbedder(dim=dim)
    store = ExemplarStore(
        exemplars=[
            Exemplar(id="long", description=description, solution_code="#",
                     embedding=[0.0001] * dim),
            Exemplar(id="short", description="unrelated words entirely", solution_code="#",
                     embedding=embedder.embed("unrelated words entirely")),
        ],
        embedding_dim=dim,
    )
    out = rag_retrieve("needle", store, 2, embedder)
    assert out[0][0].id == "long"
    best_chunk_score = max(
        cosine_similarity(embedder.embed("needle"), embedder.embed(c))
        for c in chunk_text(description)
    )
    assert out[0][1] == pytest.approx(best_chunk_score, abs=1e-12)


def test_rag_zero_query_vector_scores_zero_everywhere():
    rng = random.Random(10)
    store = _random_store(4, 4, rng)
    out = rag_retrieve("q", store, 4, FixedEmbedder({}, 4))  # unknown text -> zeros
    assert [ex.id for ex, _ in out] == ["ex0", "ex1", "ex2", "ex3"]  # store-order ties
    assert all(score == 0.0 for _, score in out)


def test_rag_empty_store_raises():
    with pytest.raises(EmptyStoreError):
        rag_retrieve("q", ExemplarStore(), 4, FixedEmbedder({}, 4))


def test_rag_order_matches_oracle_at_thousand_records():
    rng = random.Random(1000)
    store = _random_store(1000, 4, rng)
    qvec = [rng.uniform(-1, 1) for _ in range(4)]
    got = [ex.id for ex, _ in rag_retrieve("q", store, 1000, FixedEmbedder({"q": qvec}, 4))]

    def cos(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))

    want = [
        ex_id
        for _, _, ex_id in sorted(
            (-cos(qvec, ex.embedding), i, ex.id) for i, ex in enumerate(store)
        )
    ]
    assert got == want


@given(st.integers(min_value=1, max_value=60), st.integers(min_value=0, max_value=2**32 - 1))
def test_rag_order_equals_exhaustive_sort_property(n, seed):
    rng = random.Random(seed)
    store = _random_store(n, 4, rng)
    qvec = [rng.uniform(-1, 1) for _ in range(4)]
    got = [ex.id for ex, _ in rag_retrieve("q", store, n, FixedEmbedder({"q": qvec}, 4))]

    def cos(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        nu = math.sqrt(sum(a * a for a in u)) or 1.0
        nv = math.sqrt(sum(b * b for b in v)) or 1.0
        return dot / (nu * nv)

    want = [
        ex_id
        for _, _, ex_id in sorted(
            (-cos(qvec, ex.embedding), i, ex.id) for i, ex in enumerate(store)
        )
    ]
    assert got == want
