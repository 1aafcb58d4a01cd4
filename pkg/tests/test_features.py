import base64
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssad.errors import ConfigError, DataError
from ssad.features import (
    NGramConfig,
    Payload,
    SparseVector,
    TrainingSet,
    cloak,
    dot,
    embed,
    load_dataset,
    save_dataset,
)


def test_embed_abab_trigrams():
    v = embed(Payload("a", b"abab"), NGramConfig(n=3, binary=True, normalize=False))
    assert v.entries() == [(b"aba", 1.0), (b"bab", 1.0)]


def test_embed_empty_payload():
    for n in (1, 3, 8):
        v = embed(Payload("e", b""), NGramConfig(n=n))
        assert len(v) == 0


def test_embed_count_mode():
    v = embed(Payload("a", b"aaaa"), NGramConfig(n=3, binary=False, normalize=False))
    assert v.entries() == [(b"aaa", 2.0)]


def test_embed_payload_shorter_than_n():
    v = embed(Payload("s", b"ab"), NGramConfig(n=3))
    assert len(v) == 0


def test_ngram_config_guard():
    with pytest.raises(ConfigError):
        NGramConfig(n=9)
    with pytest.raises(ConfigError):
        NGramConfig(n=0)


def test_dot_disjoint_and_shared():
    cfg = NGramConfig(n=3, binary=True, normalize=False)
    a = embed(Payload("a", b"aaa"), cfg)
    b = embed(Payload("b", b"bbb"), cfg)
    assert dot(a, b) == 0.0
    v1 = SparseVector.from_dict({b"aaa".hex(): 1.0, b"bbb".hex(): 2.0}, 3)
    v2 = SparseVector.from_dict({b"bbb".hex(): 3.0}, 3)
    assert dot(v1, v2) == 6.0


def test_dot_normalized_self():
    v = embed(Payload("x", b"the quick brown fox"), NGramConfig())
    assert abs(dot(v, v) - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=0, max_size=200), st.integers(min_value=1, max_value=8))
def test_embed_sparsity_bound_and_determinism(data, n):
    cfg = NGramConfig(n=n, binary=True, normalize=False)
    v = embed(Payload("p", data), cfg)
    if len(data) >= n:
        assert len(v) <= len(data) - n + 1
    else:
        assert len(v) == 0
    v2 = embed(Payload("p", data), cfg)
    assert np.array_equal(v.keys, v2.keys)
    assert np.array_equal(v.weights, v2.weights)
    assert np.all(np.diff(v.keys.astype(np.uint64)) > 0) if len(v) > 1 else True


@settings(max_examples=40, deadline=None)
@given(st.binary(min_size=3, max_size=120), st.binary(min_size=3, max_size=120))
def test_dot_symmetry_and_cauchy_schwarz(d1, d2):
    cfg = NGramConfig(n=3, normalize=True)
    a = embed(Payload("a", d1), cfg)
    b = embed(Payload("b", d2), cfg)
    assert dot(a, b) == dot(b, a)
    assert dot(a, a) >= 0.0
    if a.norm > 0 and b.norm > 0:
        assert abs(dot(a, b)) <= 1.0 + 1e-12


def test_cloak_concatenates_and_marks():
    header = b"GET / HTTP/1.1\r\nHost: a\r\n\r\n"
    p = cloak(Payload("evil", b"EVIL"), header)
    assert p.data == header + b"EVIL"
    assert len(p.data) == len(header) + 4
    assert p.id != "evil" and p.id.startswith("evil")


def test_cloak_empty_header_rejected():
    with pytest.raises(ConfigError):
        cloak(Payload("x", b"body"), b"")


def test_cloak_shares_header_grams_with_benign():
    cfg = NGramConfig(n=3, binary=True, normalize=False)
    header = b"GET /index.html HTTP/1.1\r\nHost: example.org\r\n\r\n"
    benign = embed(Payload("b", header), cfg)
    attacked = embed(cloak(Payload("e", b"\x90\x90\x90\xcc\xcc"), header), cfg)
    benign_keys = set(benign.keys.tolist())
    attack_keys = set(attacked.keys.tolist())
    assert benign_keys <= attack_keys


def test_cloak_then_embed_equals_embed_of_concatenation():
    cfg = NGramConfig(n=3)
    header = b"POST /x HTTP/1.1\r\n\r\n"
    body = b"\x01\x02\x03\x04\x05payload"
    v1 = embed(cloak(Payload("p", body), header), cfg)
    v2 = embed(Payload("q", header + body), cfg)
    assert np.array_equal(v1.keys, v2.keys)
    assert np.allclose(v1.weights, v2.weights)


def _write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def test_load_dataset_counts_and_ordering(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, [
        {"id": "a", "label": 1, "payload_b64": base64.b64encode(b"abc").decode()},
        {"id": "b", "label": 0, "payload_b64": base64.b64encode(b"def").decode()},
        {"id": "c", "label": -1, "payload_b64": base64.b64encode(b"ghi").decode()},
    ])
    ts = load_dataset(path, NGramConfig())
    assert ts.n_unlabeled == 1 and ts.n_labeled == 2
    assert ts.ids[0] == "b"  # unlabeled first
    assert set(ts.y_star.tolist()) == {-1, 1}


def test_load_dataset_rejects_bad_label(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, [{"id": "a", "label": 2, "payload_b64": ""}])
    with pytest.raises(DataError, match="label"):
        load_dataset(path)


def test_load_dataset_rejects_duplicate_id(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, [
        {"id": "a", "label": 0, "x": [1.0, 2.0]},
        {"id": "a", "label": 0, "x": [3.0, 4.0]},
    ])
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(path)


def test_load_dataset_rejects_mixed_kinds(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, [
        {"id": "a", "label": 0, "payload_b64": base64.b64encode(b"abc").decode()},
        {"id": "b", "label": 0, "x": [1.0]},
    ])
    with pytest.raises(DataError, match="mixed"):
        load_dataset(path)


def test_load_dataset_names_bad_line(tmp_path):
    path = tmp_path / "d.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps({"id": "a", "label": 0, "x": [1.0]}) + "\n")
        fh.write("{broken\n")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(path)


def test_round_trip_payload_dataset(tmp_path):
    rng = np.random.default_rng(0)
    records = []
    for i in range(100):
        data = rng.integers(0, 256, size=int(rng.integers(0, 60))).astype(np.uint8).tobytes()
        records.append({
            "id": f"p{i}",
            "label": int(rng.choice([-1, 0, 1])),
            "payload_b64": base64.b64encode(data).decode(),
        })
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, records)
    ts = load_dataset(path)
    out = tmp_path / "out.jsonl"
    save_dataset(ts, out)
    ts2 = load_dataset(out)
    assert ts.ids == ts2.ids
    assert np.array_equal(ts.labels, ts2.labels)
    assert ts.payloads == ts2.payloads


def test_round_trip_vector_dataset(tmp_path):
    rng = np.random.default_rng(1)
    records = [
        {"id": f"v{i}", "label": int(rng.choice([-1, 0, 1])),
         "x": [float(v) for v in rng.normal(size=3)]}
        for i in range(50)
    ]
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, records)
    ts = load_dataset(path)
    out = tmp_path / "o.jsonl"
    save_dataset(ts, out)
    ts2 = load_dataset(out)
    assert ts.ids == ts2.ids
    assert np.array_equal(ts.points.x, ts2.points.x)  # bit-exact floats
