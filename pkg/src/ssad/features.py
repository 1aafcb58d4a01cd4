"""Byte-payload embedding into sparse n-gram vectors and dataset I/O.

A payload of length T is mapped to the indicator (or count) vector of its
n-grams, living in an implicit 256^n dimensional space; at most T - n + 1
dimensions are populated. Dimension keys are the raw n-byte strings,
stored internally as big-endian uint64 codes so bytewise key order equals
numeric order.

Datasets are JSON Lines with records {"id", "label", "payload_b64"} for
byte payloads or {"id", "label", "x": [...]} for raw vectors; label 0
means unlabeled, +1 nominal, -1 anomaly. The two record kinds must not be
mixed in one file. Records are reordered unlabeled-first on load; their
relative order within each group is preserved.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._backend import core
from .errors import ConfigError, DataError

MAX_NGRAM = 8  # keys must fit a uint64


@dataclass(frozen=True)
class Payload:
    id: str
    data: bytes


@dataclass(frozen=True)
class NGramConfig:
    n: int = 3
    binary: bool = True
    normalize: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n-gram length must be >= 1, got {self.n}")
        if self.n > MAX_NGRAM:
            raise ConfigError(f"n-gram length must be <= {MAX_NGRAM}, got {self.n}")


class SparseVector:
    """Sorted sparse vector over the n-gram space.

    ``keys`` are strictly increasing uint64 codes, ``weights`` the matching
    nonzero weights. ``gram_n`` records the n used for key decoding.
    """

    __slots__ = ("keys", "weights", "gram_n", "_norm")

    def __init__(self, keys: np.ndarray, weights: np.ndarray, gram_n: int):
        self.keys = np.asarray(keys, dtype=np.uint64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.gram_n = int(gram_n)
        self._norm = None

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def norm(self) -> float:
        if self._norm is None:
            self._norm = float(np.sqrt(np.dot(self.weights, self.weights)))
        return self._norm

    def normalized(self) -> "SparseVector":
        if self.norm == 0.0:
            return self
        out = SparseVector(self.keys, self.weights / self.norm, self.gram_n)
        out._norm = 1.0
        return out

    def entries(self) -> list[tuple[bytes, float]]:
        """Entries as (n-gram byte string, weight), in key order."""
        width = self.gram_n
        return [
            (int(k).to_bytes(width, "big"), float(w))
            for k, w in zip(self.keys, self.weights)
        ]

    def to_dict(self) -> dict[str, float]:
        """Hex-encoded key -> weight mapping (bit-exact serializable)."""
        return {gram.hex(): w for gram, w in self.entries()}

    @classmethod
    def from_dict(cls, d: dict[str, float], gram_n: int) -> "SparseVector":
        pairs = sorted((int(h, 16), float(w)) for h, w in d.items())
        keys = np.array([p[0] for p in pairs], dtype=np.uint64)
        weights = np.array([p[1] for p in pairs], dtype=np.float64)
        return cls(keys, weights, gram_n)


def embed(payload: Payload, cfg: NGramConfig) -> SparseVector:
    """Map payload bytes to their sparse n-gram vector.

    Payloads shorter than n yield the empty vector. Binary mode sets all
    weights to 1 before optional unit normalization.
    """
    keys, counts = core.ngram_codes(payload.data, cfg.n)
    weights = np.ones_like(counts) if cfg.binary else counts
    vec = SparseVector(keys, weights, cfg.n)
    return vec.normalized() if cfg.normalize else vec


def dot(a: SparseVector, b: SparseVector) -> float:
    """Inner product by merging the two sorted entry lists."""
    return core.merge_dot(a.keys, a.weights, b.keys, b.weights)


def cloak(payload: Payload, header: bytes) -> Payload:
    """Prepend a benign header block, leaving the body unaltered."""
    if not header:
        raise ConfigError("cloak header must be nonempty")
    return Payload(id=payload.id + "+cloaked", data=header + payload.data)


class SparsePoints:
    """Column-compressed batch of sparse vectors (shared key/weight pools)."""

    kind = "payload"

    def __init__(self, vectors: Sequence[SparseVector]):
        self.vectors = list(vectors)
        self.indptr = np.zeros(len(self.vectors) + 1, dtype=np.int64)
        for i, v in enumerate(self.vectors):
            self.indptr[i + 1] = self.indptr[i] + len(v)
        self.keys = (
            np.concatenate([v.keys for v in self.vectors])
            if self.vectors
            else np.empty(0, dtype=np.uint64)
        )
        self.weights = (
            np.concatenate([v.weights for v in self.vectors])
            if self.vectors
            else np.empty(0, dtype=np.float64)
        )

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, i: int) -> SparseVector:
        return self.vectors[i]

    def take(self, idx: Iterable[int]) -> "SparsePoints":
        return SparsePoints([self.vectors[i] for i in idx])


class DensePoints:
    """Batch of raw real vectors, one row per point."""

    kind = "vector"

    def __init__(self, x: np.ndarray):
        self.x = np.atleast_2d(np.asarray(x, dtype=np.float64))

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.x[i]

    def take(self, idx) -> "DensePoints":
        return DensePoints(self.x[np.fromiter(idx, dtype=np.int64)])


@dataclass
class TrainingSet:
    """n unlabeled points followed by m labeled ones (labels in {-1,+1}).

    ``labels`` uses 0 for unlabeled. Construction enforces the
    unlabeled-first ordering, keeping ids aligned with points.
    """

    ids: list[str]
    labels: np.ndarray
    points: SparsePoints | DensePoints
    payloads: list[bytes] | None = None
    cfg: NGramConfig | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.ids) != len(self.labels) or len(self.ids) != len(self.points):
            raise DataError("ids, labels and points must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in dataset")
        bad = set(np.unique(self.labels)) - {-1, 0, 1}
        if bad:
            raise DataError(f"labels must be in {{-1, 0, +1}}, found {sorted(bad)}")
        order = np.concatenate(
            [np.flatnonzero(self.labels == 0), np.flatnonzero(self.labels != 0)]
        )
        if not np.array_equal(order, np.arange(len(order))):
            self.ids = [self.ids[i] for i in order]
            self.labels = self.labels[order]
            self.points = self.points.take(order)
            if self.payloads is not None:
                self.payloads = [self.payloads[i] for i in order]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_unlabeled(self) -> int:
        return int(np.sum(self.labels == 0))

    @property
    def n_labeled(self) -> int:
        return len(self.labels) - self.n_unlabeled

    @property
    def y_star(self) -> np.ndarray:
        return self.labels[self.labels != 0]

    def subset(self, idx: Sequence[int]) -> "TrainingSet":
        idx = list(idx)
        return TrainingSet(
            ids=[self.ids[i] for i in idx],
            labels=self.labels[np.asarray(idx, dtype=np.int64)]
            if idx
            else np.empty(0, dtype=np.int64),
            points=self.points.take(idx),
            payloads=[self.payloads[i] for i in idx] if self.payloads is not None else None,
            cfg=self.cfg,
        )

    def with_labels(self, labels: np.ndarray) -> "TrainingSet":
        return TrainingSet(
            ids=list(self.ids),
            labels=np.asarray(labels, dtype=np.int64).copy(),
            points=self.points,
            payloads=self.payloads,
            cfg=self.cfg,
        )


def load_dataset(path, cfg: NGramConfig | None = None) -> TrainingSet:
    """Read a JSON Lines dataset; embeds payload records with ``cfg``.

    Raises DataError naming the offending line for malformed records,
    duplicate ids, out-of-domain labels, or mixed record kinds.
    """
    cfg = cfg or NGramConfig()
    ids: list[str] = []
    labels: list[int] = []
    payloads: list[bytes] = []
    raw_rows: list[list[float]] = []
    kind = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "label" not in rec:
                raise DataError(f"{path}:{lineno}: record needs 'id' and 'label'")
            label = rec["label"]
            if label not in (-1, 0, 1):
                raise DataError(f"{path}:{lineno}: label must be -1, 0 or +1, got {label!r}")
            this_kind = "payload" if "payload_b64" in rec else "vector" if "x" in rec else None
            if this_kind is None:
                raise DataError(f"{path}:{lineno}: record needs 'payload_b64' or 'x'")
            if kind is None:
                kind = this_kind
            elif kind != this_kind:
                raise DataError(
                    f"{path}:{lineno}: mixed record kinds ({kind} then {this_kind})"
                )
            ids.append(str(rec["id"]))
            labels.append(int(label))
            if this_kind == "payload":
                try:
                    payloads.append(base64.b64decode(rec["payload_b64"], validate=True))
                except Exception as exc:
                    raise DataError(f"{path}:{lineno}: invalid base64 payload") from exc
            else:
                row = rec["x"]
                if not isinstance(row, list) or not all(
                    isinstance(v, (int, float)) for v in row
                ):
                    raise DataError(f"{path}:{lineno}: 'x' must be a list of numbers")
                raw_rows.append([float(v) for v in row])
                if len(raw_rows[0]) != len(row):
                    raise DataError(f"{path}:{lineno}: inconsistent vector dimension")
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise DataError(f"{path}: duplicate id {dup!r}")
    if kind == "payload":
        vecs = [embed(Payload(i, p), cfg) for i, p in zip(ids, payloads)]
        points: SparsePoints | DensePoints = SparsePoints(vecs)
        return TrainingSet(ids, np.array(labels), points, payloads=payloads, cfg=cfg)
    points = DensePoints(np.array(raw_rows)) if raw_rows else DensePoints(np.empty((0, 0)))
    return TrainingSet(ids, np.array(labels), points, cfg=cfg)


def save_dataset(ts: TrainingSet, path) -> None:
    """Write a TrainingSet back to JSON Lines (round-trips bit-exactly)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, pid in enumerate(ts.ids):
            if ts.payloads is not None:
                rec = {
                    "id": pid,
                    "label": int(ts.labels[i]),
                    "payload_b64": base64.b64encode(ts.payloads[i]).decode("ascii"),
                }
            else:
                rec = {
                    "id": pid,
                    "label": int(ts.labels[i]),
                    "x": [float(v) for v in ts.points[i]],
                }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
