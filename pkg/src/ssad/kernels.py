"""Kernel evaluation and Gram-matrix construction.

Two families: linear (plain inner product) and rbf with
k(a, b) = exp(-||a - b||^2 / (2 sigma^2)). A kernel matrix is
translation-invariant when its diagonal is constant (within 1e-10);
rbf always is, linear is over unit-norm vectors.

Gram matrices are assembled from fixed row blocks so that serial and
parallel construction produce bitwise-identical results; the upper
triangle is mirrored afterwards, making symmetry exact.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._backend import core
from .errors import ConfigError
from .features import DensePoints, SparsePoints, SparseVector, dot

DIAG_TOL = 1e-10
_BLOCK = 128


@dataclass(frozen=True)
class KernelSpec:
    family: str = "rbf"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ("linear", "rbf"):
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if self.family == "rbf" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"rbf sigma must be finite and positive, got {self.sigma}")

    def to_json(self) -> dict:
        if self.family == "linear":
            return {"family": "linear"}
        return {"family": "rbf", "sigma": self.sigma}

    @classmethod
    def from_json(cls, d: dict) -> "KernelSpec":
        return cls(family=d["family"], sigma=float(d.get("sigma", 1.0)))


@dataclass
class KernelMatrix:
    values: np.ndarray
    self_similarity: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.values)


Points = Union[SparsePoints, DensePoints]


def eval_pair(spec: KernelSpec, a, b) -> float:
    """Kernel value for a single pair (SparseVector or 1-D arrays)."""
    if isinstance(a, SparseVector):
        d_ab = dot(a, b)
        d_aa = dot(a, a)
        d_bb = dot(b, b)
    else:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        d_ab = float(a @ b)
        d_aa = float(a @ a)
        d_bb = float(b @ b)
    if spec.family == "linear":
        return d_ab
    d2 = max(d_aa - 2.0 * d_ab + d_bb, 0.0)
    return float(np.exp(-d2 / (2.0 * spec.sigma**2)))


def _linear_blocks(points: Points, jobs: int) -> np.ndarray:
    n = len(points)
    out = np.empty((n, n), dtype=np.float64)
    spans = [(s, min(s + _BLOCK, n)) for s in range(0, n, _BLOCK)]

    if isinstance(points, DensePoints):
        x = points.x

        def fill(span):
            s, e = span
            out[s:e] = x[s:e] @ x.T
    else:

        def fill(span):
            s, e = span
            sub = np.asarray(points.indptr[s : e + 1]) - points.indptr[s]
            lo, hi = points.indptr[s], points.indptr[e]
            out[s:e] = core.cross_gram_sparse(
                sub, points.keys[lo:hi], points.weights[lo:hi],
                points.indptr, points.keys, points.weights,
            )

    if jobs > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fill, spans))
    else:
        for span in spans:
            fill(span)
    return out


def linear_cross(a: Points, b: Points) -> np.ndarray:
    """Plain inner products between two point batches (len(a) x len(b))."""
    if isinstance(a, DensePoints):
        return a.x @ b.x.T
    return core.cross_gram_sparse(
        a.indptr, a.keys, a.weights, b.indptr, b.keys, b.weights
    )


def self_dots(points: Points) -> np.ndarray:
    if isinstance(points, DensePoints):
        return np.einsum("ij,ij->i", points.x, points.x)
    return np.array([float(np.dot(v.weights, v.weights)) for v in points.vectors])


def gram(spec: KernelSpec, points: Points, jobs: int = 1) -> KernelMatrix:
    """Full Gram matrix over a point batch; exactly symmetric."""
    if len(points) == 0:
        raise ConfigError("gram requires a nonempty point list")
    g = _linear_blocks(points, jobs)
    if spec.family == "rbf":
        d = np.diag(g).copy()
        d2 = np.maximum(d[:, None] + d[None, :] - 2.0 * g, 0.0)
        g = np.exp(-d2 / (2.0 * spec.sigma**2))
    iu = np.triu_indices(g.shape[0], k=1)
    g[(iu[1], iu[0])] = g[iu]
    mat = KernelMatrix(values=g)
    flag, s = is_translation_invariant(mat)
    mat.self_similarity = s if flag else None
    return mat


def cross(spec: KernelSpec, a: Points, b: Points) -> np.ndarray:
    """Kernel block k(a_i, b_j) for scoring points b against a training set a."""
    g = linear_cross(a, b)
    if spec.family == "linear":
        return g
    da = self_dots(a)
    db = self_dots(b)
    d2 = np.maximum(da[:, None] + db[None, :] - 2.0 * g, 0.0)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


def is_translation_invariant(matrix: KernelMatrix) -> tuple[bool, Optional[float]]:
    """True plus the constant s when the diagonal is constant within 1e-10."""
    d = matrix.diag
    s = float(d[0])
    if np.max(np.abs(d - s)) <= DIAG_TOL:
        return True, s
    return False, None
