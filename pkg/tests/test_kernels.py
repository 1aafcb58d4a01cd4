import numpy as np
import pytest

from ssad import kernels
from ssad.errors import ConfigError
from ssad.features import DensePoints, NGramConfig, Payload, SparsePoints, embed
from ssad.kernels import KernelSpec


def _sparse_batch(seed=0, n=12):
    rng = np.random.default_rng(seed)
    cfg = NGramConfig(n=3, normalize=True)
    payloads = [rng.integers(0, 256, size=int(rng.integers(5, 80))).astype(np.uint8).tobytes()
                for _ in range(n)]
    return SparsePoints([embed(Payload(str(i), p), cfg) for i, p in enumerate(payloads)])


def test_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec("poly")
    with pytest.raises(ConfigError):
        KernelSpec("rbf", sigma=0.0)
    with pytest.raises(ConfigError):
        KernelSpec("rbf", sigma=float("inf"))


def test_eval_rbf_identical_points():
    spec = KernelSpec("rbf", 1.0)
    x = np.array([0.3, -0.7])
    assert kernels.eval_pair(spec, x, x) == 1.0


def test_eval_linear_orthogonal():
    spec = KernelSpec("linear")
    assert kernels.eval_pair(spec, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_eval_rbf_closed_form():
    spec = KernelSpec("rbf", 1.0)
    a = np.array([0.0, 0.0])
    b = np.array([np.sqrt(2.0), 0.0])  # squared distance 2
    assert abs(kernels.eval_pair(spec, a, b) - np.exp(-1.0)) < 1e-12


def test_gram_rbf_self_similarity_one():
    pts = DensePoints(np.random.default_rng(0).normal(size=(10, 2)))
    km = kernels.gram(KernelSpec("rbf", 0.8), pts)
    assert km.self_similarity == 1.0
    assert np.all(np.diag(km.values) == 1.0)
    assert np.all(km.values > 0.0) and np.all(km.values <= 1.0)


def test_gram_linear_unit_normalized_sparse():
    pts = _sparse_batch()
    km = kernels.gram(KernelSpec("linear"), pts)
    flag, s = kernels.is_translation_invariant(km)
    assert flag and abs(s - 1.0) < 1e-10


def test_gram_linear_differing_norms_not_invariant():
    pts = DensePoints(np.array([[1.0, 0.0], [2.0, 0.0]]))
    km = kernels.gram(KernelSpec("linear"), pts)
    flag, s = kernels.is_translation_invariant(km)
    assert not flag and s is None
    assert km.self_similarity is None


def test_gram_exact_symmetry_and_psd():
    rng = np.random.default_rng(3)
    pts = DensePoints(rng.normal(size=(40, 3)))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 1.3)):
        km = kernels.gram(spec, pts)
        assert np.array_equal(km.values, km.values.T)  # exact, by mirroring
        evals = np.linalg.eigvalsh(km.values)
        assert evals.min() >= -1e-8


def test_gram_empty_rejected():
    with pytest.raises(ConfigError):
        kernels.gram(KernelSpec("linear"), DensePoints(np.empty((0, 2))))


@pytest.mark.parametrize("family", ["linear", "rbf"])
def test_parallel_gram_bitwise_identical(family):
    spec = KernelSpec(family, 0.9)
    dense = DensePoints(np.random.default_rng(5).normal(size=(300, 2)))
    a = kernels.gram(spec, dense, jobs=1).values
    b = kernels.gram(spec, dense, jobs=4).values
    assert np.array_equal(a, b)
    sparse = _sparse_batch(seed=7, n=150)
    a = kernels.gram(spec, sparse, jobs=1).values
    b = kernels.gram(spec, sparse, jobs=3).values
    assert np.array_equal(a, b)


def test_cross_matches_eval_pair():
    rng = np.random.default_rng(11)
    a = DensePoints(rng.normal(size=(6, 2)))
    b = DensePoints(rng.normal(size=(4, 2)))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 0.7)):
        block = kernels.cross(spec, a, b)
        for i in range(6):
            for j in range(4):
                assert abs(block[i, j] - kernels.eval_pair(spec, a[i], b[j])) < 1e-12


def test_sparse_gram_matches_pairwise_dot():
    pts = _sparse_batch(seed=2, n=10)
    km = kernels.gram(KernelSpec("linear"), pts)
    from ssad.features import dot

    for i in range(10):
        for j in range(10):
            assert abs(km.values[i, j] - dot(pts[i], pts[j])) < 1e-12
