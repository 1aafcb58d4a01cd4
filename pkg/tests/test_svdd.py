import numpy as np
import pytest

from oracles import welzl_meb
from ssad import kernels
from ssad.errors import InfeasibleError
from ssad.features import DensePoints
from ssad.kernels import KernelSpec
from ssad.svdd import (
    OcsvmModel,
    score,
    score_train,
    train_ocsvm_dual,
    train_svdd,
)

LINEAR = KernelSpec("linear")
RBF = KernelSpec("rbf", 1.0)


def test_two_point_example():
    pts = DensePoints(np.array([[0.0, 0.0], [2.0, 0.0]]))
    m = train_svdd(pts, 1.0, LINEAR)
    center = m.alpha @ pts.x
    assert np.allclose(center, [1.0, 0.0], atol=1e-8)
    assert abs(m.r_squared - 1.0) < 1e-8
    assert abs(np.sum(m.alpha) - 1.0) < 1e-8
    s = score(m, DensePoints(np.array([[1.0, 0.0]])))
    assert abs(s[0] + 1.0) < 1e-8  # analytic center scores -1


def test_single_point_degenerate():
    m = train_svdd(DensePoints(np.array([[0.4, -0.2]])), 2.0, RBF)
    assert np.allclose(m.alpha, [1.0])
    assert m.r_squared == 0.0


def test_eta_too_small_rejected():
    pts = DensePoints(np.random.default_rng(0).normal(size=(5, 2)))
    with pytest.raises(InfeasibleError, match="eta_u too small"):
        train_svdd(pts, 0.1, LINEAR)


@pytest.mark.parametrize("seed", range(5))
def test_matches_exact_meb_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 100))
    x = rng.normal(size=(n, 2)) * rng.uniform(0.5, 3.0)
    m = train_svdd(DensePoints(x), 1.5, LINEAR)
    center = m.alpha @ x
    c_meb, r2_meb = welzl_meb(list(x), seed=seed)
    assert np.linalg.norm(center - c_meb) <= 1e-4
    assert abs(m.r_squared - r2_meb) <= 1e-4 * (1.0 + r2_meb)


def test_kkt_score_consistency():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(40, 2))
    eta = 0.08
    m = train_svdd(DensePoints(x), eta, RBF)
    km = kernels.gram(RBF, DensePoints(x))
    s = score_train(m, km.values)
    margin = 1e-7 * max(eta, 1.0)
    at_bound = m.alpha >= eta - margin
    at_zero = m.alpha <= margin
    assert np.all(s[at_bound] >= -1e-6)
    assert np.all(s[at_zero] <= 1e-6)
    free = ~(at_bound | at_zero)
    assert np.all(np.abs(s[free]) <= 1e-6)  # free SVs on the boundary
    assert m.kkt <= 1e-6


def test_score_far_away_under_rbf():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(15, 2))
    m = train_svdd(DensePoints(x), 0.5, RBF)
    far = DensePoints(np.array([[500.0, 500.0]]))
    expected = 1.0 + m.quad - m.r_squared  # cross terms vanish
    assert abs(score(m, far)[0] - expected) < 1e-10


def test_ocsvm_equals_svdd_for_constant_diagonal():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(25, 2))
    eta = 0.3
    m1 = train_svdd(DensePoints(x), eta, RBF)
    m2 = train_ocsvm_dual(DensePoints(x), np.ones(25), eta, RBF)
    assert np.max(np.abs(m1.alpha - m2.alpha)) <= 1e-6
    # two-point configuration under rbf
    pts = DensePoints(np.array([[0.0, 0.0], [2.0, 0.0]]))
    a1 = train_svdd(pts, 1.0, RBF).alpha
    a2 = train_ocsvm_dual(pts, np.ones(2), 1.0, RBF).alpha
    assert np.max(np.abs(a1 - a2)) <= 1e-8


def test_ocsvm_single_point():
    m = train_ocsvm_dual(DensePoints(np.array([[1.0, 1.0]])), np.ones(1), 5.0, RBF)
    assert np.allclose(m.alpha, [1.0])


def test_ocsvm_all_negative_infeasible():
    pts = DensePoints(np.random.default_rng(0).normal(size=(4, 2)))
    with pytest.raises(InfeasibleError):
        train_ocsvm_dual(pts, -np.ones(4), 1.0, RBF)


def test_ocsvm_mixed_labels_vs_grid_oracle():
    # separable 2-D data; compare the decision against a coarse grid search
    # over (w, rho) of the hinge primal
    rng = np.random.default_rng(5)
    x_pos = rng.normal(size=(10, 2)) * 0.3 + np.array([2.0, 0.0])
    x_neg = rng.normal(size=(4, 2)) * 0.3 + np.array([-2.0, 0.0])
    x = np.vstack([x_pos, x_neg])
    y = np.concatenate([np.ones(10), -np.ones(4)])
    eta = 1.0
    m = train_ocsvm_dual(DensePoints(x), y, eta, LINEAR)
    w = (m.alpha * y) @ x

    def primal(wv, rho):
        t = y * (x @ wv - rho)
        return 0.5 * wv @ wv - rho + eta * np.sum(np.maximum(-t, 0.0))

    best = None
    grid = np.linspace(-1.5, 1.5, 25)
    for w0 in grid:
        for w1 in grid:
            for rho in np.linspace(-3, 3, 41):
                v = primal(np.array([w0, w1]), rho)
                if best is None or v < best[0]:
                    best = (v, np.array([w0, w1, rho]))
    from scipy.optimize import minimize

    res = minimize(lambda v: primal(v[:2], v[2]), best[1], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
    w_star, rho_star = res.x[:2], res.x[2]
    assert primal(w, m.rho) <= res.fun + 1e-8  # at least as good as the oracle
    margins = x @ w_star - rho_star
    off_boundary = np.abs(margins) > 1e-3  # free SVs sit exactly on it
    dec_mine = np.sign((x @ w - m.rho)[off_boundary])
    dec_grid = np.sign(margins[off_boundary])
    assert np.array_equal(dec_mine, dec_grid)


def test_model_json_round_trip(tmp_path):
    from ssad.features import TrainingSet
    from ssad.modelio import load_model, save_model, score_model

    rng = np.random.default_rng(9)
    x = rng.normal(size=(12, 2))
    ids = [f"p{i}" for i in range(12)]
    ts = TrainingSet(ids, np.zeros(12, dtype=np.int64), DensePoints(x))
    m = train_svdd(ts.points, 0.5, RBF, point_ids=ts.ids)
    path = tmp_path / "m.json"
    save_model(m, path)
    m2 = load_model(path, ts)
    test_pts = DensePoints(rng.normal(size=(5, 2)))
    assert np.allclose(score_model(m, test_pts), score_model(m2, test_pts), atol=1e-12)
