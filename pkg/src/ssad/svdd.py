"""Unsupervised hypersphere description and the one-class SVM dual.

The sphere dual maximizes sum_i a_i k_ii - a'Ka over the capped simplex
{sum a = 1, 0 <= a <= eta_u}; the anomaly score of x is
||phi(x) - c||^2 - R^2 with the center expanded as c = sum_i a_i phi(x_i).
Positive scores are anomalous.

The one-class SVM dual maximizes -0.5 sum a_i a_j y_i y_j k_ij subject to
sum a_i y_i = 1 and the same box; for translation-invariant kernels it
shares its optimum with the sphere-with-negatives dual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import InfeasibleError
from .kernels import KernelMatrix, KernelSpec, Points
from .solvers import solve_qp

FREE_MARGIN = 1e-7


@dataclass
class SphereModel:
    alpha: np.ndarray
    r_squared: float
    eta_u: float
    kernel: KernelSpec
    train_points: Points
    quad: float  # a'Ka, cached for scoring
    kkt: float = 0.0
    dual_obj: float = 0.0
    point_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kind": "svdd",
            "kernel": self.kernel.to_json(),
            "alpha": [float(v) for v in self.alpha],
            "r2": float(self.r_squared),
            "eta_u": float(self.eta_u),
            "point_ids": list(self.point_ids),
        }


@dataclass
class OcsvmModel:
    alpha: np.ndarray
    labels: np.ndarray
    rho: float
    eta: float
    kernel: KernelSpec
    train_points: Points
    dual_obj: float = 0.0
    kkt: float = 0.0
    point_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kind": "ocsvm",
            "kernel": self.kernel.to_json(),
            "alpha": [float(v) for v in self.alpha],
            "labels": [int(v) for v in self.labels],
            "rho": float(self.rho),
            "eta": float(self.eta),
            "point_ids": list(self.point_ids),
        }


def _free_mask(alpha: np.ndarray, eta: float) -> np.ndarray:
    margin = FREE_MARGIN * max(eta, 1.0)
    return (alpha > margin) & (alpha < eta - margin)


def radius_from_alpha(alpha: np.ndarray, gram: np.ndarray, eta: float) -> float:
    """R^2 as the median squared center distance over free support vectors,
    falling back to the max over all alpha > 0 when none are free."""
    ka = gram @ alpha
    quad = float(alpha @ ka)
    d2 = np.diag(gram) - 2.0 * ka + quad
    free = _free_mask(alpha, eta)
    if np.any(free):
        return float(np.median(d2[free]))
    pos = alpha > FREE_MARGIN * max(eta, 1.0)
    if np.any(pos):
        return float(np.max(d2[pos]))
    return float(np.max(d2))


def train_svdd(
    points: Points,
    eta_u: float,
    kernel: KernelSpec,
    gram: Optional[KernelMatrix] = None,
    point_ids: Optional[list[str]] = None,
    tol: float = 1e-8,
    k_norm: Optional[float] = None,
    warm: Optional[np.ndarray] = None,
) -> SphereModel:
    n = len(points)
    if n < 1:
        raise InfeasibleError("svdd requires at least one point")
    if eta_u <= 0 or eta_u * n < 1.0 - 1e-12:
        raise InfeasibleError(
            f"eta_u too small: eta_u * n = {eta_u * n:.6g} < 1 leaves the simplex empty"
        )
    km = gram if gram is not None else kernels.gram(kernel, points)
    k = km.values
    res = solve_qp(
        Q=2.0 * k,
        q=np.diag(k).copy(),
        sign=np.ones(n),
        c=1.0,
        lo=0.0,
        hi=eta_u,
        tol=tol,
        lipschitz=2.0 * k_norm if k_norm is not None else None,
        warm=warm,
    )
    alpha = res.x
    quad = float(alpha @ (k @ alpha))
    r2 = radius_from_alpha(alpha, k, eta_u) if n > 1 else 0.0
    dual_obj = float(np.diag(k) @ alpha) - quad
    return SphereModel(
        alpha=alpha,
        r_squared=r2,
        eta_u=eta_u,
        kernel=kernel,
        train_points=points,
        quad=quad,
        kkt=res.kkt,
        dual_obj=dual_obj,
        point_ids=point_ids or [str(i) for i in range(n)],
    )


def center_distances_sq(model: SphereModel, points: Points) -> np.ndarray:
    """||phi(x) - c||^2 for a batch of points."""
    kx = kernels.cross(model.kernel, model.train_points, points)
    if model.kernel.family == "rbf":
        kxx = np.ones(len(points))
    else:
        kxx = kernels.self_dots(points)
    return kxx - 2.0 * (model.alpha @ kx) + model.quad


def score(model: SphereModel, points: Points) -> np.ndarray:
    """Anomaly scores ||phi(x) - c||^2 - R^2 (positive = anomalous)."""
    return center_distances_sq(model, points) - model.r_squared


def score_train(model: SphereModel, gram: np.ndarray) -> np.ndarray:
    """Scores of the training points from the cached Gram matrix."""
    ka = gram @ model.alpha
    return np.diag(gram) - 2.0 * ka + model.quad - model.r_squared


def train_ocsvm_dual(
    points: Points,
    labels: np.ndarray,
    eta: float,
    kernel: KernelSpec,
    gram: Optional[KernelMatrix] = None,
    point_ids: Optional[list[str]] = None,
    tol: float = 1e-8,
    k_norm: Optional[float] = None,
    warm: Optional[np.ndarray] = None,
) -> OcsvmModel:
    labels = np.asarray(labels, dtype=np.float64)
    n = len(points)
    n_pos = int(np.sum(labels > 0))
    if n_pos == 0:
        raise InfeasibleError("one-class SVM dual needs at least one positive label")
    if eta * n_pos < 1.0 - 1e-12:
        raise InfeasibleError(
            f"eta too small: eta * #pos = {eta * n_pos:.6g} < 1 makes sum(alpha*y) = 1 unattainable"
        )
    km = gram if gram is not None else kernels.gram(kernel, points)
    k = km.values
    d = labels
    q_mat = k * np.outer(d, d)
    res = solve_qp(
        Q=q_mat,
        q=np.zeros(n),
        sign=d,
        c=1.0,
        lo=0.0,
        hi=eta,
        tol=tol,
        lipschitz=k_norm,
        warm=warm,
    )
    alpha = res.x
    scores_w = k @ (alpha * d)  # w'phi(x_i) on training points
    rho = _recover_rho(alpha, d, scores_w, eta)
    dual_obj = -0.5 * float(alpha @ (q_mat @ alpha))
    return OcsvmModel(
        alpha=alpha,
        labels=labels.astype(np.int64),
        rho=rho,
        eta=eta,
        kernel=kernel,
        train_points=points,
        dual_obj=dual_obj,
        kkt=res.kkt,
        point_ids=point_ids or [str(i) for i in range(n)],
    )


def _recover_rho(alpha: np.ndarray, y: np.ndarray, scores_w: np.ndarray, eta: float) -> float:
    free = _free_mask(alpha, eta)
    if np.any(free):
        return float(np.median(scores_w[free]))
    # KKT interval: alpha = 0 gives y (w'phi - rho) >= 0, alpha = eta the reverse
    lbs, ubs = [], []
    margin = FREE_MARGIN * max(eta, 1.0)
    for i in range(len(alpha)):
        if alpha[i] <= margin:
            (ubs if y[i] > 0 else lbs).append(scores_w[i])
        elif alpha[i] >= eta - margin:
            (lbs if y[i] > 0 else ubs).append(scores_w[i])
    lb = max(lbs) if lbs else None
    ub = min(ubs) if ubs else None
    if lb is None and ub is None:
        return 0.0
    if lb is None:
        return float(ub)
    if ub is None:
        return float(lb)
    return float(0.5 * (lb + ub))


def ocsvm_scores(model: OcsvmModel, points: Points) -> np.ndarray:
    """rho - w'phi(x); positive = anomalous."""
    kx = kernels.cross(model.kernel, model.train_points, points)
    return model.rho - (model.alpha * model.labels) @ kx
