"""Gradient-based trainer for the unconstrained semi-supervised
hypersphere objective.

Variables are the squared radius r2, the labeled margin gamma, and the
expansion coefficients alpha over all n+m points (labeled coordinates
weight y*phi(x*)). Slacks are smoothed with the Huber loss, so the
objective is differentiable and plain descent with backtracking applies;
the problem stays non-convex, hence random restarts.

Internally the expansion is handled through the plain-phi coefficients
beta = ybar * alpha (ybar being +1 for unlabeled points), for which the
squared center distance of any training point a is
k_aa - 2 (K beta)_a + beta'K beta regardless of its label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .kernels import KernelMatrix, KernelSpec, Points

GRAD_TOL = 1e-5
MAX_ITERS = 10_000
ARMIJO_C1 = 1e-4
ARMIJO_BACKTRACK = 0.5
ARMIJO_MAX_HALVINGS = 40


@dataclass(frozen=True)
class HuberLoss:
    """Piecewise linear/quadratic/zero smoothing of the hinge.

    Linear with slope -1 below delta - epsilon, zero above delta + epsilon,
    quadratic blend in between; continuously differentiable at both seams.
    """

    delta: float = 0.0
    epsilon: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DataError(f"huber epsilon must be positive, got {self.epsilon}")

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        lo = self.delta - self.epsilon
        hi = self.delta + self.epsilon
        quad = (hi - t) ** 2 / (4.0 * self.epsilon)
        return np.where(t <= lo, self.delta - t, np.where(t <= hi, quad, 0.0))

    def grad(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        lo = self.delta - self.epsilon
        hi = self.delta + self.epsilon
        quad = -(hi - t) / (2.0 * self.epsilon)
        return np.where(t <= lo, -1.0, np.where(t <= hi, quad, 0.0))


def huber(loss: HuberLoss, t) -> float:
    return float(loss.value(np.asarray(t, dtype=np.float64)))


def huber_grad(loss: HuberLoss, t) -> float:
    return float(loss.grad(np.asarray(t, dtype=np.float64)))


@dataclass
class SsadModel:
    alpha: np.ndarray
    r_squared: float
    gamma: float
    kappa: float
    eta_u: float
    eta_l: float
    kernel: KernelSpec
    loss: HuberLoss
    labels: np.ndarray
    train_points: Points
    objective: float
    quad: float = 0.0  # beta'K beta, cached for scoring
    restarts_used: int = 0
    grad_norm: float = 0.0
    local_optima: list[float] = field(default_factory=list)
    point_ids: list[str] = field(default_factory=list)

    @property
    def ybar(self) -> np.ndarray:
        return np.where(self.labels == 0, 1.0, self.labels.astype(np.float64))

    @property
    def beta(self) -> np.ndarray:
        return self.ybar * self.alpha

    def to_json(self) -> dict:
        return {
            "kind": "ssad-primal",
            "alpha": [float(v) for v in self.alpha],
            "r2": float(self.r_squared),
            "gamma": float(self.gamma),
            "kappa": float(self.kappa),
            "eta_u": float(self.eta_u),
            "eta_l": float(self.eta_l),
            "loss": {"delta": self.loss.delta, "epsilon": self.loss.epsilon},
            "kernel": self.kernel.to_json(),
            "point_ids": list(self.point_ids),
            "labels": [int(v) for v in self.labels],
        }


def _split(labels: np.ndarray):
    labels = np.asarray(labels, dtype=np.int64)
    unlab = labels == 0
    lab = ~unlab
    ybar = np.where(unlab, 1.0, labels.astype(np.float64))
    return unlab, lab, ybar


def objective(
    r2: float,
    gamma: float,
    alpha: np.ndarray,
    gram: np.ndarray,
    labels: np.ndarray,
    kappa: float,
    eta_u: float,
    eta_l: float,
    loss: HuberLoss,
) -> float:
    """Smoothed objective value at (r2, gamma, alpha)."""
    if len(alpha) != gram.shape[0] or len(labels) != gram.shape[0]:
        raise DataError("alpha/labels size must match the Gram matrix")
    unlab, lab, ybar = _split(labels)
    beta = ybar * alpha
    kb = gram @ beta
    quad = float(beta @ kb)
    d2 = np.diag(gram) - 2.0 * kb + quad
    t_u = r2 - d2[unlab]
    obj = r2 - kappa * gamma + eta_u * float(np.sum(loss.value(t_u)))
    if np.any(lab):
        y = ybar[lab]
        t_l = y * (r2 - d2[lab]) - gamma
        obj += eta_l * float(np.sum(loss.value(t_l)))
    return obj


def gradient(
    r2: float,
    gamma: float,
    alpha: np.ndarray,
    gram: np.ndarray,
    labels: np.ndarray,
    kappa: float,
    eta_u: float,
    eta_l: float,
    loss: HuberLoss,
):
    """Analytic gradient (d_r2, d_gamma, d_alpha) of the smoothed objective."""
    unlab, lab, ybar = _split(labels)
    beta = ybar * alpha
    kb = gram @ beta
    quad = float(beta @ kb)
    d2 = np.diag(gram) - 2.0 * kb + quad
    g = np.zeros_like(alpha)
    lp_u = loss.grad(r2 - d2[unlab])
    d_r2 = 1.0 + eta_u * float(np.sum(lp_u))
    d_gamma = -kappa
    g[unlab] = eta_u * lp_u
    if np.any(lab):
        y = ybar[lab]
        lp_l = loss.grad(y * (r2 - d2[lab]) - gamma)
        d_r2 += eta_l * float(np.sum(y * lp_l))
        d_gamma -= eta_l * float(np.sum(lp_l))
        g[lab] = eta_l * y * lp_l
    # d obj / d beta = 2K(g - sum(g) beta); chain back to alpha via ybar
    d_beta = 2.0 * (gram @ g - float(np.sum(g)) * kb)
    d_alpha = ybar * d_beta
    return d_r2, d_gamma, d_alpha


def train_ssad_primal(
    points: Points,
    labels: np.ndarray,
    kappa: float,
    eta_u: float,
    eta_l: float,
    kernel: KernelSpec,
    loss: HuberLoss = HuberLoss(),
    restarts: int = 5,
    seed: int = 0,
    gram: Optional[KernelMatrix] = None,
    point_ids: Optional[list[str]] = None,
    max_iters: int = MAX_ITERS,
    grad_tol: float = GRAD_TOL,
) -> SsadModel:
    """Descent with Armijo backtracking from ``restarts`` initializations;
    returns the best local optimum (ties broken by restart index)."""
    labels = np.asarray(labels, dtype=np.int64)
    nm = len(points)
    if nm == 0:
        raise DataError("training set is empty")
    km = gram if gram is not None else kernels.gram(kernel, points)
    k = km.values
    unlab, lab, ybar = _split(labels)
    n_u = int(np.sum(unlab))
    has_labeled = bool(np.any(lab))
    rng = np.random.default_rng(seed)

    def base_init():
        alpha0 = np.zeros(nm)
        if n_u:
            alpha0[unlab] = 1.0 / n_u
        else:
            alpha0[lab] = 1.0 / nm  # degenerate all-labeled start
        beta0 = ybar * alpha0
        kb = k @ beta0
        d2 = np.diag(k) - 2.0 * kb + float(beta0 @ kb)
        r2_0 = float(np.median(d2[unlab])) if n_u else float(np.median(d2))
        return r2_0, (0.1 if has_labeled else 0.0), alpha0

    best = None
    optima: list[float] = []
    used = 0
    for restart in range(max(restarts, 1)):
        r2, gamma, alpha = base_init()
        if restart > 0:
            alpha = alpha + rng.normal(0.0, 0.1 / max(nm, 1), size=nm)
        try:
            r2, gamma, alpha, obj, gn, iters = _descend(
                r2, gamma, alpha, k, labels, kappa, eta_u, eta_l, loss,
                has_labeled, max_iters, grad_tol,
            )
        except NumericalError:
            continue
        used += 1
        optima.append(obj)
        if best is None or obj < best[3] - 1e-15:
            best = (r2, gamma, alpha, obj, gn)
    if best is None:
        raise NumericalError("all restarts diverged to non-finite objectives")
    r2, gamma, alpha, obj, gn = best
    beta = ybar * alpha
    quad = float(beta @ (k @ beta))
    return SsadModel(
        alpha=alpha,
        r_squared=r2,
        gamma=gamma,
        kappa=kappa,
        eta_u=eta_u,
        eta_l=eta_l,
        kernel=kernel,
        loss=loss,
        labels=labels,
        train_points=points,
        objective=obj,
        quad=quad,
        restarts_used=used,
        grad_norm=gn,
        local_optima=optima,
        point_ids=point_ids or [str(i) for i in range(nm)],
    )


def _descend(r2, gamma, alpha, k, labels, kappa, eta_u, eta_l, loss,
             has_labeled, max_iters, grad_tol):
    args = (k, labels, kappa, eta_u, eta_l, loss)
    obj = objective(r2, gamma, alpha, *args)
    if not np.isfinite(obj):
        raise NumericalError("non-finite objective at initialization")
    step = 1.0
    gn = np.inf
    it = 0
    for it in range(max_iters):
        d_r2, d_gamma, d_alpha = gradient(r2, gamma, alpha, *args)
        if not has_labeled:
            d_gamma = 0.0
        elif gamma <= 0.0 and d_gamma > 0.0:
            d_gamma = 0.0  # projected component at the gamma >= 0 face
        gn = float(np.sqrt(d_r2**2 + d_gamma**2 + float(d_alpha @ d_alpha)))
        if gn <= grad_tol:
            break
        sq = gn * gn
        t = step
        accepted = False
        for _ in range(ARMIJO_MAX_HALVINGS):
            r2_c = r2 - t * d_r2
            gamma_c = max(gamma - t * d_gamma, 0.0) if has_labeled else 0.0
            alpha_c = alpha - t * d_alpha
            obj_c = objective(r2_c, gamma_c, alpha_c, *args)
            if np.isfinite(obj_c) and obj_c <= obj - ARMIJO_C1 * t * sq:
                r2, gamma, alpha, obj = r2_c, gamma_c, alpha_c, obj_c
                step = min(t * 2.0, 1e6)
                accepted = True
                break
            t *= ARMIJO_BACKTRACK
        if not accepted:
            break  # no descent direction at line-search resolution
    if not np.isfinite(obj):
        raise NumericalError("objective diverged during descent")
    return r2, gamma, alpha, obj, gn, it


def score(model: SsadModel, points: Points) -> np.ndarray:
    """||phi(x) - c||^2 - R^2 (positive = anomalous)."""
    kx = kernels.cross(model.kernel, model.train_points, points)
    if model.kernel.family == "rbf":
        kxx = np.ones(len(points))
    else:
        kxx = kernels.self_dots(points)
    return kxx - 2.0 * (model.beta @ kx) + model.quad - model.r_squared


def score_train(model: SsadModel, gram: np.ndarray) -> np.ndarray:
    beta = model.beta
    kb = gram @ beta
    return np.diag(gram) - 2.0 * kb + model.quad - model.r_squared
