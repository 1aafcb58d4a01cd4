"""Convex semi-supervised anomaly detection: hyperplane primal, its
Fenchel dual, and the strong-duality instrumentation.

With the hinge loss the conjugate terms collapse to box constraints, so
the dual is

    max  -0.5 a' Kt a
    s.t. sum_unlab a_i + sum_lab a_j y_j = 1,
         kappa <= sum_lab a_j,
         0 <= a_i <= eta_u,  0 <= a_j <= eta_l,

where Kt_ab = ybar_a ybar_b k_ab and ybar is +1 on unlabeled points.
Requires a translation-invariant kernel (constant Gram diagonal); the
hypersphere reading of the scores only holds there.

Scores are rho - w'phi(x), positive = anomalous.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import ConfigError, InfeasibleError
from .kernels import KernelMatrix, KernelSpec, Points
from .solvers import solve_qp

FREE_MARGIN = 1e-7


@dataclass
class ConvexSsadModel:
    alpha: np.ndarray
    rho: float
    gamma: float
    kappa: float
    eta_u: float
    eta_l: float
    kernel: KernelSpec
    labels: np.ndarray
    train_points: Points
    dual_obj: float
    primal_obj: float = np.nan
    kkt: float = 0.0
    kappa_active: bool = False
    point_ids: list[str] = field(default_factory=list)

    @property
    def ybar(self) -> np.ndarray:
        return np.where(self.labels == 0, 1.0, self.labels.astype(np.float64))

    def to_json(self) -> dict:
        return {
            "kind": "ssad-dual",
            "alpha": [float(v) for v in self.alpha],
            "rho": float(self.rho),
            "gamma": float(self.gamma),
            "kappa": float(self.kappa),
            "eta_u": float(self.eta_u),
            "eta_l": float(self.eta_l),
            "kernel": self.kernel.to_json(),
            "point_ids": list(self.point_ids),
            "labels": [int(v) for v in self.labels],
            "primal_obj": float(self.primal_obj),
            "dual_obj": float(self.dual_obj),
        }


@dataclass(frozen=True)
class ConjugateLoss:
    """Fenchel conjugate of a pointwise loss; only the hinge ships.

    hinge l(t) = max(-t, 0) conjugates to l_c(z) = 0 on [-1, 0] and
    +infinity elsewhere, which is what turns the dual losses into the box
    constraints above.
    """

    loss_id: str = "hinge"

    def value(self, z: float) -> float:
        if self.loss_id != "hinge":
            raise ConfigError(f"no conjugate rule for loss {self.loss_id!r}")
        return 0.0 if -1.0 - 1e-12 <= z <= 1e-12 else np.inf


def hinge(t: np.ndarray) -> np.ndarray:
    return np.maximum(-np.asarray(t, dtype=np.float64), 0.0)


def _feasibility_check(labels, kappa, eta_u, eta_l):
    """Exact pre-check of the dual polytope via a 3-variable LP over the
    grouped masses (unlabeled total, labeled-positive total, labeled-negative
    total)."""
    n_u = int(np.sum(labels == 0))
    m_pos = int(np.sum(labels == 1))
    m_neg = int(np.sum(labels == -1))
    m = m_pos + m_neg
    if kappa > eta_l * m + 1e-9:
        raise InfeasibleError(
            f"kappa = {kappa:.6g} exceeds eta_l * m = {eta_l * m:.6g}; "
            "labeled mass cannot reach kappa"
        )
    # max s_pos + s_neg  s.t.  s_u + s_pos - s_neg = 1 and group boxes
    res = linprog(
        c=[0.0, -1.0, -1.0],
        A_eq=[[1.0, 1.0, -1.0]],
        b_eq=[1.0],
        bounds=[(0.0, eta_u * n_u), (0.0, eta_l * m_pos), (0.0, eta_l * m_neg)],
        method="highs",
    )
    if res.status != 0:
        raise InfeasibleError(
            "equality constraint sum(a_u) + sum(a_l y) = 1 is unattainable "
            f"with eta_u = {eta_u:.6g} (n = {n_u}), eta_l = {eta_l:.6g} "
            f"(m+ = {m_pos}, m- = {m_neg})"
        )
    if -res.fun < kappa - 1e-9:
        raise InfeasibleError(
            f"kappa = {kappa:.6g} incompatible with the equality constraint: "
            f"labeled mass can reach at most {-res.fun:.6g}"
        )


def train_ssad_dual(
    points: Points,
    labels: np.ndarray,
    kappa: float,
    eta_u: float,
    eta_l: float,
    kernel: KernelSpec,
    gram: Optional[KernelMatrix] = None,
    point_ids: Optional[list[str]] = None,
    tol: float = 1e-9,
    k_norm: Optional[float] = None,
    warm: Optional[np.ndarray] = None,
) -> ConvexSsadModel:
    labels = np.asarray(labels, dtype=np.int64)
    nm = len(points)
    km = gram if gram is not None else kernels.gram(kernel, points)
    flag, _s = kernels.is_translation_invariant(km)
    if not flag:
        raise ConfigError(
            "convex trainer requires a translation-invariant kernel "
            "(constant Gram diagonal); use rbf or unit-normalized features"
        )
    _feasibility_check(labels, kappa, eta_u, eta_l)
    ybar = np.where(labels == 0, 1.0, labels.astype(np.float64))
    kt = km.values * np.outer(ybar, ybar)
    labeled_idx = np.flatnonzero(labels != 0)
    hi = np.where(labels == 0, eta_u, eta_l).astype(np.float64)
    res = solve_qp(
        Q=kt,
        q=np.zeros(nm),
        sign=ybar,
        c=1.0,
        lo=0.0,
        hi=hi,
        labeled_idx=labeled_idx if len(labeled_idx) else None,
        kappa=kappa,
        tol=tol,
        lipschitz=k_norm,
        warm=warm,
    )
    alpha = res.x
    dual_obj = -0.5 * float(alpha @ (kt @ alpha))
    model = ConvexSsadModel(
        alpha=alpha,
        rho=0.0,
        gamma=0.0,
        kappa=kappa,
        eta_u=eta_u,
        eta_l=eta_l,
        kernel=kernel,
        labels=labels,
        train_points=points,
        dual_obj=dual_obj,
        kkt=res.kkt,
        kappa_active=res.kappa_active,
        point_ids=point_ids or [str(i) for i in range(nm)],
    )
    model.rho, model.gamma = recover_primal(model, km.values)
    model.primal_obj = model.dual_obj + duality_gap(model, km.values)
    return model


def _interval_value(lbs, ubs):
    if lbs and ubs:
        return 0.5 * (max(lbs) + min(ubs))
    if lbs:
        return float(max(lbs))
    if ubs:
        return float(min(ubs))
    return 0.0


def train_scores_w(model: ConvexSsadModel, gram: np.ndarray) -> np.ndarray:
    """w'phi(x_a) on the training points from the cached plain Gram."""
    ybar = model.ybar
    kta = (gram * np.outer(ybar, ybar)) @ model.alpha
    return ybar * kta


def _median_rule(model: ConvexSsadModel, sw: np.ndarray):
    """Spec rule: medians over free support vectors, interval midpoints
    otherwise; gamma clipped at zero and forced there when the kappa
    multiplier is strictly positive."""
    labels = model.labels
    alpha = model.alpha
    unlab = labels == 0
    lab = ~unlab
    mu = FREE_MARGIN * max(model.eta_u, 1.0)
    ml = FREE_MARGIN * max(model.eta_l, 1.0)
    free_u = unlab & (alpha > mu) & (alpha < model.eta_u - mu)
    if np.any(free_u):
        rho = float(np.median(sw[free_u]))
    else:
        lbs = list(sw[unlab & (alpha >= model.eta_u - mu)])
        ubs = list(sw[unlab & (alpha <= mu)])
        rho = _interval_value(lbs, ubs)
    if not np.any(lab):
        return rho, 0.0
    y = labels[lab].astype(np.float64)
    cand = y * (sw[lab] - rho)
    a_l = alpha[lab]
    slack = float(np.sum(a_l)) - model.kappa
    free_l = (a_l > ml) & (a_l < model.eta_l - ml)
    if slack > 1e-8:
        gamma = 0.0  # complementary slackness of the kappa multiplier
    elif np.any(free_l):
        gamma = float(np.median(cand[free_l]))
    else:
        lbs = list(cand[a_l >= model.eta_l - ml])
        ubs = list(cand[a_l <= ml])
        gamma = _interval_value(lbs, ubs)
    return rho, max(gamma, 0.0)


def _offset_lp(model: ConvexSsadModel, sw: np.ndarray):
    """Exact (rho, gamma): minimize the primal over the offsets for the
    fixed expansion. Linear program in (rho, gamma, slacks); its value
    matches the dual objective whenever alpha is optimal."""
    labels = model.labels
    unlab = labels == 0
    lab = ~unlab
    n_u = int(np.sum(unlab))
    m = int(np.sum(lab))
    nv = 2 + n_u + m
    cost = np.zeros(nv)
    cost[0] = -1.0
    cost[1] = -model.kappa
    cost[2 : 2 + n_u] = model.eta_u
    cost[2 + n_u :] = model.eta_l
    rows, rhs = [], []
    for pos, swi in enumerate(sw[unlab]):
        row = np.zeros(nv)
        row[0] = 1.0
        row[2 + pos] = -1.0
        rows.append(row)
        rhs.append(swi)
    y = labels[lab].astype(np.float64)
    for pos, (yj, swj) in enumerate(zip(y, sw[lab])):
        row = np.zeros(nv)
        row[0] = yj
        row[1] = 1.0
        row[2 + n_u + pos] = -1.0
        rows.append(row)
        rhs.append(yj * swj)
    bounds = [(None, None), (0.0, None)] + [(0.0, None)] * (n_u + m)
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return float(res.x[0]), float(res.x[1])


def recover_primal(model: ConvexSsadModel, gram: np.ndarray):
    """(rho, gamma) from the KKT conditions of the solved dual.

    The median/interval rule is exact whenever free support vectors pin
    the offsets; in degenerate all-bound configurations the offsets are
    recovered by the exact linear program instead (the unlabeled and
    labeled KKT intervals are coupled there).
    """
    sw = train_scores_w(model, gram)
    rho, gamma = _median_rule(model, sw)
    trial = ConvexSsadModel(**{**model.__dict__, "rho": rho, "gamma": gamma})
    gap = duality_gap(trial, gram)
    if abs(gap) <= 1e-9 * (1.0 + abs(trial.dual_obj)):
        return rho, gamma
    exact = _offset_lp(model, sw)
    if exact is None:
        return rho, gamma
    rho2, gamma2 = exact[0], max(exact[1], 0.0)
    trial2 = ConvexSsadModel(**{**model.__dict__, "rho": rho2, "gamma": gamma2})
    if abs(duality_gap(trial2, gram)) < abs(gap):
        return rho2, gamma2
    return rho, gamma


def duality_gap(model: ConvexSsadModel, gram: np.ndarray) -> float:
    """Hyperplane primal value at the recovered point minus the dual value."""
    labels = model.labels
    sw = train_scores_w(model, gram)
    unlab = labels == 0
    lab = ~unlab
    ybar = model.ybar
    kta = (gram * np.outer(ybar, ybar)) @ model.alpha
    w_norm_sq = float(model.alpha @ kta)
    t_u = sw[unlab] - model.rho
    primal = 0.5 * w_norm_sq - model.rho - model.kappa * model.gamma
    primal += model.eta_u * float(np.sum(hinge(t_u)))
    if np.any(lab):
        y = labels[lab].astype(np.float64)
        t_l = y * (sw[lab] - model.rho) - model.gamma
        primal += model.eta_l * float(np.sum(hinge(t_l)))
    return primal - model.dual_obj


def score_convex(model: ConvexSsadModel, points: Points) -> np.ndarray:
    """rho - w'phi(x); positive = anomalous."""
    kx = kernels.cross(model.kernel, model.train_points, points)
    return model.rho - (model.alpha * model.ybar) @ kx


def score_convex_train(model: ConvexSsadModel, gram: np.ndarray) -> np.ndarray:
    return model.rho - train_scores_w(model, gram)
