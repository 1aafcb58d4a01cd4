"""Hypersphere learning with labeled negatives, solved in dual space only.

The primal (exclude labeled anomalies from the ball) is non-convex, so
the dual optimum is merely a lower bound; this module measures that
duality gap rather than hiding it. The companion experiment sweeps the
share of labeled negatives on a planted nominal-plus-ring scene and
records primal/dual values per seed, reproducing the growing-gap trend.

For translation-invariant kernels the dual coincides with the one-class
SVM dual (same constraints; objective scaled by 2 and shifted by the
constant diagonal), so the recovered coefficients agree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import InfeasibleError
from .kernels import KernelMatrix, KernelSpec, Points
from .features import DensePoints
from .solvers import solve_qp

FREE_MARGIN = 1e-7


@dataclass
class SvddNegModel:
    alpha: np.ndarray
    labels: np.ndarray
    eta: float
    kernel: KernelSpec
    r_squared: float
    train_points: Points
    quad: float  # (alpha*y)' K (alpha*y)
    dual_obj: float
    primal_obj: float = np.nan
    kkt: float = 0.0
    point_ids: list[str] = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        return self.alpha * self.labels

    def to_json(self) -> dict:
        return {
            "kind": "svddneg",
            "kernel": self.kernel.to_json(),
            "alpha": [float(v) for v in self.alpha],
            "labels": [int(v) for v in self.labels],
            "r2": float(self.r_squared),
            "eta": float(self.eta),
            "point_ids": list(self.point_ids),
        }


def train_svddneg_dual(
    points: Points,
    labels: np.ndarray,
    eta: float,
    kernel: KernelSpec,
    gram: Optional[KernelMatrix] = None,
    point_ids: Optional[list[str]] = None,
    tol: float = 1e-8,
    k_norm: Optional[float] = None,
    warm: Optional[np.ndarray] = None,
) -> SvddNegModel:
    labels = np.asarray(labels, dtype=np.float64)
    n = len(points)
    n_pos = int(np.sum(labels > 0))
    if n_pos == 0:
        raise InfeasibleError("needs at least one positive (unlabeled) point")
    if eta * n_pos < 1.0 - 1e-12:
        raise InfeasibleError(
            f"eta too small: eta * #pos = {eta * n_pos:.6g} < 1 makes sum(alpha*y) = 1 unattainable"
        )
    km = gram if gram is not None else kernels.gram(kernel, points)
    k = km.values
    dmat = k * np.outer(labels, labels)
    res = solve_qp(
        Q=2.0 * dmat,
        q=labels * np.diag(k),
        sign=labels,
        c=1.0,
        lo=0.0,
        hi=eta,
        tol=tol,
        lipschitz=2.0 * k_norm if k_norm is not None else None,
        warm=warm,
    )
    alpha = res.x
    beta = alpha * labels
    kb = k @ beta
    quad = float(beta @ kb)
    d2 = np.diag(k) - 2.0 * kb + quad
    margin = FREE_MARGIN * max(eta, 1.0)
    free_pos = (labels > 0) & (alpha > margin) & (alpha < eta - margin)
    if np.any(free_pos):
        r2 = float(np.median(d2[free_pos]))
    else:
        sv_pos = (labels > 0) & (alpha > margin)
        r2 = float(np.max(d2[sv_pos])) if np.any(sv_pos) else float(np.max(d2[labels > 0]))
    dual_obj = float((labels * np.diag(k)) @ alpha) - quad
    model = SvddNegModel(
        alpha=alpha,
        labels=labels.astype(np.int64),
        eta=eta,
        kernel=kernel,
        r_squared=r2,
        train_points=points,
        quad=quad,
        dual_obj=dual_obj,
        kkt=res.kkt,
        point_ids=point_ids or [str(i) for i in range(n)],
    )
    model.primal_obj = primal_objective_svddneg(model, km)
    return model


def primal_objective_svddneg(
    model: SvddNegModel,
    gram: Optional[KernelMatrix] = None,
    r_squared: Optional[float] = None,
) -> float:
    """R^2 + eta * sum of slacks at the recovered center and radius.

    ``r_squared`` overrides the model radius (used by the gap experiment
    to evaluate the cover radius)."""
    if gram is not None:
        k = gram.values
        beta = model.beta.astype(np.float64)
        kb = k @ beta
        d2 = np.diag(k) - 2.0 * kb + model.quad
    else:
        d2 = center_distances_sq(model, model.train_points)
    r2 = model.r_squared if r_squared is None else float(r_squared)
    y = model.labels.astype(np.float64)
    xi = np.maximum(0.0, y * d2 - y * r2)
    return float(r2 + model.eta * np.sum(xi))


def cover_radius_sq(model: SvddNegModel, gram: Optional[KernelMatrix] = None) -> float:
    """Conservative dual-space radius: max center distance over positive
    support vectors, i.e. the smallest radius enclosing every unlabeled
    point the dual solution leans on. This is the radius a dual-only
    implementation uses when the enclosure of targets matters; measuring
    the primal there exposes the non-convexity as a duality gap."""
    if gram is not None:
        k = gram.values
        beta = model.beta.astype(np.float64)
        d2 = np.diag(k) - 2.0 * (k @ beta) + model.quad
    else:
        d2 = center_distances_sq(model, model.train_points)
    margin = FREE_MARGIN * max(model.eta, 1.0)
    sv_pos = (model.labels > 0) & (model.alpha > margin)
    if not np.any(sv_pos):
        return model.r_squared
    return float(np.max(d2[sv_pos]))


def center_distances_sq(model: SvddNegModel, points: Points) -> np.ndarray:
    kx = kernels.cross(model.kernel, model.train_points, points)
    if model.kernel.family == "rbf":
        kxx = np.ones(len(points))
    else:
        kxx = kernels.self_dots(points)
    return kxx - 2.0 * (model.beta.astype(np.float64) @ kx) + model.quad


def score(model: SvddNegModel, points: Points) -> np.ndarray:
    """||phi(x) - c||^2 - R^2 (positive = anomalous)."""
    return center_distances_sq(model, points) - model.r_squared


def score_train(model: SvddNegModel, gram: np.ndarray) -> np.ndarray:
    beta = model.beta.astype(np.float64)
    kb = gram @ beta
    return np.diag(gram) - 2.0 * kb + model.quad - model.r_squared


def ring_gaussian(rng: np.random.Generator, count: int, radius: float, sigma: float) -> np.ndarray:
    """Isotropic ring: radius ~ N(radius, sigma), angle uniform."""
    theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
    r = rng.normal(radius, sigma, size=count)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def gap_experiment(
    fractions: Sequence[float] = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5),
    seeds: Sequence[int] = tuple(range(20)),
    eta: float = 100.0,
    kernel: KernelSpec = KernelSpec(family="linear"),
    n_nominal: int = 200,
    n_ring: int = 60,
    ring_radius: float = 4.0,
    ring_sigma: float = 0.3,
    out_csv=None,
):
    """Duality gap versus the share of ring points labeled negative.

    One nominal Gaussian at the origin surrounded by a ring of anomalies;
    unlabeled points (including unrevealed ring points) carry y = +1.
    Returns rows (fraction, seed, primal, dual, gap); optionally writes
    them as CSV.
    """
    rows = []
    for frac in fractions:
        for seed in seeds:
            rng = np.random.default_rng([seed, int(round(frac * 1000))])
            x_nom = rng.normal(size=(n_nominal, 2))
            x_ring = ring_gaussian(rng, n_ring, ring_radius, ring_sigma)
            pts = DensePoints(np.vstack([x_nom, x_ring]))
            y = np.ones(n_nominal + n_ring)
            n_neg = int(round(frac * n_ring))
            if n_neg:
                chosen = rng.choice(n_ring, size=n_neg, replace=False)
                y[n_nominal + chosen] = -1.0
            model = train_svddneg_dual(pts, y, eta, kernel)
            km = kernels.gram(kernel, pts)
            primal = primal_objective_svddneg(model, km, r_squared=cover_radius_sq(model, km))
            gap = primal - model.dual_obj
            rows.append((float(frac), int(seed), primal, model.dual_obj, gap))
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fraction", "seed", "primal", "dual", "gap"])
            for r in rows:
                w.writerow([f"{r[0]:.10g}", r[1], f"{r[2]:.10g}", f"{r[3]:.10g}", f"{r[4]:.10g}"])
    return rows
