"""Box-and-equality constrained quadratic program solver.

All hypersphere duals in this package share one shape:

    minimize   0.5 x'Qx - q'x
    subject to sign'x = c,   lo <= x <= hi,
               (optional)    sum(x[labeled]) >= kappa

with Q positive semidefinite and sign in {+1, -1}^n. The solver runs
accelerated projected gradient descent, projecting onto the polytope with
exact water-filling (Dykstra alternation with the half-space when the
kappa constraint is present), and interleaves an active-set polish that
solves the KKT system on the free variables. The polish supplies the
final precision; projected gradient supplies a good working set.

Deterministic: fixed initialization, fixed tie-breaking, no randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import core
from .errors import InfeasibleError, NumericalError

_PG_CHUNK = 150
_BOUND_EPS = 1e-9


@dataclass
class QPResult:
    x: np.ndarray
    obj: float
    kkt: float
    iterations: int
    polished: bool
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kappa_active: bool = False


def spectral_norm(q_mat: np.ndarray, iters: int = 80) -> float:
    n = q_mat.shape[0]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        w = q_mat @ v
        lam = float(np.linalg.norm(w))
        if lam <= 1e-300:
            return 0.0
        v = w / lam
    return lam


def _check_equality_attainable(sign, lo, hi, c):
    mx = float(np.sum(np.where(sign > 0, hi, -lo)))
    mn = float(np.sum(np.where(sign > 0, lo, -hi)))
    if not (mn - 1e-9 <= c <= mx + 1e-9):
        raise InfeasibleError(
            f"equality constraint unattainable: achievable range [{mn:.6g}, {mx:.6g}] "
            f"does not contain {c:.6g}"
        )


def _project_halfspace(x, w_idx, kappa):
    s = float(np.sum(x[w_idx]))
    if s >= kappa:
        return x
    out = x.copy()
    out[w_idx] += (kappa - s) / len(w_idx)
    return out


def project_polytope(v, sign, lo, hi, c, w_idx=None, kappa=None, max_rounds=400):
    """Projection onto {sign'x = c, box} intersected with the optional
    half-space sum(x[w_idx]) >= kappa, by Dykstra alternation."""
    base = core.project_hyperplane_box(v, sign, lo, hi, c)
    if w_idx is None or kappa is None or float(np.sum(base[w_idx])) >= kappa - 1e-12:
        return base
    x = np.asarray(v, dtype=np.float64).copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_rounds):
        y = core.project_hyperplane_box(x + p, sign, lo, hi, c)
        p = x + p - y
        x_new = _project_halfspace(y + q, w_idx, kappa)
        q = y + q - x_new
        if (
            np.max(np.abs(x_new - x)) < 1e-13
            and float(np.sum(x_new[w_idx])) >= kappa - 1e-10
            and abs(float(sign @ x_new) - c) < 1e-10
        ):
            return np.clip(x_new, lo, hi)
        x = x_new
    # Best effort: enforce the harder constraints exactly.
    return core.project_hyperplane_box(x, sign, lo, hi, c)


def _kkt_report(Q, q, A, b, lo, hi, x, lam=None):
    """Worst KKT violation at x (stationarity, multiplier signs, feasibility)."""
    g0 = Q @ x - q
    span = max(1.0, float(np.max(hi[np.isfinite(hi)])) if np.any(np.isfinite(hi)) else 1.0)
    eps = _BOUND_EPS * span
    at_lo = x <= lo + eps
    at_hi = x >= hi - eps
    free = ~(at_lo | at_hi)
    if lam is None:
        if np.any(free):
            lam, *_ = np.linalg.lstsq(A[:, free].T, -g0[free], rcond=None)
        else:
            lam, *_ = np.linalg.lstsq(A.T, -g0, rcond=None)
    g = g0 + A.T @ lam
    viol = float(np.max(np.abs(A @ x - b)))
    if np.any(free):
        viol = max(viol, float(np.max(np.abs(g[free]))))
    if np.any(at_lo & ~at_hi):
        viol = max(viol, float(np.max(-g[at_lo & ~at_hi], initial=0.0)))
    if np.any(at_hi & ~at_lo):
        viol = max(viol, float(np.max(g[at_hi & ~at_lo], initial=0.0)))
    return viol, np.asarray(lam, dtype=np.float64)


def _polish(Q, q, A, b, lo, hi, x0, tol, max_pivots=None):
    """Primal active-set refinement from a feasible near-solution.

    Keeps x feasible throughout (steps stay in the nullspace of A); each
    pivot either binds the first bound hit on the way to the KKT candidate
    or releases the worst multiplier violator.
    """
    n = len(x0)
    r = A.shape[0]
    if max_pivots is None:
        max_pivots = 8 * n + 60
    x = np.clip(np.asarray(x0, dtype=np.float64).copy(), lo, hi)
    span = max(1.0, float(np.max(hi[np.isfinite(hi)])) if np.any(np.isfinite(hi)) else 1.0)
    eps = _BOUND_EPS * span
    at_lo = x <= lo + eps
    at_hi = (x >= hi - eps) & ~at_lo
    for _pivot in range(max_pivots):
        free = ~(at_lo | at_hi)
        f = int(np.sum(free))
        xb = np.where(at_hi, hi, lo)
        if f == 0:
            x_cand = xb.copy()
            if np.max(np.abs(A @ x_cand - b)) > 1e-8:
                return x, None, np.inf, False
        else:
            qff = Q[np.ix_(free, free)]
            m = np.zeros((f + r, f + r))
            m[:f, :f] = qff + 1e-13 * np.eye(f)
            m[:f, f:] = A[:, free].T
            m[f:, :f] = A[:, free]
            rhs = np.concatenate(
                [
                    q[free] - Q[np.ix_(free, ~free)] @ xb[~free],
                    b - A[:, ~free] @ xb[~free],
                ]
            )
            try:
                sol = np.linalg.solve(m, rhs)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
            x_cand = xb.copy()
            x_cand[free] = sol[:f]
            if np.max(np.abs(A @ x_cand - b)) > 1e-7:
                return x, None, np.inf, False
        inside = (x_cand >= lo - 1e-11) & (x_cand <= hi + 1e-11)
        if np.all(inside[free] if f else inside):
            x = np.clip(x_cand, lo, hi)
            lam = sol[f:] if f else np.linalg.lstsq(A.T, -(Q @ x - q), rcond=None)[0]
            g = Q @ x - q + A.T @ lam
            worst_i, worst_v = -1, tol
            idx_lo = np.flatnonzero(at_lo)
            idx_hi = np.flatnonzero(at_hi)
            for i in idx_lo:
                if -g[i] > worst_v:
                    worst_i, worst_v = i, -g[i]
            for i in idx_hi:
                if g[i] > worst_v:
                    worst_i, worst_v = i, g[i]
            if worst_i < 0:
                kkt, _ = _kkt_report(Q, q, A, b, lo, hi, x, lam)
                return x, lam, kkt, True
            at_lo[worst_i] = False
            at_hi[worst_i] = False
        else:
            d = x_cand - x
            d[~free] = 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hi = np.where(d > 1e-15, (hi - x) / d, np.inf)
                t_lo = np.where(d < -1e-15, (lo - x) / d, np.inf)
            theta = min(1.0, float(np.min(np.minimum(t_hi, t_lo))))
            theta = max(theta, 0.0)
            x = np.clip(x + theta * d, lo, hi)
            hit = (np.minimum(t_hi, t_lo) <= theta + 1e-14) & free
            if not np.any(hit):
                # numerical stall: bind the coordinate closest to a bound
                cand = np.where(free, np.minimum(x - lo, hi - x), np.inf)
                hit = np.zeros(n, dtype=bool)
                hit[int(np.argmin(cand))] = True
                d = np.where(hit, np.where(x - lo <= hi - x, -1.0, 1.0), d)
            at_lo |= hit & (d < 0)
            at_hi |= hit & (d > 0)
            at_hi &= ~at_lo
            x[at_lo] = lo[at_lo]
            x[at_hi] = hi[at_hi]
    kkt, lam = _kkt_report(Q, q, A, b, lo, hi, x)
    return x, lam, kkt, kkt <= tol


def solve_qp(
    Q,
    q,
    sign,
    c,
    lo,
    hi,
    labeled_idx=None,
    kappa=None,
    tol=1e-9,
    max_iters=30000,
    warm=None,
    lipschitz=None,
) -> QPResult:
    """Solve the shared QP shape to KKT tolerance ``tol``.

    The kappa half-space is handled in two phases: solve without it, and
    only if violated re-solve with the constraint tight (valid by
    convexity). Raises InfeasibleError with the failing constraint named.
    """
    n = Q.shape[0]
    sign = np.asarray(sign, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (n,)).copy()
    q = np.asarray(q, dtype=np.float64)
    _check_equality_attainable(sign, lo, hi, c)
    if kappa is not None and kappa > 0 and (labeled_idx is None or len(labeled_idx) == 0):
        raise InfeasibleError(f"kappa = {kappa:.6g} > 0 requires labeled points")
    if kappa is not None and labeled_idx is not None and len(labeled_idx):
        cap = float(np.sum(hi[labeled_idx]))
        if kappa > cap + 1e-9:
            raise InfeasibleError(
                f"kappa = {kappa:.6g} exceeds eta_l * m = {cap:.6g}; "
                "the labeled-mass constraint is unattainable"
            )

    use_kappa = kappa is not None and labeled_idx is not None and len(labeled_idx) > 0

    def run_phase(a_rows, b_vals, proj):
        a_mat = np.asarray(a_rows, dtype=np.float64)
        b_vec = np.asarray(b_vals, dtype=np.float64)
        lip = lipschitz if lipschitz is not None else spectral_norm(Q)
        step = 1.0 / lip if lip > 0 else 1.0
        x = proj(warm.copy() if warm is not None and len(warm) == n else np.zeros(n))
        y = x.copy()
        t = 1.0
        best_x = x.copy()

        def fval(z):
            return 0.5 * float(z @ (Q @ z)) - float(q @ z)

        best_f = fval(x)
        total = 0
        if warm is not None:
            # a good warm start often lands in the optimal active set directly
            px, lam, kkt, ok = _polish(Q, q, a_mat, b_vec, lo, hi, x, tol)
            if ok and np.max(np.abs(a_mat @ px - b_vec)) <= 1e-8:
                return px, lam, kkt, 0, True
        while total < max_iters:
            for _ in range(_PG_CHUNK):
                grad = Q @ y - q
                z = proj(y - step * grad)
                if (y - z) @ (z - x) > 0:
                    t = 1.0  # adaptive restart
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                y = z + ((t - 1.0) / t_next) * (z - x)
                x = z
                t = t_next
                total += 1
            fx = fval(x)
            if fx < best_f:
                best_f, best_x = fx, x.copy()
            px, lam, kkt, ok = _polish(Q, q, a_mat, b_vec, lo, hi, best_x, tol)
            if ok and np.max(np.abs(a_mat @ px - b_vec)) <= 1e-8:
                return px, lam, kkt, total, True
        px, lam, kkt, ok = _polish(Q, q, a_mat, b_vec, lo, hi, best_x, tol)
        if ok:
            return px, lam, kkt, total, True
        kkt, lam = _kkt_report(Q, q, a_mat, b_vec, lo, hi, best_x)
        return best_x, lam, kkt, total, False

    proj_eq = lambda v: core.project_hyperplane_box(v, sign, lo, hi, c)
    x1, lam1, kkt1, it1, ok1 = run_phase(sign[None, :], [c], proj_eq)
    if not use_kappa or float(np.sum(x1[labeled_idx])) >= kappa - 1e-9:
        return QPResult(
            x=x1,
            obj=0.5 * float(x1 @ (Q @ x1)) - float(q @ x1),
            kkt=kkt1,
            iterations=it1,
            polished=ok1,
            eq_multipliers=lam1 if lam1 is not None else np.zeros(1),
            kappa_active=False,
        )
    w_idx = np.asarray(labeled_idx, dtype=np.int64)
    w_row = np.zeros(n)
    w_row[w_idx] = 1.0
    proj_full = lambda v: project_polytope(v, sign, lo, hi, c, w_idx, kappa)
    a_rows = np.vstack([sign, w_row])
    x2, lam2, kkt2, it2, ok2 = run_phase(a_rows, [c, kappa], proj_full)
    return QPResult(
        x=x2,
        obj=0.5 * float(x2 @ (Q @ x2)) - float(q @ x2),
        kkt=kkt2,
        iterations=it1 + it2,
        polished=ok2,
        eq_multipliers=lam2 if lam2 is not None else np.zeros(2),
        kappa_active=True,
    )
