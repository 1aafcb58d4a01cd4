"""Independent reference implementations used only by tests."""

import numpy as np


# exact minimum enclosing ball in the plane (Welzl, move-to-front)

def _circle_two(a, b):
    c = (a + b) / 2.0
    return c, float(np.sum((a - c) ** 2))


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        return None
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay)
          + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx)
          + (cx**2 + cy**2) * (bx - ax)) / d
    ctr = np.array([ux, uy])
    return ctr, float(np.sum((a - ctr) ** 2))


def _inside(p, ctr, r2):
    return float(np.sum((p - ctr) ** 2)) <= r2 * (1.0 + 1e-12) + 1e-12


def welzl_meb(points, seed=0):
    """Exact minimum enclosing ball of 2-D points: (center, radius^2)."""
    rng = np.random.default_rng(seed)
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    order = rng.permutation(len(pts))
    pts = [pts[i] for i in order]

    def mec(k, boundary):
        if len(boundary) == 3 or k == 0:
            if len(boundary) == 0:
                return np.zeros(2), 0.0
            if len(boundary) == 1:
                return boundary[0].copy(), 0.0
            if len(boundary) == 2:
                return _circle_two(*boundary)
            res = _circle_three(*boundary)
            if res is None:
                best = None
                for i in range(3):
                    pair = [boundary[j] for j in range(3) if j != i]
                    ctr, r2 = _circle_two(*pair)
                    if _inside(boundary[i], ctr, r2):
                        if best is None or r2 < best[1]:
                            best = (ctr, r2)
                return best if best else _circle_two(boundary[0], boundary[1])
            return res
        ctr, r2 = mec(k - 1, boundary)
        p = pts[k - 1]
        if _inside(p, ctr, r2):
            return ctr, r2
        return mec(k - 1, boundary + [p])

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(10000 + 10 * len(pts))
    try:
        return mec(len(pts), [])
    finally:
        sys.setrecursionlimit(old)


def cvxopt_qp(Q, q, sign, c, lo, hi, labeled_idx=None, kappa=None):
    """High-precision dense QP oracle for min 0.5 x'Qx - q'x on the shared
    polytope, via cvxopt."""
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-12
    cvxopt.solvers.options["reltol"] = 1e-12
    cvxopt.solvers.options["feastol"] = 1e-12
    n = Q.shape[0]
    P = cvxopt.matrix(np.asarray(Q, dtype=np.float64) + 1e-12 * np.eye(n))
    qv = cvxopt.matrix(-np.asarray(q, dtype=np.float64))
    g_rows = [-np.eye(n), np.eye(n)]
    h_vals = [np.zeros(n) - np.broadcast_to(lo, (n,)), np.broadcast_to(hi, (n,))]
    g_rows[0] = -np.eye(n)
    h_vals[0] = -np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    if labeled_idx is not None and kappa is not None and len(labeled_idx):
        w = np.zeros(n)
        w[np.asarray(labeled_idx)] = 1.0
        g_rows.append(-w[None, :])
        h_vals.append(np.array([-kappa]))
    G = cvxopt.matrix(np.vstack(g_rows))
    h = cvxopt.matrix(np.concatenate([np.ravel(v) for v in h_vals]))
    A = cvxopt.matrix(np.asarray(sign, dtype=np.float64)[None, :])
    b = cvxopt.matrix([float(c)])
    sol = cvxopt.solvers.qp(P, qv, G, h, A, b)
    return np.array(sol["x"]).ravel()


def roc_points_bruteforce(scores, truth):
    """O(n^2) threshold enumeration; anomaly (-1) is detection-positive."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    pos = truth == -1
    neg = truth == 1
    pts = {(0.0, 0.0)}
    for t in np.unique(scores):
        pred = scores >= t
        pts.add((float(np.sum(pred & neg) / np.sum(neg)),
                 float(np.sum(pred & pos) / np.sum(pos))))
    return sorted(pts)


def finite_difference(f, x, h=1e-5):
    """Central differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g
