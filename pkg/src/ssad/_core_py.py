"""Numpy fallback for the compiled core.

Same call signatures as the Cython module ``ssad._core``; selected by
``ssad._backend`` when the extension is not built or when
``SSAD_BACKEND=python`` is set.
"""

import numpy as np
from scipy import sparse as _sp

IMPL = "python"


def ngram_codes(data: bytes, n: int):
    """Distinct n-grams of ``data`` as sorted uint64 codes plus counts.

    Codes are the big-endian packing of the n bytes, so numeric order
    equals bytewise order of the grams. Requires 1 <= n <= 8.
    """
    t = len(data)
    if t < n:
        return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.float64)
    arr = np.frombuffer(data, dtype=np.uint8)
    codes = np.zeros(t - n + 1, dtype=np.uint64)
    for k in range(n):
        codes |= arr[k : t - n + 1 + k].astype(np.uint64) << np.uint64(8 * (n - 1 - k))
    keys, counts = np.unique(codes, return_counts=True)
    return keys, counts.astype(np.float64)


def merge_dot(keys_a, wa, keys_b, wb) -> float:
    """Dot product of two sparse vectors given as sorted key/weight arrays."""
    if len(keys_a) == 0 or len(keys_b) == 0:
        return 0.0
    common, ia, ib = np.intersect1d(keys_a, keys_b, assume_unique=True, return_indices=True)
    if len(common) == 0:
        return 0.0
    return float(np.dot(wa[ia], wb[ib]))


def gram_sparse(indptr, keys, weights):
    """Dense Gram matrix of N sparse vectors stored back to back.

    ``indptr`` has N+1 entries; vector i occupies keys[indptr[i]:indptr[i+1]].
    The upper triangle is mirrored so the result is exactly symmetric.
    """
    n = len(indptr) - 1
    uniq = np.unique(keys)
    cols = np.searchsorted(uniq, keys)
    mat = _sp.csr_matrix((weights, cols, indptr), shape=(n, max(len(uniq), 1)))
    g = np.asarray((mat @ mat.T).todense(), dtype=np.float64)
    iu = np.triu_indices(n, k=1)
    g[(iu[1], iu[0])] = g[iu]
    return g


def cross_gram_sparse(indptr_a, keys_a, wa, indptr_b, keys_b, wb):
    """Rectangular Gram block between two sparse collections."""
    na, nb = len(indptr_a) - 1, len(indptr_b) - 1
    uniq = np.unique(np.concatenate([keys_a, keys_b]))
    d = max(len(uniq), 1)
    ma = _sp.csr_matrix((wa, np.searchsorted(uniq, keys_a), indptr_a), shape=(na, d))
    mb = _sp.csr_matrix((wb, np.searchsorted(uniq, keys_b), indptr_b), shape=(nb, d))
    return np.asarray((ma @ mb.T).todense(), dtype=np.float64)


def project_hyperplane_box(v, sign, lo, hi, c):
    """Euclidean projection onto {x : sign.x = c, lo <= x <= hi}.

    ``sign`` entries must be +1/-1. Exact water-filling: the crossing
    segment of the piecewise-linear multiplier equation is located by
    bisection over the sorted breakpoints and solved in closed form.
    Raises ValueError when the set is empty.
    """
    v = np.asarray(v, dtype=np.float64)
    sign = np.asarray(sign, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), v.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), v.shape).copy()
    u = sign * v
    pos = sign > 0
    # lam -> sign_i * x_i(lam) equals clip(u_i - lam, u_i - seg_hi_i, u_i - seg_lo_i)
    seg_lo = np.where(pos, u - hi, u + lo)
    seg_hi = np.where(pos, u - lo, u + hi)

    def g(lam):
        return float(np.sum(np.clip(u - lam, u - seg_hi, u - seg_lo))) - c

    g_max = float(np.sum(u - seg_lo)) - c
    g_min = float(np.sum(u - seg_hi)) - c
    if g_max < -1e-9 or g_min > 1e-9:
        raise ValueError("projection target set is empty")
    if g_max <= 0.0:
        lam = float(np.min(seg_lo))
    elif g_min >= 0.0:
        lam = float(np.max(seg_hi))
    else:
        bps = np.sort(np.concatenate([seg_lo, seg_hi]))
        a, b = 0, len(bps) - 1
        # g(bps[0]) == g_max > 0 and g(bps[-1]) == g_min < 0 here
        while b - a > 1:
            m = (a + b) // 2
            if g(bps[m]) > 0.0:
                a = m
            else:
                b = m
        ga, gb = g(bps[a]), g(bps[b])
        lam = float(bps[b]) if gb == ga else float(bps[a] + (bps[b] - bps[a]) * ga / (ga - gb))
    x = sign * np.clip(u - lam, u - seg_hi, u - seg_lo)
    return np.clip(x, lo, hi)
