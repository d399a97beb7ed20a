"""Independent brute-force oracles the tests check implementations against.

Everything here is deliberately written the slow, obvious way (plain loops,
bisection, two-pass sums) and must stay decoupled from the package code it
verifies.
"""

import math

import numpy as np


def phi_erf(z: float) -> float:
    """Standard Normal CDF via the error function."""
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def bisect_ndtri(p: float, lo: float = -10.0, hi: float = 10.0, tol: float = 1e-12) -> float:
    """Invert phi_erf by pure interval bisection."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi_erf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sort_quantile(values, q: float) -> float:
    """Linear-interpolation order statistic, the formula spelled out."""
    v = sorted(float(x) for x in np.asarray(values).ravel())
    n = len(v)
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    if lo >= n - 1:
        return v[-1]
    frac = pos - lo
    return v[lo] + frac * (v[lo + 1] - v[lo])


def two_pass_mean_std(values) -> tuple[float, float]:
    """Population mean/std with float64 two-pass accumulation."""
    v = [float(x) for x in np.asarray(values).ravel()]
    n = len(v)
    mean = sum(v) / n
    var = sum((x - mean) ** 2 for x in v) / n
    return mean, math.sqrt(var)


def gradient_magnitude_loops(plane: np.ndarray) -> np.ndarray:
    """Per-pixel |grad| with central differences inside, one-sided at borders."""
    h, w = plane.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if y == 0:
                gy = plane[1, x] - plane[0, x] if h > 1 else 0.0
            elif y == h - 1:
                gy = plane[h - 1, x] - plane[h - 2, x]
            else:
                gy = (plane[y + 1, x] - plane[y - 1, x]) / 2.0
            if x == 0:
                gx = plane[y, 1] - plane[y, 0] if w > 1 else 0.0
            elif x == w - 1:
                gx = plane[y, w - 1] - plane[y, w - 2]
            else:
                gx = (plane[y, x + 1] - plane[y, x - 1]) / 2.0
            out[y, x] = math.sqrt(gy * gy + gx * gx)
    return out


def pooled_window_means(field: np.ndarray, positions_y, positions_x, tile: int) -> np.ndarray:
    """Mean of each T x T window, plain python accumulation, y-major order."""
    means = []
    for y in positions_y:
        for x in positions_x:
            total = 0.0
            for yy in range(y, y + tile):
                for xx in range(x, x + tile):
                    total += float(field[yy, xx])
            means.append(total / (tile * tile))
    return np.array(means)


def softmax_entropy(logits: np.ndarray) -> float:
    """Entropy of softmax(logits) computed the direct way."""
    e = np.exp(logits - np.max(logits))
    p = e / e.sum()
    return float(-sum(pi * math.log(pi) for pi in p if pi > 0))
