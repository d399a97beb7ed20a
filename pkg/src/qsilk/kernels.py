"""Scalar statistical kernels: quantile, inverse Normal CDF, entropy, soft clip.

Everything here is pure and accepts plain floats or numpy arrays; internal
accumulation is float64, array outputs for latent data are float32.
"""

import math

import numpy as np

from .errors import ValidationError

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Rational approximation coefficients for the inverse Normal CDF
# (Acklam's minimax fit, |rel err| < 1.15e-9 before refinement).
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_SPLIT = 0.02425


def _poly(coeffs, x):
    out = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        out = out * x + c
    return out


def _erfc_array(x: np.ndarray) -> np.ndarray:
    flat = x.ravel().tolist()
    return np.fromiter((math.erfc(v) for v in flat), dtype=np.float64,
                       count=len(flat)).reshape(x.shape)


def normal_cdf(x):
    """Standard Normal CDF, erfc-based so the tails keep full precision."""
    if np.isscalar(x) or np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * _erfc_array(-x / _SQRT2)


def ndtri(p):
    """Inverse standard Normal CDF on p in (0,1), abs error <= 1e-9.

    Rational approximation in three branches, then one Halley refinement
    against the erfc-based CDF. Scalar in, scalar out; array in, array out.
    """
    scalar = np.isscalar(p) or np.ndim(p) == 0
    arr = np.asarray(p, dtype=np.float64)
    if arr.size and (np.min(arr) <= 0.0 or np.max(arr) >= 1.0):
        raise ValidationError("ndtri requires p strictly inside (0, 1)")

    x = np.empty_like(arr)
    lo = arr < _ICDF_SPLIT
    hi = arr > 1.0 - _ICDF_SPLIT
    mid = ~(lo | hi)
    if lo.any():
        q = np.sqrt(-2.0 * np.log(arr[lo]))
        x[lo] = _poly(_ICDF_C, q) / (_poly(_ICDF_D, q) * q + 1.0)
    if hi.any():
        q = np.sqrt(-2.0 * np.log(1.0 - arr[hi]))
        x[hi] = -_poly(_ICDF_C, q) / (_poly(_ICDF_D, q) * q + 1.0)
    if mid.any():
        q = arr[mid] - 0.5
        r = q * q
        x[mid] = _poly(_ICDF_A, r) * q / (_poly(_ICDF_B, r) * r + 1.0)

    # Halley step: e = CDF(x) - p, u = e / pdf(x), x <- x - u / (1 + x*u/2)
    e = 0.5 * _erfc_array(-x / _SQRT2) - arr
    u = e * _SQRT_2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return float(x) if scalar else x


def quantile(values, q: float) -> float:
    """Linear-interpolation order statistic at level q over a flat sequence."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("quantile of empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"quantile level must be in [0, 1], got {q}")
    return interpolate_sorted(np.sort(v), q)


def interpolate_sorted(sorted_values: np.ndarray, q: float) -> float:
    """Order statistic at position q*(n-1) of an already-sorted flat array."""
    n = sorted_values.shape[0]
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    if lo >= n - 1:
        return float(sorted_values[n - 1])
    frac = pos - lo
    a = float(sorted_values[lo])
    b = float(sorted_values[lo + 1])
    return a + frac * (b - a)


def soft_clip_elem(x: float, lo: float, hi: float, alpha: float, eps: float) -> float:
    """Tanh compression of x into the corridor (lo, hi); exact midpoint fixed."""
    if lo > hi:
        raise ValidationError(f"corridor inverted: lo={lo} > hi={hi}")
    if alpha <= 0.0 or eps <= 0.0:
        raise ValidationError("alpha and eps must be positive")
    m = 0.5 * (lo + hi)
    delta = 0.5 * (hi - lo)
    return m + delta * math.tanh(alpha * (x - m) / (delta + eps))


def soft_clip_array(x: np.ndarray, lo, hi, alpha: float, eps: float) -> np.ndarray:
    """Vectorized soft clip in float32; lo/hi broadcast against x."""
    x = np.asarray(x, dtype=np.float32)
    lo = np.asarray(lo, dtype=np.float32)
    hi = np.asarray(hi, dtype=np.float32)
    m = (lo + hi) * np.float32(0.5)
    delta = (hi - lo) * np.float32(0.5)
    scale = np.float32(alpha) / (delta + np.float32(eps))
    out = np.subtract(x, m, dtype=np.float32)
    np.multiply(out, scale, out=out)
    np.tanh(out, out=out)
    np.multiply(out, delta, out=out)
    np.add(out, m, out=out)
    return out


def row_entropy(p) -> float:
    """Shannon entropy (nats) of one probability vector; 0*ln(0) := 0."""
    v = np.asarray(p, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("entropy of empty vector")
    if np.min(v) < 0.0:
        raise ValidationError("probabilities must be non-negative")
    total = float(v.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"probabilities must sum to 1 within 1e-6, got {total}")
    nz = v[v > 0.0]
    return float(-(nz * np.log(nz)).sum())


def row_entropies(rows: np.ndarray) -> np.ndarray:
    """Entropy of each row of a (n, k) matrix of probabilities, unvalidated."""
    rows = np.asarray(rows, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0.0, rows * np.log(rows), 0.0)
    return -terms.sum(axis=-1)
