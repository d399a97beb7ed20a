"""Per-tile confidence maps and the confidence -> quantile-corridor mapping.

Two sources produce the same thing, one normalized value per tile in [0,1]:

* proxy: gradient magnitude of the channel-mean latent, pooled per tile and
  divided by the per-sample maximum (cheap, no model access needed);
* attention: per-query softmax entropy of a Q/K probe, scattered onto the
  token grid, min-max normalized, and average-pooled onto the tile grid.

The confidence value then bends the corridor quantiles asymmetrically:
q_low = 0.5*c^2 and q_high = 1 - 0.5*(1-c)^2, so q_low <= 0.5 <= q_high
for every c in [0,1].
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ValidationError
from .kernels import row_entropies
from .tensor import LatentTensor
from .tiler import TileGrid, window_sums

SOURCES = ("proxy", "attention", "uniform")
_PROXY_FLOOR = 1e-12
_NORM_FLOOR = 1e-9


@dataclass(frozen=True)
class ConfidenceMap:
    grid: TileGrid
    values: np.ndarray  # (B, K) float64 in [0, 1], y-major tile order
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(f"source must be one of {SOURCES}")
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_tiles:
            raise GeometryError(
                f"confidence shape {self.values.shape} does not match "
                f"{self.grid.n_tiles} tiles"
            )
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValidationError("confidence values must lie in [0, 1]")


@dataclass(frozen=True)
class AttentionProbe:
    """Sampling-time Q/K capture: (n_q, d) or (n_heads, n_q, d) arrays."""

    queries: np.ndarray
    keys: np.ndarray
    token_grid: tuple[int, int]
    head_stride: int = 1
    token_stride: int = 1

    def __post_init__(self):
        q, k = np.asarray(self.queries), np.asarray(self.keys)
        if q.ndim not in (2, 3) or k.ndim != q.ndim:
            raise ValidationError("queries/keys must both be rank 2 or rank 3")
        if q.shape[-1] != k.shape[-1]:
            raise ValidationError(
                f"head_dim mismatch: queries {q.shape[-1]} vs keys {k.shape[-1]}"
            )
        if q.ndim == 3 and q.shape[0] != k.shape[0]:
            raise ValidationError("queries/keys head counts differ")
        ht, wt = self.token_grid
        if ht * wt != q.shape[-2]:
            raise ValidationError(
                f"token_grid {self.token_grid} incompatible with {q.shape[-2]} queries"
            )
        if self.head_stride < 1 or self.token_stride < 1:
            raise ValidationError("strides must be >= 1")


def mean_channel(z: LatentTensor) -> np.ndarray:
    return z.data.mean(axis=1, dtype=np.float64)


def gradient_magnitude(plane: np.ndarray) -> np.ndarray:
    """|grad| per pixel of (B, H, W): central differences inside, one-sided at
    the borders, so a pure linear ramp reads as constant slope everywhere."""
    gy, gx = np.gradient(plane, axis=(1, 2))
    return np.sqrt(gy * gy + gx * gx)


def proxy_confidence(z: LatentTensor, grid: TileGrid) -> ConfidenceMap:
    """Normalized per-tile mean gradient magnitude of the channel-mean latent."""
    g = gradient_magnitude(mean_channel(z))
    pooled = window_sums(g, grid) / float(grid.tile * grid.tile)
    peak = pooled.max(axis=1, keepdims=True)
    values = np.where(peak < _PROXY_FLOOR, 0.0, pooled / np.maximum(peak, _PROXY_FLOOR))
    return ConfidenceMap(grid, values, "proxy")


def _bilinear_resize(field: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a 2-D field."""
    ht, wt = field.shape
    ys = np.linspace(0.0, ht - 1.0, height) if height > 1 else np.zeros(height)
    xs = np.linspace(0.0, wt - 1.0, width) if width > 1 else np.zeros(width)
    y0 = np.minimum(ys.astype(np.int64), ht - 1)
    x0 = np.minimum(xs.astype(np.int64), wt - 1)
    y1 = np.minimum(y0 + 1, ht - 1)
    x1 = np.minimum(x0 + 1, wt - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = field[np.ix_(y0, x0)] * (1 - fx) + field[np.ix_(y0, x1)] * fx
    bot = field[np.ix_(y1, x0)] * (1 - fx) + field[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _pool_token_map(tokens: np.ndarray, grid: TileGrid) -> np.ndarray:
    pixel = _bilinear_resize(tokens, grid.height, grid.width)
    pooled = window_sums(pixel[None], grid)[0] / float(grid.tile * grid.tile)
    return np.clip(pooled, 0.0, 1.0)


def _normalize_tokens(entropies: np.ndarray) -> np.ndarray:
    lo, hi = float(entropies.min()), float(entropies.max())
    if hi - lo < _NORM_FLOOR:
        return np.full_like(entropies, 0.5)
    return (entropies - lo) / (hi - lo)


def token_entropies(probe: AttentionProbe) -> np.ndarray:
    """Per-token attention entropy on the token grid, head-averaged.

    Query tokens are kept at indices 0, s, 2s, ...; skipped tokens take the
    value of their nearest kept neighbor.
    """
    q = np.asarray(probe.queries, dtype=np.float64)
    k = np.asarray(probe.keys, dtype=np.float64)
    if q.ndim == 2:
        q, k = q[None], k[None]
    heads = np.arange(0, q.shape[0], probe.head_stride)
    n_q = q.shape[1]
    kept = np.arange(0, n_q, probe.token_stride)
    scale = 1.0 / np.sqrt(q.shape[-1])

    per_head = np.empty((len(heads), n_q), dtype=np.float64)
    nearest = np.minimum((np.arange(n_q) + probe.token_stride // 2) // probe.token_stride,
                         len(kept) - 1)
    for row, h in enumerate(heads):
        logits = (q[h][kept] @ k[h].T) * scale
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        per_head[row] = row_entropies(p)[nearest]
    ht, wt = probe.token_grid
    return per_head.mean(axis=0).reshape(ht, wt)


def attention_confidence(probe: AttentionProbe, grid: TileGrid) -> ConfidenceMap:
    """Entropy-sourced confidence for the single sample the probe captured."""
    values = _pool_token_map(_normalize_tokens(token_entropies(probe)), grid)
    return ConfidenceMap(grid, values[None], "attention")


def entropy_confidence(entropies: np.ndarray, grid: TileGrid) -> ConfidenceMap:
    """Same as attention_confidence but from a precomputed per-token entropy map."""
    entropies = np.asarray(entropies, dtype=np.float64)
    if entropies.ndim != 2:
        raise ValidationError(f"entropy map must be rank 2, got rank {entropies.ndim}")
    values = _pool_token_map(_normalize_tokens(entropies), grid)
    return ConfidenceMap(grid, values[None], "attention")


def uniform_confidence(grid: TileGrid, value: float, batch: int = 1) -> ConfidenceMap:
    """Constant confidence, mainly a test hook for forcing shared corridors."""
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"confidence must be in [0, 1], got {value}")
    return ConfidenceMap(grid, np.full((batch, grid.n_tiles), float(value)), "uniform")


def quantile_map(h_hat):
    """Asymmetric corridor quantiles (q_low, q_high) for confidence in [0,1]."""
    h = np.asarray(h_hat, dtype=np.float64)
    if h.size and (h.min() < 0.0 or h.max() > 1.0):
        raise ValidationError("confidence must lie in [0, 1]")
    q_low = 0.5 * h * h
    q_high = 1.0 - 0.5 * (1.0 - h) * (1.0 - h)
    if np.isscalar(h_hat) or np.ndim(h_hat) == 0:
        return float(q_low), float(q_high)
    return q_low, q_high
