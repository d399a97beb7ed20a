"""Adaptive per-tile quantile clipping with temporal corridor smoothing.

One step: estimate a confidence value per tile, turn it into asymmetric
quantiles, convert those to a Gaussian corridor from the tile's mean and
std, blend the corridor with the previous steps' corridors (EMA), softly
clip every tile in the unfold domain, and reassemble seam-free by
overlap-add. Sessions carry the EMA state and reject geometry drift.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .confidence import (AttentionProbe, ConfidenceMap, attention_confidence,
                         proxy_confidence, quantile_map)
from .errors import GeometryError, SessionError, ValidationError
from .kernels import ndtri, soft_clip_array
from .tensor import LatentTensor
from .tiler import PatchStack, TileGrid, overlap_add, plan_grid, unfold

MODES = ("lite", "attn")


@dataclass(frozen=True)
class AqClipConfig:
    tile: int = 32
    stride: int = 16
    alpha: float = 2.0
    ema_beta: float = 0.8
    eps: float = 1e-6
    quantile_floor: float = 1e-4
    mode: str = "lite"
    invert_confidence: bool = False

    def __post_init__(self):
        if not 0.0 <= self.ema_beta <= 1.0:
            raise ValidationError(f"ema_beta must be in [0, 1], got {self.ema_beta}")
        if not 0.0 < self.quantile_floor < 0.5:
            raise ValidationError(
                f"quantile_floor must be in (0, 0.5), got {self.quantile_floor}"
            )
        if self.alpha <= 0.0 or self.eps <= 0.0:
            raise ValidationError("alpha and eps must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")

    def fingerprint(self) -> int:
        """Stable 64-bit hash of every behavior-affecting field."""
        text = "|".join(
            repr(v) for v in (
                self.tile, self.stride, self.alpha, self.ema_beta, self.eps,
                self.quantile_floor, self.mode, self.invert_confidence,
            )
        )
        return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


@dataclass
class CorridorGrid:
    """Per-sample per-tile corridor state, all (B, K) float32."""

    mu: np.ndarray
    sigma: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for name in ("mu", "sigma", "lo", "hi"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all():
                raise ValidationError(f"non-finite corridor field {name}")
        if (self.sigma < 0).any():
            raise ValidationError("sigma must be non-negative")
        if (self.lo > self.hi).any():
            raise ValidationError("corridor inverted: lo > hi")


def tile_stats(stack: PatchStack) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over each tile's C*T*T values, float64 accumulation."""
    p = stack.patches
    n = p.shape[1] * p.shape[3] * p.shape[4]
    mu = p.sum(axis=(1, 3, 4), dtype=np.float64) / n
    centered = p - mu.astype(np.float32)[:, None, :, None, None]
    var = np.square(centered).sum(axis=(1, 3, 4), dtype=np.float64) / n
    return mu, np.sqrt(var)


def corridor(mu, sigma, q_low, q_high, quantile_floor: float):
    """Gaussian corridor (lo, hi) = mu + sigma * ndtri(clamped quantiles).

    Quantile levels are clamped into [floor, 1-floor] before inversion since
    the confidence mapping legitimately reaches 0 and 1 where ndtri diverges.
    """
    if quantile_floor <= 0.0 or quantile_floor >= 0.5:
        raise ValidationError("quantile_floor must be in (0, 0.5)")
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma < 0).any():
        raise ValidationError("sigma must be non-negative")
    ql = np.clip(np.asarray(q_low, dtype=np.float64), quantile_floor, 1.0 - quantile_floor)
    qh = np.clip(np.asarray(q_high, dtype=np.float64), quantile_floor, 1.0 - quantile_floor)
    lo = mu + sigma * ndtri(ql)
    hi = mu + sigma * ndtri(qh)
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return lo, hi


class StepSession:
    """Carries tile geometry and EMA corridor state across denoising steps.

    Single-writer: one step at a time. The session is pinned to the first
    tensor's (B, H, W) and to the config fingerprint; anything else is a
    geometry error and callers should start a fresh session instead.
    """

    def __init__(self, grid: TileGrid, batch: int, config_fingerprint: int,
                 step_index: int = 0, ema_lo: np.ndarray | None = None,
                 ema_hi: np.ndarray | None = None):
        if (ema_lo is None) != (ema_hi is None):
            raise SessionError("ema_lo and ema_hi must be stored together")
        if ema_lo is not None and ema_lo.shape != (batch, grid.n_tiles):
            raise SessionError(
                f"EMA state shape {ema_lo.shape} does not match "
                f"({batch}, {grid.n_tiles})"
            )
        self.grid = grid
        self.batch = batch
        self.config_fingerprint = config_fingerprint
        self.step_index = step_index
        self.ema_lo = ema_lo
        self.ema_hi = ema_hi
        self.last_corridor: CorridorGrid | None = None

    @classmethod
    def fresh(cls, z: LatentTensor, cfg: AqClipConfig) -> "StepSession":
        grid = plan_grid(z.shape[2], z.shape[3], cfg.tile, cfg.stride)
        return cls(grid, z.shape[0], cfg.fingerprint())

    def check(self, z: LatentTensor, cfg: AqClipConfig) -> None:
        b, _, h, w = z.shape
        if (h, w) != (self.grid.height, self.grid.width):
            raise GeometryError(
                f"session is for {self.grid.height}x{self.grid.width}, got {h}x{w}"
            )
        if b != self.batch:
            raise GeometryError(f"session is for batch {self.batch}, got {b}")
        if cfg.fingerprint() != self.config_fingerprint:
            raise SessionError("config fingerprint does not match the session")
        if (cfg.tile, cfg.stride) != (self.grid.tile, self.grid.stride):
            raise GeometryError("tile/stride drifted mid-session")


def ema_update(session: StepSession, current: CorridorGrid, beta: float) -> CorridorGrid:
    """Blend current corridor bounds into the session state: new = beta*past + (1-beta)*now."""
    if not 0.0 <= beta <= 1.0:
        raise ValidationError(f"beta must be in [0, 1], got {beta}")
    if current.lo.shape != (session.batch, session.grid.n_tiles):
        raise GeometryError(
            f"corridor shape {current.lo.shape} does not match session geometry"
        )
    if session.ema_lo is None:
        lo, hi = current.lo.copy(), current.hi.copy()
    else:
        b = np.float32(beta)
        one_minus = np.float32(1.0) - b
        lo = b * session.ema_lo + one_minus * current.lo
        hi = b * session.ema_hi + one_minus * current.hi
    session.ema_lo, session.ema_hi = lo, hi
    return CorridorGrid(current.mu, current.sigma, lo, hi)


def apply_corridor(z: LatentTensor, grid: TileGrid, lo: np.ndarray, hi: np.ndarray,
                   alpha: float, eps: float) -> LatentTensor:
    """Soft-clip every tile into its (lo, hi) corridor and overlap-add back."""
    stack = unfold(z, grid)
    lo5 = np.asarray(lo, dtype=np.float32)[:, None, :, None, None]
    hi5 = np.asarray(hi, dtype=np.float32)[:, None, :, None, None]
    clipped = PatchStack(grid, soft_clip_array(stack.patches, lo5, hi5, alpha, eps))
    return LatentTensor(overlap_add(clipped).data, z.source_precision)


def step_confidence(z: LatentTensor, cfg: AqClipConfig, grid: TileGrid,
                    probe: AttentionProbe | None,
                    override: ConfidenceMap | None = None) -> ConfidenceMap:
    if override is not None:
        values = np.broadcast_to(override.values, (z.shape[0], grid.n_tiles))
        cmap = ConfidenceMap(grid, np.array(values), override.source)
    elif cfg.mode == "attn":
        if probe is None:
            raise ValidationError("attn mode requires an attention probe")
        cmap = attention_confidence(probe, grid)
        values = np.broadcast_to(cmap.values, (z.shape[0], grid.n_tiles))
        cmap = ConfidenceMap(grid, np.array(values), cmap.source)
    else:
        cmap = proxy_confidence(z, grid)
    if cfg.invert_confidence:
        cmap = ConfidenceMap(cmap.grid, 1.0 - cmap.values, cmap.source)
    return cmap


def aqclip_step(z: LatentTensor, cfg: AqClipConfig, session: StepSession,
                probe: AttentionProbe | None = None,
                confidence: ConfidenceMap | None = None) -> LatentTensor:
    """One adaptive-clip application; advances the session's EMA state.

    `confidence` overrides the mode's own confidence source (used for
    precomputed entropy maps and for forcing uniform corridors in tests).
    """
    session.check(z, cfg)
    grid = session.grid
    cmap = step_confidence(z, cfg, grid, probe, confidence)
    q_low, q_high = quantile_map(cmap.values)
    stack = unfold(z, grid)
    mu, sigma = tile_stats(stack)
    lo, hi = corridor(mu, sigma, q_low, q_high, cfg.quantile_floor)
    current = CorridorGrid(
        mu.astype(np.float32), sigma.astype(np.float32),
        lo.astype(np.float32), hi.astype(np.float32),
    )
    smoothed = ema_update(session, current, cfg.ema_beta)
    session.last_corridor = smoothed
    session.step_index += 1
    lo5 = smoothed.lo[:, None, :, None, None]
    hi5 = smoothed.hi[:, None, :, None, None]
    clipped = PatchStack(grid, soft_clip_array(stack.patches, lo5, hi5, cfg.alpha, cfg.eps))
    return LatentTensor(overlap_add(clipped).data, z.source_precision)
