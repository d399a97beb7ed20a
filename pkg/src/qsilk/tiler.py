"""Overlapping tile extraction and seam-free overlap-add reconstruction.

A grid of T x T windows at stride S covers the full plane; when the stride
does not divide the span, a final tail-aligned window is added instead of
padding, so statistics never see fake zeros. Reconstruction divides the
per-pixel sum by the per-pixel window count, which makes re-assembly exact
for untouched patches and seam-free for modified ones.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GeometryError, ValidationError
from .tensor import LatentTensor


def _axis_positions(dim: int, tile: int, stride: int) -> tuple[int, ...]:
    positions = list(range(0, dim - tile + 1, stride))
    if positions[-1] != dim - tile:
        positions.append(dim - tile)
    return tuple(positions)


@dataclass(frozen=True)
class TileGrid:
    tile: int
    stride: int
    positions_y: tuple[int, ...]
    positions_x: tuple[int, ...]
    height: int
    width: int

    @property
    def n_tiles(self) -> int:
        return len(self.positions_y) * len(self.positions_x)

    def tile_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (y, x) offsets of every tile, y-major order."""
        ys = np.repeat(self.positions_y, len(self.positions_x))
        xs = np.tile(self.positions_x, len(self.positions_y))
        return ys, xs


def plan_grid(height: int, width: int, tile: int, stride: int) -> TileGrid:
    """Plan tail-aligned tile positions covering every pixel of H x W."""
    if tile < 1 or stride < 1:
        raise ValidationError(f"tile and stride must be >= 1, got T={tile} S={stride}")
    if stride > tile:
        raise ValidationError(f"stride {stride} > tile {tile} would leave gaps")
    if tile > height or tile > width:
        raise ValidationError(f"tile {tile} exceeds plane {height}x{width}")
    return TileGrid(
        tile=tile,
        stride=stride,
        positions_y=_axis_positions(height, tile, stride),
        positions_x=_axis_positions(width, tile, stride),
        height=height,
        width=width,
    )


@lru_cache(maxsize=32)
def weight_map(grid: TileGrid) -> np.ndarray:
    """Per-pixel window count, fold of all-ones. Read-only int32 (H, W)."""
    w = np.zeros((grid.height, grid.width), dtype=np.int32)
    t = grid.tile
    for y in grid.positions_y:
        for x in grid.positions_x:
            w[y:y + t, x:x + t] += 1
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class PatchStack:
    """Copies of every T x T window: patches[b, c, k] with k y-major."""

    grid: TileGrid
    patches: np.ndarray  # (B, C, K, T, T) float32

    def __post_init__(self):
        expect = (self.grid.n_tiles, self.grid.tile, self.grid.tile)
        if self.patches.ndim != 5 or self.patches.shape[2:] != expect:
            raise GeometryError(
                f"patch stack shape {self.patches.shape} does not match grid {expect}"
            )


def _as_data(z) -> np.ndarray:
    return z.data if isinstance(z, LatentTensor) else np.asarray(z, dtype=np.float32)


def unfold(z, grid: TileGrid) -> PatchStack:
    data = _as_data(z)
    if data.shape[2] != grid.height or data.shape[3] != grid.width:
        raise GeometryError(
            f"tensor plane {data.shape[2]}x{data.shape[3]} does not match "
            f"grid {grid.height}x{grid.width}"
        )
    ys, xs = grid.tile_offsets()
    windows = sliding_window_view(data, (grid.tile, grid.tile), axis=(2, 3))
    return PatchStack(grid, np.ascontiguousarray(windows[:, :, ys, xs]))


def fold(stack: PatchStack) -> tuple[np.ndarray, np.ndarray]:
    """Overlap-add sum of patches plus the per-pixel window count.

    Accumulation runs in float64 and in fixed tile order, so deeply
    overlapped grids (small strides) still reconstruct bit-exactly after
    normalization, and results never depend on thread count.
    """
    grid = stack.grid
    b, c = stack.patches.shape[:2]
    t = grid.tile
    acc = np.zeros((b, c, grid.height, grid.width), dtype=np.float64)
    ys, xs = grid.tile_offsets()
    for k in range(grid.n_tiles):
        acc[:, :, ys[k]:ys[k] + t, xs[k]:xs[k] + t] += stack.patches[:, :, k]
    return acc, weight_map(grid)


def overlap_add(stack: PatchStack) -> LatentTensor:
    """Normalized reconstruction: fold(patches) / fold(ones)."""
    acc, weight = fold(stack)
    np.divide(acc, weight, out=acc)
    return LatentTensor(acc.astype(np.float32))


def window_sums(field: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Sum of each tile window of a (B, H, W) field, via float64 integral image.

    Returns (B, K) float64 in y-major tile order.
    """
    b, h, w = field.shape
    if h != grid.height or w != grid.width:
        raise GeometryError(f"field plane {h}x{w} does not match grid")
    ii = np.zeros((b, h + 1, w + 1), dtype=np.float64)
    np.cumsum(field, axis=1, dtype=np.float64, out=ii[:, 1:, 1:])
    np.cumsum(ii[:, 1:, 1:], axis=2, out=ii[:, 1:, 1:])
    ys, xs = grid.tile_offsets()
    t = grid.tile
    return (ii[:, ys + t, xs + t] - ii[:, ys, xs + t]
            - ii[:, ys + t, xs] + ii[:, ys, xs])
