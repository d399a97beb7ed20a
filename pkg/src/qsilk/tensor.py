"""Dense rank-4 latent container and NPY file interchange.

Latents are (batch, channel, height, width) arrays. Files may store
float32 or float16, little-endian, C-order; in memory everything is
float32 and the original storage dtype is kept for round-tripping.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import numpy.lib.format as npy_format

from .errors import TensorFormatError, ValidationError

STORAGE_DTYPES = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}


@dataclass(frozen=True)
class LatentTensor:
    """Immutable rank-4 latent. `data` is float32 and must not be mutated."""

    data: np.ndarray
    source_precision: str = "f32"

    def __post_init__(self):
        if self.source_precision not in STORAGE_DTYPES:
            raise ValidationError(f"unknown precision {self.source_precision!r}")
        if self.data.ndim != 4:
            raise ValidationError(f"expected rank 4, got rank {self.data.ndim}")
        if min(self.data.shape) < 1:
            raise ValidationError(f"all dims must be >= 1, got {self.data.shape}")
        if self.data.dtype != np.float32:
            raise ValidationError(f"latent data must be float32, got {self.data.dtype}")

    @classmethod
    def from_array(cls, arr: np.ndarray, source_precision: str = "f32") -> "LatentTensor":
        """Validate and wrap an array, rejecting NaN/Inf."""
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim != 4:
            raise ValidationError(f"expected rank 4, got rank {arr.ndim}")
        _reject_nonfinite(arr)
        return cls(arr, source_precision)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def copy(self) -> "LatentTensor":
        return LatentTensor(self.data.copy(), self.source_precision)


def _reject_nonfinite(arr: np.ndarray) -> None:
    finite = np.isfinite(arr)
    if not finite.all():
        flat = int(np.argmax(~finite))
        idx = np.unravel_index(flat, arr.shape)
        raise TensorFormatError(
            f"non-finite value {arr[idx]!r} at index {tuple(int(i) for i in idx)}"
        )


def _read_npy_header(fh) -> tuple[tuple[int, ...], bool, np.dtype]:
    try:
        version = npy_format.read_magic(fh)
    except ValueError as exc:
        raise TensorFormatError(f"not an NPY file: {exc}") from exc
    if version == (1, 0):
        return npy_format.read_array_header_1_0(fh)
    if version == (2, 0):
        return npy_format.read_array_header_2_0(fh)
    raise TensorFormatError(f"unsupported NPY version {version[0]}.{version[1]}")


def load_tensor(path: str | os.PathLike) -> LatentTensor:
    """Load a rank-4 <f4/<f2 NPY file, widening to float32."""
    with open(path, "rb") as fh:
        shape, fortran_order, dtype = _read_npy_header(fh)
        if fortran_order:
            raise TensorFormatError("Fortran-ordered arrays are not supported (need C-order)")
        if dtype not in (np.dtype("<f4"), np.dtype("<f2")):
            raise TensorFormatError(f"expected dtype <f4 or <f2, got {dtype.str}")
        if len(shape) != 4:
            raise TensorFormatError(f"expected rank 4, got rank {len(shape)}")
        if min(shape) < 1:
            raise TensorFormatError(f"all dims must be >= 1, got {shape}")
        count = int(np.prod(shape))
        raw = np.fromfile(fh, dtype=dtype, count=count)
        if raw.size != count:
            raise TensorFormatError(f"truncated file: expected {count} values, got {raw.size}")
    data = raw.astype(np.float32).reshape(shape)
    _reject_nonfinite(data)
    precision = "f16" if dtype == np.dtype("<f2") else "f32"
    return LatentTensor(data, precision)


def save_tensor(t: LatentTensor, path: str | os.PathLike, dtype: str | None = None) -> None:
    """Write a latent as NPY v1.0; dtype defaults to the tensor's source precision."""
    dtype = t.source_precision if dtype is None else dtype
    if dtype not in STORAGE_DTYPES:
        raise ValidationError(f"dtype must be one of {sorted(STORAGE_DTYPES)}, got {dtype!r}")
    out = t.data if dtype == "f32" else t.data.astype(np.float16)
    with open(path, "wb") as fh:
        npy_format.write_array(fh, out, version=(1, 0))
