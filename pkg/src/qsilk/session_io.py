"""Step-session sidecar files.

Layout: magic "QSLK1", a fixed little-endian header (batch, height, width,
tile, stride, step_index, state flag, config fingerprint), then the EMA
low/high corridor grids as length-prefixed embedded NPY blobs. Writes are
atomic (temp file + rename) and a .lock file serializes concurrent writers.
"""

import contextlib
import io
import os
import struct
import tempfile

import numpy as np

from .aqclip import StepSession
from .errors import SessionError
from .tiler import plan_grid

MAGIC = b"QSLK1"
_HEADER = struct.Struct("<IIIIIIIQ")


def save_session(session: StepSession, path: str | os.PathLike) -> None:
    """Atomically write the session sidecar (write-then-rename)."""
    has_state = session.ema_lo is not None
    header = _HEADER.pack(
        session.batch, session.grid.height, session.grid.width,
        session.grid.tile, session.grid.stride, session.step_index,
        1 if has_state else 0, session.config_fingerprint,
    )
    blobs = b""
    if has_state:
        for arr in (session.ema_lo, session.ema_hi):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arr, dtype=np.float32))
            raw = buf.getvalue()
            blobs += struct.pack("<Q", len(raw)) + raw
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".qslk-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC + header + blobs)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def load_session(path: str | os.PathLike) -> StepSession:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise SessionError(f"{path}: not a session file (bad magic)")
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise SessionError(f"{path}: truncated header")
        batch, height, width, tile, stride, step_index, has_state, fingerprint = \
            _HEADER.unpack(raw)
        ema_lo = ema_hi = None
        if has_state:
            grids = []
            for _ in range(2):
                size_raw = fh.read(8)
                if len(size_raw) != 8:
                    raise SessionError(f"{path}: truncated state block")
                (size,) = struct.unpack("<Q", size_raw)
                blob = fh.read(size)
                if len(blob) != size:
                    raise SessionError(f"{path}: truncated state block")
                grids.append(np.load(io.BytesIO(blob), allow_pickle=False))
            ema_lo, ema_hi = grids
    grid = plan_grid(height, width, tile, stride)
    try:
        return StepSession(grid, batch, fingerprint, step_index, ema_lo, ema_hi)
    except SessionError as exc:
        raise SessionError(f"{path}: {exc}") from exc


@contextlib.contextmanager
def session_lock(path: str | os.PathLike):
    """Advisory exclusive lock guarding one session file."""
    import fcntl

    lock_path = f"{path}.lock"
    with open(lock_path, "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise SessionError(f"session {path} is locked by another process") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)
