"""Global per-sample quantile corridor: the micrograin stabilizer.

Each sample's low/high quantiles over all of its C*H*W values define a
corridor; values are either hard-clamped to it (default, cheapest) or
softly compressed with a tanh so contrast is preserved.
"""

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .errors import ValidationError
from .kernels import interpolate_sorted, soft_clip_array
from .tensor import LatentTensor

MODES = ("hard", "tanh")


@dataclass(frozen=True)
class MicroClampConfig:
    q_low: float = 0.001
    q_high: float = 0.999
    mode: str = "hard"
    alpha: float = 2.0
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.q_low < self.q_high <= 1.0:
            raise ValidationError(
                f"q_low < q_high required within [0, 1], got ({self.q_low}, {self.q_high})"
            )
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alpha <= 0.0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.eps <= 0.0:
            raise ValidationError(f"eps must be positive, got {self.eps}")


def sample_corridor(plane: np.ndarray, cfg: MicroClampConfig) -> tuple[float, float]:
    """Quantile corridor over every value of one sample."""
    flat = np.sort(plane.ravel())
    return (interpolate_sorted(flat, cfg.q_low), interpolate_sorted(flat, cfg.q_high))


def _clamp_sample(plane: np.ndarray, cfg: MicroClampConfig):
    lo, hi = sample_corridor(plane, cfg)
    lo32, hi32 = np.float32(lo), np.float32(hi)
    if cfg.mode == "hard":
        out = np.clip(plane, lo32, hi32)
    else:
        out = soft_clip_array(plane, lo32, hi32, cfg.alpha, cfg.eps)
    return out, lo, hi


def micro_clamp_report(t: LatentTensor, cfg: MicroClampConfig):
    """Clamp and also report per-sample corridors and modified-element counts."""
    results = parallel_map(lambda b: _clamp_sample(t.data[b], cfg), list(range(t.shape[0])))
    out = np.stack([r[0] for r in results])
    corridors = [(r[1], r[2]) for r in results]
    modified = int(np.count_nonzero(out != t.data))
    return LatentTensor(out, t.source_precision), corridors, modified


def micro_clamp(t: LatentTensor, cfg: MicroClampConfig) -> LatentTensor:
    """Per-sample corridor clamp; samples never influence each other."""
    return micro_clamp_report(t, cfg)[0]


def micro_clamp_batched_independence_check(t: LatentTensor, cfg: MicroClampConfig) -> bool:
    """True iff clamping the batch equals clamping each sample alone."""
    whole = micro_clamp(t, cfg)
    for b in range(t.shape[0]):
        single = micro_clamp(LatentTensor(t.data[b:b + 1].copy()), cfg)
        if not np.array_equal(whole.data[b], single.data[0]):
            return False
    return True
