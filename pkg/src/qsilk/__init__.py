"""Training-free latent stabilization: global micrograin clamp plus adaptive
per-tile quantile clipping with seam-free overlap-add tiling."""

__version__ = "0.1.0"

from .aqclip import (AqClipConfig, CorridorGrid, StepSession, aqclip_step,
                     apply_corridor, corridor, ema_update, tile_stats)
from .confidence import (AttentionProbe, ConfidenceMap, attention_confidence,
                         entropy_confidence, proxy_confidence, quantile_map,
                         uniform_confidence)
from .errors import (GeometryError, QsilkError, SessionError, TensorFormatError,
                     ValidationError)
from .harness import (StabilityReport, SynthSpec, Sinusoid, bench,
                      build_pipeline, run_sim, synth_latent)
from .kernels import (ndtri, normal_cdf, quantile, row_entropy, soft_clip_array,
                      soft_clip_elem)
from .microclamp import (MicroClampConfig, micro_clamp,
                         micro_clamp_batched_independence_check)
from .session_io import load_session, save_session
from .tensor import LatentTensor, load_tensor, save_tensor
from .tiler import PatchStack, TileGrid, fold, overlap_add, plan_grid, unfold

__all__ = [
    "AqClipConfig", "AttentionProbe", "ConfidenceMap", "CorridorGrid",
    "GeometryError", "LatentTensor", "MicroClampConfig", "PatchStack",
    "QsilkError", "SessionError", "Sinusoid", "StabilityReport", "StepSession",
    "SynthSpec", "TensorFormatError", "TileGrid", "ValidationError",
    "aqclip_step", "apply_corridor", "attention_confidence", "bench",
    "build_pipeline", "corridor", "ema_update", "entropy_confidence", "fold",
    "load_session", "load_tensor", "micro_clamp",
    "micro_clamp_batched_independence_check", "ndtri", "normal_cdf",
    "overlap_add", "plan_grid", "proxy_confidence", "quantile", "quantile_map",
    "row_entropy", "run_sim", "save_session", "save_tensor", "soft_clip_array",
    "soft_clip_elem", "synth_latent", "tile_stats", "unfold",
    "uniform_confidence",
]
