"""Command-line surface: microclamp, aqclip, simulate, bench, info.

Exit codes: 0 ok, 1 I/O failure, 2 validation failure. All numeric outputs
(NPY tensors, session sidecars, metrics CSV) are byte-deterministic for
identical invocations; wall-clock timing only ever lands in bench CSVs and
report text, which are explicitly not reproducible.
"""

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from ._parallel import ENV_VAR, thread_cap
from .aqclip import AqClipConfig, StepSession, aqclip_step
from .confidence import AttentionProbe, entropy_confidence
from .errors import QsilkError, ValidationError
from .harness import (BENCH_CSV_HEADER, Sinusoid, SynthSpec, bench,
                      build_pipeline, format_csv, run_sim)
from .microclamp import MicroClampConfig, micro_clamp_report
from .session_io import load_session, save_session, session_lock
from .tensor import load_tensor, save_tensor


@dataclass(frozen=True)
class Preset:
    name: str
    micro: MicroClampConfig
    aqclip: AqClipConfig
    pipeline: tuple[str, ...]


PRESETS = {
    "paper-default": Preset(
        "paper-default", MicroClampConfig(), AqClipConfig(),
        ("microclamp", "aqclip-lite"),
    ),
    "conservative": Preset(
        "conservative",
        MicroClampConfig(alpha=1.5),
        AqClipConfig(alpha=1.5, ema_beta=0.9),
        ("microclamp", "aqclip-lite"),
    ),
    "off": Preset("off", MicroClampConfig(), AqClipConfig(), ()),
}


def _parse_shape(text: str) -> tuple[int, int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 4:
        raise ValidationError(f"shape must look like 1x4x64x64, got {text!r}")
    dims = tuple(int(p) for p in parts)
    if min(dims) < 1:
        raise ValidationError(f"shape dims must be >= 1, got {text!r}")
    return dims


def _micro_config(args, preset: Preset) -> MicroClampConfig:
    cfg = preset.micro
    overrides = {}
    for flag, name in (("q_low", "q_low"), ("q_high", "q_high"), ("mode", "mode"),
                       ("alpha", "alpha"), ("eps", "eps")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[name] = val
    return replace(cfg, **overrides) if overrides else cfg


def _aq_config(args, preset: Preset) -> AqClipConfig:
    cfg = preset.aqclip
    overrides = {}
    for flag, name in (("tile", "tile"), ("stride", "stride"), ("alpha", "alpha"),
                       ("ema_beta", "ema_beta"), ("eps", "eps"),
                       ("quantile_floor", "quantile_floor"), ("mode", "mode")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "invert_confidence", False):
        overrides["invert_confidence"] = True
    return replace(cfg, **overrides) if overrides else cfg


def _get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return PRESETS[name]


def cmd_microclamp(args) -> int:
    cfg = _micro_config(args, _get_preset(args.preset))
    t = load_tensor(args.input)
    out, corridors, modified = micro_clamp_report(t, cfg)
    save_tensor(out, args.output, args.dtype)
    spans = " ".join(f"[{lo:.6g},{hi:.6g}]" for lo, hi in corridors)
    print(f"microclamp mode={cfg.mode} modified={modified} corridors={spans}")
    return 0


def _load_probe(args) -> AttentionProbe | None:
    if args.probe_q is None and args.probe_k is None:
        return None
    if args.probe_q is None or args.probe_k is None:
        raise ValidationError("--probe-q and --probe-k must be given together")
    if args.token_grid is None:
        raise ValidationError("--token-grid is required with Q/K probes")
    ht, wt = (int(p) for p in args.token_grid.lower().split("x"))
    q = _load_loose_array(args.probe_q, (2, 3))
    k = _load_loose_array(args.probe_k, (2, 3))
    return AttentionProbe(q, k, (ht, wt), args.head_stride, args.token_stride)


def _load_loose_array(path: str, ranks: tuple[int, ...]) -> np.ndarray:
    arr = np.load(path, allow_pickle=False)
    if arr.ndim not in ranks:
        raise ValidationError(f"{path}: expected rank in {ranks}, got rank {arr.ndim}")
    if arr.dtype.kind != "f":
        raise ValidationError(f"{path}: expected float dtype, got {arr.dtype}")
    return arr.astype(np.float64)


def cmd_aqclip(args) -> int:
    cfg = _aq_config(args, _get_preset(args.preset))
    t = load_tensor(args.input)
    probe = _load_probe(args)
    entropy_map = None
    if args.entropy_map is not None:
        entropy_map = _load_loose_array(args.entropy_map, (2,))
    if cfg.mode == "attn" and probe is None and entropy_map is None:
        raise ValidationError("attn mode requires --probe-q/--probe-k or --entropy-map")
    with session_lock(args.session):
        if os.path.exists(args.session):
            session = load_session(args.session)
        else:
            session = StepSession.fresh(t, cfg)
        session.check(t, cfg)
        override = None
        if entropy_map is not None and cfg.mode == "attn":
            # precomputed entropies bypass the softmax probe
            override = entropy_confidence(entropy_map, session.grid)
        out = aqclip_step(t, cfg, session, probe, confidence=override)
        save_tensor(out, args.output, args.dtype)
        save_session(session, args.session)
    lo = float(session.ema_lo.mean())
    hi = float(session.ema_hi.mean())
    print(f"aqclip mode={cfg.mode} step={session.step_index} "
          f"corridor_mean=[{lo:.6g},{hi:.6g}]")
    return 0


def _default_spec(args) -> SynthSpec:
    shape = _parse_shape(args.shape)
    b, c, h, w = shape
    spikes = []
    if args.spike_mag > 0 and args.spikes > 0:
        for i in range(args.spikes):
            frac = (i + 1) / (args.spikes + 1)
            spikes.append(((0, 0, int(h * frac), int(w * frac)), args.spike_mag))
    texture = (Sinusoid(3.0, 5.0, 0.8), Sinusoid(11.0, 7.0, 0.4, 1.3))
    return SynthSpec(shape=shape, texture=texture, noise_sigma=args.noise_sigma,
                     spikes=tuple(spikes), seed=args.seed)


def cmd_simulate(args) -> int:
    preset = _get_preset(args.preset)
    micro = _micro_config(args, preset)
    aq = _aq_config(args, preset)
    kinds = list(preset.pipeline) if args.pipeline is None else [
        p for p in args.pipeline.split(",") if p
    ]
    stages = build_pipeline(kinds, micro, aq)
    spec = _default_spec(args)
    report, rows = run_sim(spec, stages, args.steps)
    os.makedirs(args.outdir, exist_ok=True)
    csv_path = os.path.join(args.outdir, "metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(format_csv(rows))
    with open(os.path.join(args.outdir, "report.txt"), "w") as fh:
        fh.write(report.render())
    print(f"simulate preset={args.preset} steps={args.steps} -> {csv_path}")
    print(report.render(), end="")
    return 0


def cmd_bench(args) -> int:
    shape = _parse_shape(args.shape)
    preset = _get_preset(args.preset)
    os.makedirs(args.outdir, exist_ok=True)
    lines = [BENCH_CSV_HEADER]
    summaries = {}
    for name in args.pipelines.split(","):
        name = name.strip()
        kinds = [] if name == "identity" else [name]
        stages = build_pipeline(kinds, preset.micro, preset.aqclip)
        result = bench(shape, stages, args.iters, seed=args.seed)
        summaries[name] = result
        for i, ms in enumerate(result["times_ms"]):
            mp = shape[0] * shape[2] * shape[3] / 1e6
            lines.append(f"{name},{i},{ms:.6f},{mp / (ms / 1e3):.6f}")
    csv_path = os.path.join(args.outdir, "bench.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    for name, result in summaries.items():
        print(f"{name}: median {result['median_ms']:.4f} ms/step, "
              f"p95 {result['p95_ms']:.4f} ms, {result['mp_per_s']:.2f} MP/s")
    if "identity" in summaries and "aqclip-lite" in summaries:
        ratio = summaries["aqclip-lite"]["median_ms"] / summaries["identity"]["median_ms"]
        print(f"aqclip-lite / identity-copy overhead: {ratio:.1f}x")
    return 0


def cmd_info(args) -> int:
    print(f"qsilk {__version__}")
    print(f"thread cap ({ENV_VAR}): {thread_cap()}")
    for preset in PRESETS.values():
        m, a = preset.micro, preset.aqclip
        pipe = ",".join(preset.pipeline) or "(identity)"
        print(f"preset {preset.name}: pipeline={pipe}")
        print(f"  microclamp: q=({m.q_low},{m.q_high}) mode={m.mode} "
              f"alpha={m.alpha} eps={m.eps}")
        print(f"  aqclip: T={a.tile} S={a.stride} alpha={a.alpha} "
              f"ema_beta={a.ema_beta} eps={a.eps} floor={a.quantile_floor}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsilk",
                                     description="Latent stabilization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_preset(p):
        p.add_argument("--preset", default="paper-default",
                       help="parameter bundle: " + ", ".join(sorted(PRESETS)))

    p = sub.add_parser("microclamp", help="global per-sample quantile clamp")
    p.add_argument("input")
    p.add_argument("output")
    common_preset(p)
    p.add_argument("--mode", choices=["hard", "tanh"])
    p.add_argument("--q-low", dest="q_low", type=float)
    p.add_argument("--q-high", dest="q_high", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--dtype", choices=["f32", "f16"])
    p.set_defaults(fn=cmd_microclamp)

    p = sub.add_parser("aqclip", help="one adaptive per-tile clip step")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--session", required=True, help="session sidecar path")
    common_preset(p)
    p.add_argument("--mode", choices=["lite", "attn"])
    p.add_argument("--tile", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--ema-beta", dest="ema_beta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--quantile-floor", dest="quantile_floor", type=float)
    p.add_argument("--invert-confidence", action="store_true")
    p.add_argument("--probe-q", dest="probe_q")
    p.add_argument("--probe-k", dest="probe_k")
    p.add_argument("--entropy-map", dest="entropy_map")
    p.add_argument("--token-grid", dest="token_grid", help="token grid as HxW")
    p.add_argument("--head-stride", dest="head_stride", type=int, default=1)
    p.add_argument("--token-stride", dest="token_stride", type=int, default=1)
    p.add_argument("--dtype", choices=["f32", "f16"])
    p.set_defaults(fn=cmd_aqclip)

    p = sub.add_parser("simulate", help="multi-step synthetic stabilization run")
    p.add_argument("--outdir", required=True)
    common_preset(p)
    p.add_argument("--pipeline", help="comma list: microclamp,aqclip-lite,aqclip-attn")
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--seed", type=int, default=23132)
    p.add_argument("--shape", default="1x4x64x64")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=1.0)
    p.add_argument("--spikes", type=int, default=1)
    p.add_argument("--spike-mag", dest="spike_mag", type=float, default=50.0)
    p.add_argument("--mode", choices=["lite", "attn"])
    p.add_argument("--tile", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--ema-beta", dest="ema_beta", type=float)
    p.add_argument("--q-low", dest="q_low", type=float)
    p.add_argument("--q-high", dest="q_high", type=float)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bench", help="pipeline throughput measurement")
    p.add_argument("--outdir", required=True)
    common_preset(p)
    p.add_argument("--shape", default="1x4x128x128")
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pipelines", default="identity,microclamp,aqclip-lite")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("info", help="version, presets, thread cap")
    p.set_defaults(fn=cmd_info)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except QsilkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
