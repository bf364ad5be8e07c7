"""Command-line front end: simulate / filter / flow / design / bench.

Every run that produces files also writes a ``run_meta.json`` capturing the
parameter set, seeds, strategy and geometry needed to reproduce it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bench import STAGES, BenchConfig, StrategySpec, run_bench
from .design import freq_response, kernel_to_freq, sample_kernel
from .params import (
    FilterParams,
    ParamError,
    default_params,
    load_params,
    params_as_dict,
)
from .pipeline import Pipeline, valid_bounds
from .scenegen import GroundTruth, SimConfig, generate
from .seqio import SequenceError, read_sequence, write_sequence

GROUND_TRUTH_NAME = "ground_truth.json"
RUN_META_NAME = "run_meta.json"

METRICS_HEADER = (
    "frame_index,background_rms,peak_abs_residual,peak_x,peak_y,"
    "target_x,target_y,hit,vel_err_median,vel_err_within_quarter"
)


def _parse_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}")
    return float(parts[0]), float(parts[1])


def _load_params(path: str | None) -> FilterParams:
    return load_params(path) if path else default_params()


def _strategy_name(args) -> str:
    if args.strategy == "serial":
        return "serial"
    return f"parallel:{args.workers}"


def _write_run_meta(out_dir: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["version"] = __version__
    with open(out_dir / RUN_META_NAME, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=float)
        fh.write("\n")


# -- simulate -----------------------------------------------------------------


def _cmd_simulate(args) -> int:
    config = SimConfig(
        width=args.width,
        height=args.height,
        frame_count=args.frames,
        clutter_velocity=args.clutter_velocity,
        component_count=args.components,
        component_amplitude=args.amplitude,
        freq_range=args.freq_range,
        dc_offset=args.dc_offset,
        target_velocity=args.target_velocity,
        target_peak=None if args.no_target else args.target_peak,
        psf_sigma=args.psf_sigma,
        target_truncation=args.truncation,
        noise_sigma=args.noise_sigma,
        rng_seed=args.seed,
    )
    frames, truth = generate(config)
    out = Path(args.out)
    write_sequence(
        frames,
        out,
        dtype=args.dtype,
        meta={"source": "simulate", "seed": config.rng_seed},
    )
    with open(out / GROUND_TRUTH_NAME, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json_dict(), fh, indent=2)
        fh.write("\n")
    _write_run_meta(
        out,
        {
            "command": "simulate",
            "seed": config.rng_seed,
            "config": truth.to_json_dict()["config"],
        },
    )
    print(f"wrote {config.frame_count} frames to {out}")
    return 0


# -- filter -------------------------------------------------------------------


@dataclass
class MetricsRow:
    frame_index: int
    background_rms: float
    peak_abs_residual: float
    peak_x: int
    peak_y: int
    target_x: float | None
    target_y: float | None
    hit: bool | None
    vel_err_median: float | None
    vel_err_within_quarter: float | None

    def csv(self) -> str:
        def fmt(v, spec=".6g"):
            return "" if v is None else format(v, spec)

        hit = "" if self.hit is None else str(int(self.hit))
        return (
            f"{self.frame_index},{self.background_rms:.6g},"
            f"{self.peak_abs_residual:.6g},{self.peak_x},{self.peak_y},"
            f"{fmt(self.target_x)},{fmt(self.target_y)},{hit},"
            f"{fmt(self.vel_err_median)},{fmt(self.vel_err_within_quarter)}"
        )


def _load_ground_truth(seq_dir: Path) -> GroundTruth | None:
    path = seq_dir / GROUND_TRUTH_NAME
    if not path.is_file():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return GroundTruth.from_json_dict(json.load(fh))


def target_exclusion_radius(params: FilterParams, config: SimConfig) -> int:
    """Pixels around the target center excluded from the background RMS:
    truncation-disk radius plus the analysis-window reach."""
    radius = config.psf_sigma * math.sqrt(
        2.0 * math.log(max(config.target_peak or 1.0, config.target_truncation * 2)
                       / config.target_truncation)
    )
    return int(math.ceil(radius)) + max(params.kx, params.ky) + 1


def compute_metrics_row(
    out,
    params: FilterParams,
    truth: GroundTruth | None,
) -> MetricsRow:
    """Score one whitened frame (background RMS excludes the target disk)."""
    res = out.residual
    mask = out.mask
    absres = np.abs(res)
    masked = np.where(mask, absres, -1.0)
    flat_peak = int(np.argmax(masked))
    peak_y, peak_x = np.unravel_index(flat_peak, res.shape)
    peak_val = float(absres[peak_y, peak_x])

    target_x = target_y = None
    hit = None
    bg_mask = mask.copy()
    if truth is not None and truth.target_centers is not None:
        cx, cy = truth.target_centers[out.frame_index]
        target_x, target_y = float(cx), float(cy)
        hit = max(abs(peak_x - cx), abs(peak_y - cy)) <= 1.0
        excl = target_exclusion_radius(params, truth.config)
        ys = np.arange(res.shape[0])[:, None]
        xs = np.arange(res.shape[1])[None, :]
        cheb = np.maximum(np.abs(xs - cx), np.abs(ys - cy))
        bg_mask &= cheb > excl
    bg = res[bg_mask]
    background_rms = float(np.sqrt(np.mean(bg.astype(np.float64) ** 2))) if bg.size else 0.0

    vel_med = vel_frac = None
    if truth is not None:
        cvx, cvy = truth.clutter_velocity
        vel = out.velocity.velocities
        err = np.maximum(np.abs(vel[..., 0] - cvx), np.abs(vel[..., 1] - cvy))
        anchors = np.zeros(mask.shape, dtype=bool)
        anchors[params.my - 1 :, params.mx - 1 :] = True
        err = err[anchors]
        vel_med = float(np.median(err))
        vel_frac = float(np.mean(err <= 0.25))

    return MetricsRow(
        frame_index=out.frame_index,
        background_rms=background_rms,
        peak_abs_residual=peak_val,
        peak_x=int(peak_x),
        peak_y=int(peak_y),
        target_x=target_x,
        target_y=target_y,
        hit=hit,
        vel_err_median=vel_med,
        vel_err_within_quarter=vel_frac,
    )


def _velocity_sidecar(out_dir: Path, count: int, width: int, height: int,
                      first_index: int) -> None:
    with open(out_dir / "velocity.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "width": width,
                "height": height,
                "frame_count": count,
                "channels": 2,
                "components": ["vx", "vy"],
                "dtype": "f32le",
                "first_frame_index": first_index,
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def _cmd_filter(args) -> int:
    params = _load_params(args.params)
    frames, header = read_sequence(args.input)
    truth = _load_ground_truth(Path(args.input))
    t, h, w = frames.shape
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    pipe = Pipeline(
        params, w, h, strategy=_strategy_name(args), spectrum_backend=args.backend
    )
    residuals, predictions, velocities, metrics = [], [], [], []
    first_index = None
    t0 = time.perf_counter()
    with pipe:
        for i in range(t):
            out = pipe.process_frame(frames[i])
            if out is None:
                continue
            if first_index is None:
                first_index = out.frame_index
            residuals.append(out.residual)
            if args.emit_prediction:
                predictions.append(out.prediction)
            if args.emit_velocity:
                velocities.append(out.velocity.velocities.astype(np.float32))
            if args.metrics:
                metrics.append(compute_metrics_row(out, params, truth))
    elapsed = time.perf_counter() - t0
    if not residuals:
        print("error: sequence shorter than the temporal window", file=sys.stderr)
        return 1

    seq_meta = {
        "source": "filter",
        "input": str(args.input),
        "first_frame_index": first_index,
        "latency_frames": params.latency,
    }
    write_sequence(np.stack(residuals), out_dir, dtype=args.dtype, meta=seq_meta)
    if args.emit_prediction:
        write_sequence(
            np.stack(predictions),
            out_dir / "prediction",
            dtype=args.dtype,
            meta=dict(seq_meta, source="filter-prediction"),
        )
    if args.emit_velocity:
        vel = np.stack(velocities)
        vel.astype("<f4").tofile(out_dir / "velocity.f32")
        _velocity_sidecar(out_dir, len(velocities), w, h, first_index)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            fh.write(METRICS_HEADER + "\n")
            for row in metrics:
                fh.write(row.csv() + "\n")

    ox_lo, ox_hi, oy_lo, oy_hi = valid_bounds(params, w, h)
    _write_run_meta(
        out_dir,
        {
            "command": "filter",
            "params": params_as_dict(params),
            "strategy": _strategy_name(args),
            "backend": args.backend,
            "input": str(args.input),
            "input_seed": header.meta.get("seed"),
            "frames_in": t,
            "frames_out": len(residuals),
            "valid_region": {"x": [ox_lo, ox_hi], "y": [oy_lo, oy_hi]},
            "latency_frames": params.latency,
            "bank_build_seconds": pipe.bank.build_seconds,
            "seconds": elapsed,
        },
    )
    print(f"wrote {len(residuals)} residual frames to {out_dir}")
    return 0


# -- flow ---------------------------------------------------------------------


def _cmd_flow(args) -> int:
    params = _load_params(args.params)
    frames, header = read_sequence(args.input)
    t, h, w = frames.shape
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    pipe = Pipeline(params, w, h, strategy=_strategy_name(args))
    fields = []
    first_index = None
    with pipe:
        for i in range(t):
            out = pipe.process_frame(frames[i])
            if out is None:
                continue
            if first_index is None:
                first_index = i
            fields.append((i, out.velocity.velocities.astype(np.float32)))
    if not fields:
        print("error: sequence shorter than the temporal window", file=sys.stderr)
        return 1

    if args.format == "f32":
        np.stack([v for _, v in fields]).astype("<f4").tofile(out_dir / "velocity.f32")
        _velocity_sidecar(out_dir, len(fields), w, h, first_index)
    else:
        with open(out_dir / "velocity.csv", "w", encoding="utf-8") as fh:
            fh.write("frame,y,x,vx,vy\n")
            for idx, vel in fields:
                for y in range(params.my - 1, h):
                    for x in range(params.mx - 1, w):
                        fh.write(
                            f"{idx},{y},{x},{vel[y, x, 0]:.6g},{vel[y, x, 1]:.6g}\n"
                        )
    _write_run_meta(
        out_dir,
        {
            "command": "flow",
            "params": params_as_dict(params),
            "strategy": _strategy_name(args),
            "input": str(args.input),
            "input_seed": header.meta.get("seed"),
            "frames_in": t,
            "fields_out": len(fields),
        },
    )
    print(f"wrote {len(fields)} velocity fields to {out_dir}")
    return 0


# -- design -------------------------------------------------------------------


def _cmd_design(args) -> int:
    params = _load_params(args.params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    velocity = args.velocity

    kern = sample_kernel(params, velocity)
    with open(out_dir / "taps.csv", "w", encoding="utf-8") as fh:
        fh.write("mz,my,mx,value\n")
        for mz in range(params.mz):
            for my in range(params.my):
                for mx in range(params.mx):
                    fh.write(f"{mz},{my},{mx},{kern.taps[mz, my, mx]:.9g}\n")

    fk = kernel_to_freq(kern, params)
    with open(out_dir / "coeffs.csv", "w", encoding="utf-8") as fh:
        fh.write("kz,ky,kx,real,imag\n")
        for ikz in range(params.mz):
            for iky in range(params.wy):
                for ikx in range(params.wx):
                    c = fk.coeffs[ikz, iky, ikx]
                    fh.write(
                        f"{ikz - params.kz},{iky - params.by},{ikx - params.bx},"
                        f"{c.real:.9g},{c.imag:.9g}\n"
                    )

    n = args.response_grid
    fs = np.linspace(-0.5, 0.5, n, endpoint=False)
    if args.response_plane == "xz":
        fa, fb = np.meshgrid(fs, fs, indexing="ij")  # fa = fx, fb = fz
        q = freq_response(params, velocity, (fa, np.zeros_like(fa), fb))
        cols = ("fx", "fz")
    else:
        fa, fb = np.meshgrid(fs, fs, indexing="ij")  # fa = fx, fb = fy
        q = freq_response(params, velocity, (fa, fb, np.zeros_like(fa)))
        cols = ("fx", "fy")
    with open(out_dir / "response.csv", "w", encoding="utf-8") as fh:
        fh.write(f"{cols[0]},{cols[1]},magnitude\n")
        for i in range(n):
            for j in range(n):
                fh.write(f"{fa[i, j]:.6g},{fb[i, j]:.6g},{abs(q[i, j]):.9g}\n")

    _write_run_meta(
        out_dir,
        {
            "command": "design",
            "params": params_as_dict(params),
            "velocity": list(velocity),
            "tap_sum": float(kern.taps.sum()),
        },
    )
    print(f"wrote taps.csv, coeffs.csv, response.csv to {out_dir}")
    return 0


# -- bench --------------------------------------------------------------------


def _cmd_bench(args) -> int:
    params = _load_params(args.params)
    strategies = tuple(
        StrategySpec.parse(s, default_workers=args.workers)
        for s in args.strategies.split(",")
    )
    config = BenchConfig(
        width=args.width,
        height=args.height,
        frames=args.frames,
        repetitions=args.reps,
        warmup_frames=args.warmup,
        strategies=strategies,
        stages=tuple(args.stages.split(",")) if args.stages else STAGES,
        seed=args.seed,
        max_workers=args.max_workers,
    )
    report = run_bench(config, params)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote {args.out}")
    if args.markdown or not args.out:
        print(report.to_markdown())
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clutterwhiten",
        description="Whiten cluttered image sequences to enhance point targets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cluttered sequence")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--clutter-velocity", type=_parse_pair, default=(1.625, 0.625))
    p.add_argument("--target-velocity", type=_parse_pair, default=(-0.625, -0.375))
    p.add_argument("--components", type=int, default=25)
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--freq-range", type=float, default=2.0 / 9.0)
    p.add_argument("--dc-offset", type=float, default=10.0)
    p.add_argument("--target-peak", type=float, default=1.0)
    p.add_argument("--psf-sigma", type=float, default=1.0)
    p.add_argument("--truncation", type=float, default=0.1)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--no-target", action="store_true")
    p.add_argument("--dtype", choices=("f32le", "pgm16"), default="f32le")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("filter", help="whiten a sequence")
    p.add_argument("--in", dest="input", required=True, help="input sequence directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="parameter file")
    p.add_argument("--strategy", choices=("serial", "parallel"), default="serial")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--backend", choices=("recursive", "naive"), default="recursive")
    p.add_argument("--emit-prediction", action="store_true")
    p.add_argument("--emit-velocity", action="store_true")
    p.add_argument("--metrics", help="per-frame metrics CSV path")
    p.add_argument("--dtype", choices=("f32le", "pgm16"), default="f32le")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("flow", help="emit per-frame velocity fields")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--params")
    p.add_argument("--strategy", choices=("serial", "parallel"), default="serial")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--format", choices=("f32", "csv"), default="f32")
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("design", help="dump filter taps / coefficients / response")
    p.add_argument("--velocity", type=_parse_pair, required=True, help="vx,vy")
    p.add_argument("--params")
    p.add_argument("--out", required=True)
    p.add_argument("--response-grid", type=int, default=101)
    p.add_argument("--response-plane", choices=("xz", "xy"), default="xz")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("bench", help="throughput benchmark")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--markdown", action="store_true", help="print Markdown table")
    p.add_argument("--params")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=6)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument(
        "--strategies",
        default="naive-serial,recursive-serial,recursive-parallel",
        help="comma-separated strategy list",
    )
    p.add_argument("--workers", type=int, default=4, help="default parallel workers")
    p.add_argument("--max-workers", type=int, default=None)
    p.add_argument("--stages", help="comma-separated stage subset")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParamError, SequenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
