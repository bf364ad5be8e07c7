"""Throughput harness: stage and whole-pipeline rates across execution
strategies and spectrum backends.

Timing covers steady-state per-frame work only (I/O, bank construction,
JIT warm-up and the temporal warm-up frames are excluded).  Before any
timing, every requested strategy is run on identical input and the outputs
are cross-checked: naive and recursive spectra must agree to the spectral
tolerance, serial and parallel residuals must be bit-identical.  A report
is never produced from non-equivalent outputs.

Absolute frame rates are hardware-specific; the meaningful results are the
ratio columns (recursive vs naive, parallel vs serial).  The harness itself
is single-threaded: parallelism lives inside the pipelines it drives.
"""

from __future__ import annotations

import os
import statistics
from dataclasses import dataclass, field

import numpy as np

from .params import FilterParams, default_params, validate
from .pipeline import Pipeline
from .scenegen import SimConfig, generate
from .spectrum import NaiveSpectrumStream, SpectrumStream
from .design import build_bank

__all__ = [
    "STAGES",
    "StrategySpec",
    "BenchConfig",
    "BenchRow",
    "BenchReport",
    "EquivalenceError",
    "rel_deviation",
    "verify_equivalence",
    "run_bench",
]

STAGES = ("spectrum", "conditioning", "autocorr", "filtering", "pipeline")

CSV_HEADER = "stage,strategy,workers,fps_median,fps_min,fps_max,speedup_vs_baseline"

SPECTRUM_REL_TOL = 1e-4


class EquivalenceError(RuntimeError):
    """Strategies disagreed; timing was aborted."""


@dataclass(frozen=True)
class StrategySpec:
    """One benchmarked execution strategy."""

    backend: str  # "recursive" | "naive"
    mode: str  # "serial" | "parallel"
    workers: int = 1

    def __post_init__(self):
        if self.backend not in ("recursive", "naive"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mode not in ("serial", "parallel"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.backend == "naive" and self.mode != "serial":
            raise ValueError("the naive backend is defined serial-only")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def name(self) -> str:
        return f"{self.backend}-{self.mode}"

    @classmethod
    def parse(cls, text: str, default_workers: int = 4) -> "StrategySpec":
        """Parse "naive-serial", "recursive-serial", "recursive-parallel"
        or "recursive-parallel:N"."""
        workers = default_workers
        if ":" in text:
            text, _, w = text.partition(":")
            workers = int(w)
        try:
            backend, mode = text.rsplit("-", 1)
        except ValueError:
            raise ValueError(f"unknown strategy {text!r}") from None
        if mode == "serial":
            workers = 1
        return cls(backend=backend, mode=mode, workers=workers)

    def pipeline_strategy(self) -> str:
        if self.mode == "serial":
            return "serial"
        return f"parallel:{self.workers}"


def _default_strategies() -> tuple[StrategySpec, ...]:
    return (
        StrategySpec("naive", "serial"),
        StrategySpec("recursive", "serial"),
        StrategySpec("recursive", "parallel", workers=4),
    )


@dataclass
class BenchConfig:
    width: int = 64
    height: int = 64
    frames: int = 20
    repetitions: int = 3
    warmup_frames: int = 6  # excluded from timing (covers temporal warm-up)
    strategies: tuple[StrategySpec, ...] = field(default_factory=_default_strategies)
    stages: tuple[str, ...] = STAGES
    seed: int = 1234
    max_workers: int | None = None  # configured ceiling; None = no limit

    def validate(self, params: FilterParams) -> None:
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.frames < 2 * params.mz:
            raise ValueError(f"frame count must be >= {2 * params.mz}")
        if self.warmup_frames < params.mz or self.warmup_frames >= self.frames:
            raise ValueError("warmup_frames must cover temporal warm-up and "
                             "leave frames to time")
        for stage in self.stages:
            if stage not in STAGES:
                raise ValueError(f"unknown stage {stage!r}")


@dataclass
class BenchRow:
    stage: str
    strategy: str
    workers: int
    fps_median: float
    fps_min: float
    fps_max: float
    speedup: float

    def csv(self) -> str:
        return (
            f"{self.stage},{self.strategy},{self.workers},"
            f"{self.fps_median:.4f},{self.fps_min:.4f},{self.fps_max:.4f},"
            f"{self.speedup:.4f}"
        )


@dataclass
class BenchReport:
    rows: list[BenchRow]
    core_count: int
    notes: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def to_markdown(self) -> str:
        lines = [
            f"Benchmark on {self.core_count} CPU core(s).",
            "",
            "| stage | strategy | workers | fps (median) | fps (min) | fps (max) | speedup |",
            "|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            lines.append(
                f"| {r.stage} | {r.strategy} | {r.workers} | {r.fps_median:.2f} "
                f"| {r.fps_min:.2f} | {r.fps_max:.2f} | {r.speedup:.2f}x |"
            )
        for note in self.notes:
            lines.append(f"")
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"


def rel_deviation(test_bins: np.ndarray, ref_bins: np.ndarray) -> float:
    """Worst per-bin relative deviation |a - b| / |b|, with the denominator
    floored at 1e-12 of the largest reference magnitude to guard exact
    zeros."""
    ref_mag = np.abs(ref_bins)
    floor = 1e-12 * float(ref_mag.max()) if ref_mag.size else 1.0
    denom = np.maximum(ref_mag, floor if floor > 0 else 1.0)
    return float((np.abs(test_bins - ref_bins) / denom).max())


def verify_equivalence(outputs: dict[str, dict]) -> list[str]:
    """Cross-check per-strategy output bundles.

    ``outputs[name]`` carries ``backend``, ``mode``, ``spectrum`` (valid-
    region bins of the last frame) and ``residuals`` (stacked output
    frames).  Naive spectra are compared to the recursive reference within
    the spectral tolerance; parallel residuals must match the serial
    reference bit for bit.  Returns mismatch descriptions, empty when all
    agree.
    """
    if len(outputs) < 2:
        return []
    mismatches: list[str] = []
    ref_name = None
    for name, bundle in outputs.items():
        if bundle["backend"] == "recursive" and bundle["mode"] == "serial":
            ref_name = name
            break
    if ref_name is None:
        ref_name = next(iter(outputs))
    ref = outputs[ref_name]

    for name, bundle in outputs.items():
        if name == ref_name:
            continue
        if bundle["backend"] != ref["backend"]:
            dev = rel_deviation(bundle["spectrum"], ref["spectrum"])
            if dev > SPECTRUM_REL_TOL:
                diff = np.abs(bundle["spectrum"] - ref["spectrum"])
                worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
                mismatches.append(
                    f"{name} vs {ref_name}: spectra deviate {dev:.3e} "
                    f"(> {SPECTRUM_REL_TOL:.0e}) at bin index {worst}, "
                    f"|diff| {diff.max():.3e}"
                )
        else:
            a, b = bundle["residuals"], ref["residuals"]
            if a.shape != b.shape or not np.array_equal(a, b):
                diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
                worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
                mismatches.append(
                    f"{name} vs {ref_name}: residuals not bit-identical, "
                    f"worst at {worst}, |diff| {diff.max():.3e}"
                )
    return mismatches


def _run_pipeline_once(params, frames, spec: StrategySpec, bank, warmup, stages):
    """One timed pass; returns (per-stage seconds, timed frame count,
    stacked residuals)."""
    pipe = Pipeline(
        params,
        frames.shape[2],
        frames.shape[1],
        strategy=spec.pipeline_strategy(),
        spectrum_backend=spec.backend,
        bank=bank,
    )
    totals = {stage: 0.0 for stage in STAGES}
    timed = 0
    residuals = []
    with pipe:
        for t in range(frames.shape[0]):
            out = pipe.process_frame(frames[t])
            if out is not None:
                residuals.append(out.residual)
            if t >= warmup:
                timed += 1
                for stage in STAGES:
                    totals[stage] += pipe.last_timings.get(stage, 0.0)
    return totals, timed, np.stack(residuals)


def run_bench(config: BenchConfig, params: FilterParams | None = None) -> BenchReport:
    """Run the requested (stage, strategy) matrix on identical synthetic
    input and report median/min/max frame rates plus speedups."""
    if params is None:
        params = default_params()
    validate(params)
    config.validate(params)

    notes: list[str] = []
    available: list[StrategySpec] = []
    for spec in config.strategies:
        if (
            spec.mode == "parallel"
            and config.max_workers is not None
            and spec.workers > config.max_workers
        ):
            notes.append(
                f"strategy {spec.name}:{spec.workers} unavailable: worker count "
                f"exceeds configured maximum {config.max_workers}"
            )
            continue
        available.append(spec)

    sim = SimConfig(
        width=config.width,
        height=config.height,
        frame_count=config.frames,
        rng_seed=config.seed,
    )
    frames, _ = generate(sim)
    bank = build_bank(params)

    # Equivalence gate (also JIT-warms every kernel before timing).
    check_frames = frames[: params.mz + 3]
    bundles: dict[str, dict] = {}
    for spec in available:
        key = f"{spec.name}:{spec.workers}" if spec.mode == "parallel" else spec.name
        stream_cls = (
            NaiveSpectrumStream if spec.backend == "naive" else SpectrumStream
        )
        stream = stream_cls(params, config.width, config.height)
        fld = None
        for t in range(check_frames.shape[0]):
            fld = stream.push(check_frames[t])
        stream.close()
        ys, xs = fld.valid_slices
        _, _, residuals = _run_pipeline_once(
            params, check_frames, spec, bank, warmup=params.mz, stages=config.stages
        )
        bundles[key] = {
            "backend": spec.backend,
            "mode": spec.mode,
            "spectrum": fld.bins[ys, xs].copy(),
            "residuals": residuals,
        }
    mismatches = verify_equivalence(bundles)
    if mismatches:
        raise EquivalenceError("; ".join(mismatches))

    # Timing runs.
    rows: list[BenchRow] = []
    rates: dict[tuple[str, str], dict] = {}
    for spec in available:
        per_stage_rates: dict[str, list[float]] = {s: [] for s in STAGES}
        for _ in range(config.repetitions):
            totals, timed, _ = _run_pipeline_once(
                params, frames, spec, bank, config.warmup_frames, config.stages
            )
            for stage in STAGES:
                if totals[stage] > 0:
                    per_stage_rates[stage].append(timed / totals[stage])
        rates[(spec.name, spec.workers)] = per_stage_rates

    for stage in config.stages:
        stage_rows: list[tuple[StrategySpec, dict]] = []
        for spec in available:
            samples = rates[(spec.name, spec.workers)][stage]
            if not samples:
                continue
            stage_rows.append(
                (
                    spec,
                    {
                        "median": statistics.median(samples),
                        "min": min(samples),
                        "max": max(samples),
                    },
                )
            )
        if not stage_rows:
            continue
        baseline = None
        for spec, stats in stage_rows:
            if spec.name == "naive-serial":
                baseline = stats["median"]
                break
        if baseline is None:
            for spec, stats in stage_rows:
                if spec.name == "recursive-serial":
                    baseline = stats["median"]
                    break
        if baseline is None:
            baseline = stage_rows[0][1]["median"]
        for spec, stats in stage_rows:
            rows.append(
                BenchRow(
                    stage=stage,
                    strategy=spec.name,
                    workers=spec.workers,
                    fps_median=stats["median"],
                    fps_min=stats["min"],
                    fps_max=stats["max"],
                    speedup=stats["median"] / baseline,
                )
            )
    return BenchReport(rows=rows, core_count=os.cpu_count() or 1, notes=notes)
