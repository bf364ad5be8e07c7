"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured figure next to its frozen tolerance.

Criterion 8's parallel-speedup clause needs real cores; on hosts with
fewer than 4 CPUs it is expected to fail and is marked accordingly.
"""

import os
import time

import numpy as np
import pytest

from clutterwhiten import (
    Pipeline,
    SimConfig,
    SpectrumStream,
    generate,
    kernel_to_freq,
    naive_spectrum_field,
    sample_kernel,
    sampled_freq_kernel,
    smooth,
)
from clutterwhiten.bench import BenchConfig, StrategySpec, rel_deviation, run_bench
from clutterwhiten.design import retained_bin_indices
from clutterwhiten.pipeline import valid_bounds
from clutterwhiten.spectrum import _full_basis_matrix

CORES = os.cpu_count() or 1

# Frozen by pilot runs of the finished pipeline: the residual of the
# occluding (dark) target peaks on its truncation rim, about 2.1 px from
# the center, so the localization radius covers the full target footprint
# (truncation radius 2.146 px plus sub-pixel rounding).
HIT_RADIUS_PX = 3.0
# Background RMS excludes a disk of this Chebyshev radius around the target
# (truncation disk plus the analysis-window reach).
BG_EXCLUSION_PX = 8


def report(criterion, ok, detail):
    print(f"[ACCEPTANCE {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def test_acceptance_1_spectrum_oracle_equivalence(params):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    frames = rng.random((30, 64, 64)).astype(np.float32)
    stream = SpectrumStream(params, 64, 64)
    worst = 0.0
    for t in range(30):
        rec = stream.push(frames[t])
        if not rec.ready:
            continue
        ref = naive_spectrum_field(frames[: t + 1], params)
        ys, xs = rec.valid_slices
        worst = max(worst, rel_deviation(rec.bins[ys, xs], ref.bins[ys, xs]))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    report(1, ok, f"recursive vs naive spectra, 30 frames 64x64: worst per-bin "
                  f"rel dev {worst:.3e} (tol 1e-4), {elapsed:.1f}s (limit 60s)")
    assert worst < 1e-4
    assert elapsed < 60


def test_acceptance_2_design_cross_path_identity(params):
    t0 = time.perf_counter()
    worst_coeff = 0.0
    worst_sum = 0.0
    for vy in params.lag_grid_y:
        for vx in params.lag_grid_x:
            kern = sample_kernel(params, (vx, vy))
            worst_sum = max(worst_sum, abs(kern.taps.sum() - 1.0))
            a = kernel_to_freq(kern, params).coeffs
            b = sampled_freq_kernel(params, (vx, vy)).coeffs
            worst_coeff = max(worst_coeff, float(np.abs(a - b).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_coeff < 1e-5 and worst_sum < 1e-5 and elapsed < 10
    report(2, ok, f"289 velocities: sampled-response vs transformed-kernel "
                  f"coeff dev {worst_coeff:.3e} (tol 1e-5), tap-sum dev "
                  f"{worst_sum:.3e} (tol 1e-5), {elapsed:.1f}s (limit 10s)")
    assert worst_coeff < 1e-5
    assert worst_sum < 1e-5
    assert elapsed < 10


def test_acceptance_3_filtering_path_equivalence(params, default_bank):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    n_windows, n_velocities = 1000, 20
    windows = rng.random((n_windows, 405))
    basis = _full_basis_matrix(params)
    spectra = windows @ basis.T  # (windows, bins)
    retained = retained_bin_indices(params)
    max_abs = np.abs(windows).max(axis=1)
    worst = 0.0
    for _ in range(n_velocities):
        ix = int(rng.integers(0, len(params.lag_grid_x)))
        iy = int(rng.integers(0, len(params.lag_grid_y)))
        coeffs = default_bank.coeffs_flat[iy, ix].astype(np.complex128)
        pred_freq = (spectra[:, retained] @ coeffs).real
        taps = sample_kernel(
            params, (params.lag_grid_x[ix], params.lag_grid_y[iy])
        ).taps.ravel()
        pred_direct = windows @ taps
        worst = max(worst, float(np.max(np.abs(pred_freq - pred_direct) / max_abs)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    report(3, ok, f"{n_windows} windows x {n_velocities} velocities: "
                  f"bin-domain vs direct-convolution prediction dev "
                  f"{worst:.3e} x max|I| (tol 1e-4), {elapsed:.1f}s (limit 60s)")
    assert worst < 1e-4
    assert elapsed < 60


def test_acceptance_4_dc_rejection(params, default_bank):
    frames = np.full((12, 64, 64), 10.0, dtype=np.float32)
    worst = 0.0
    with Pipeline(params, 64, 64, bank=default_bank) as pipe:
        for t in range(12):
            out = pipe.process_frame(frames[t])
            if out is not None:
                worst = max(worst, float(np.abs(out.residual[out.mask]).max()))
    ok = worst < 1e-3
    report(4, ok, f"constant 10.0 input: worst valid residual {worst:.3e} (tol 1e-3)")
    assert worst < 1e-3


def test_acceptance_5_model_null(params, default_bank):
    vx, vy = 1.0, 0.5
    fx, fy = 1 / 9, 2 / 9
    amp = 1.0
    xs = np.arange(64)[None, :]
    ys = np.arange(64)[:, None]
    rms_parts = []
    with Pipeline(params, 64, 64, bank=default_bank,
                  forced_velocity=(vx, vy)) as pipe:
        for t in range(12):
            frame = amp * np.cos(2 * np.pi * (fx * (xs - vx * t) + fy * (ys - vy * t)))
            out = pipe.process_frame(frame.astype(np.float32))
            if out is not None:
                rms_parts.append(out.residual[out.mask].astype(np.float64))
    rms = float(np.sqrt(np.mean(np.concatenate(rms_parts) ** 2)))
    ok = rms < 0.01 * amp
    report(5, ok, f"in-band cosine at grid velocity, velocity forced: residual "
                  f"RMS {rms:.3e} (tol 1% of amplitude)")
    assert rms < 0.01 * amp


def _velocity_errors(out, truth_v, params):
    vel = out.velocity.velocities
    err = np.maximum(
        np.abs(vel[..., 0] - truth_v[0]), np.abs(vel[..., 1] - truth_v[1])
    )
    anchors = np.zeros(err.shape, dtype=bool)
    anchors[params.my - 1 :, params.mx - 1 :] = True
    return err[anchors]


def test_acceptance_6_velocity_recovery(params, default_bank):
    t0 = time.perf_counter()
    truth_v = (1.625, 0.625)

    cfg = SimConfig(frame_count=20, noise_sigma=0.0, rng_seed=7)
    frames, _ = generate(cfg)
    with Pipeline(params, 64, 64, bank=default_bank) as pipe:
        for t in range(20):
            out = pipe.process_frame(frames[t])
    median_err = float(np.median(_velocity_errors(out, truth_v, params)))

    cfg_noisy = SimConfig(frame_count=20, rng_seed=7)
    frames_noisy, _ = generate(cfg_noisy)
    with Pipeline(params, 64, 64, bank=default_bank) as pipe:
        for t in range(20):
            out_noisy = pipe.process_frame(frames_noisy[t])
    frac = float(np.mean(_velocity_errors(out_noisy, truth_v, params) <= 0.25))

    elapsed = time.perf_counter() - t0
    ok = median_err <= 0.25 and frac >= 0.80 and elapsed < 60
    report(6, ok, f"clutter velocity {truth_v}: noise-free median Chebyshev "
                  f"error {median_err:.3f} (tol 0.25); noisy within-0.25 "
                  f"fraction {frac:.3f} (floor 0.80), {elapsed:.1f}s (limit 60s)")
    assert median_err <= 0.25
    assert frac >= 0.80
    assert elapsed < 60


def test_acceptance_7_target_enhancement(params, default_bank):
    t0 = time.perf_counter()
    cfg = SimConfig()  # full reference config: 100 frames, noisy, target
    frames, truth = generate(cfg)
    ox_lo, ox_hi, oy_lo, oy_hi = valid_bounds(params, cfg.width, cfg.height)
    ys_g = np.arange(cfg.height)[:, None]
    xs_g = np.arange(cfg.width)[None, :]
    qualifying = 0
    good = 0
    ratios = []
    with Pipeline(params, cfg.width, cfg.height, bank=default_bank) as pipe:
        for t in range(cfg.frame_count):
            out = pipe.process_frame(frames[t])
            if out is None:
                continue
            cx, cy = truth.target_centers[out.frame_index]
            if not (ox_lo <= cx <= ox_hi and oy_lo <= cy <= oy_hi):
                continue
            qualifying += 1
            absres = np.abs(out.residual)
            masked = np.where(out.mask, absres, -1.0)
            py, px = np.unravel_index(int(np.argmax(masked)), absres.shape)
            cheb = np.maximum(np.abs(xs_g - cx), np.abs(ys_g - cy))
            bg = out.residual[out.mask & (cheb > BG_EXCLUSION_PX)].astype(np.float64)
            ratio = float(absres[py, px] / np.sqrt(np.mean(bg**2)))
            ratios.append(ratio)
            if max(abs(px - cx), abs(py - cy)) <= HIT_RADIUS_PX and ratio >= 5.0:
                good += 1
    elapsed = time.perf_counter() - t0
    frac = good / qualifying if qualifying else 0.0
    ok = qualifying > 0 and frac >= 0.90 and elapsed < 120
    report(7, ok, f"target visible in {qualifying} frames: localized within "
                  f"{HIT_RADIUS_PX:.0f}px with peak>=5x background RMS in "
                  f"{frac:.3f} of them (floor 0.90; min peak ratio "
                  f"{min(ratios):.1f}x), {elapsed:.1f}s (limit 120s)")
    assert qualifying > 0
    assert frac >= 0.90
    assert elapsed < 120


@pytest.fixture(scope="module")
def bench_report(params):
    config = BenchConfig(
        width=64,
        height=64,
        frames=16,
        repetitions=3,
        warmup_frames=6,
        strategies=(
            StrategySpec("naive", "serial"),
            StrategySpec("recursive", "serial"),
            StrategySpec("recursive", "parallel", workers=4),
        ),
        seed=1234,
    )
    t0 = time.perf_counter()
    rep = run_bench(config, params)
    rep.elapsed = time.perf_counter() - t0
    return rep


def _median_fps(report, stage, strategy):
    for row in report.rows:
        if row.stage == stage and row.strategy == strategy:
            return row.fps_median
    raise AssertionError(f"missing bench row {stage}/{strategy}")


def test_acceptance_8a_recursive_vs_naive_spectrum(bench_report):
    ratio = _median_fps(bench_report, "spectrum", "recursive-serial") / _median_fps(
        bench_report, "spectrum", "naive-serial"
    )
    ok = ratio >= 5.0 and bench_report.elapsed < 300
    report("8a", ok, f"spectrum stage: recursive-serial {ratio:.1f}x naive-serial "
                     f"(floor 5x), bench wall time {bench_report.elapsed:.0f}s "
                     f"(limit 300s)")
    assert ratio >= 5.0
    assert bench_report.elapsed < 300


@pytest.mark.xfail(
    CORES < 4,
    reason=f"parallel speedup requires >= 4 CPU cores; this host has {CORES}",
    strict=False,
)
def test_acceptance_8b_parallel_pipeline_speedup(bench_report):
    ratio = _median_fps(bench_report, "pipeline", "recursive-parallel") / _median_fps(
        bench_report, "pipeline", "recursive-serial"
    )
    ok = ratio >= 2.0
    report("8b", ok, f"pipeline: recursive-parallel(4) {ratio:.2f}x "
                     f"recursive-serial (floor 2x) on {CORES} core(s)")
    assert ratio >= 2.0


def test_acceptance_8c_serial_parallel_bit_identity(params, default_bank):
    # run_bench's equivalence gate already aborts on mismatch; verify the
    # bit-identity contract directly as well.
    cfg = SimConfig(frame_count=12, rng_seed=1234)
    frames, _ = generate(cfg)

    def run(strategy):
        outs = []
        with Pipeline(params, 64, 64, bank=default_bank, strategy=strategy) as pipe:
            for t in range(12):
                out = pipe.process_frame(frames[t])
                if out is not None:
                    outs.append(out)
        return outs

    serial = run("serial")
    parallel = run("parallel:4")
    identical = all(
        np.array_equal(a.residual, b.residual)
        and np.array_equal(a.prediction, b.prediction)
        and np.array_equal(a.velocity.velocities, b.velocity.velocities)
        for a, b in zip(serial, parallel)
    )
    report("8c", identical, "serial vs parallel(4) outputs bit-identical over "
                            "12 frames")
    assert identical


def test_acceptance_9_smoothing_analytics(params):
    rng = np.random.default_rng(99)
    r = rng.random((17, 17))
    rhat0 = rng.random((17, 17))
    gap0 = rhat0 - r
    rhat = rhat0.copy()
    worst = 0.0
    frac10 = None
    for t in range(1, 21):
        rhat = smooth(r, rhat, params.alpha)
        worst = max(
            worst, float(np.abs((rhat - r) - params.alpha**t * gap0).max())
        )
        if t == 10:
            frac10 = float(np.median(np.abs(rhat - r) / np.abs(gap0)))
    efold_err = abs(frac10 - np.exp(-1.0))
    ok = worst < 1e-6 and efold_err < 1e-9
    report(9, ok, f"smoothing: decay matches alpha^t within {worst:.2e} "
                  f"(tol 1e-6 per element over 20 frames); residual fraction "
                  f"at t=10 within {efold_err:.2e} of e^-1")
    assert worst < 1e-6
    assert efold_err < 1e-9
