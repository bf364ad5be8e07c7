"""Whitening pipeline: spectrum, flow estimation, velocity-selected
prediction and residual, with a two-frame output latency for the default
group delay.

Per pushed frame the pipeline updates the recursive spectrum, conditions it
for flow (DC suppression, Hann, power), refreshes the smoothed
autocorrelation and per-pixel velocity, then applies the picked velocity's
frequency-domain predictor to the *raw* spectrum.  The prediction at output
pixel ``n - mhat`` is the real part of the retained-bin inner product; the
residual subtracts it from the input frame ``mhat_z`` steps back.

Outputs appear once the temporal window is full (frame ``Mz - 1``) and are
aligned to input index ``current - mhat_z``.  Pixels without a full analysis
window are masked invalid and carry zero residual/prediction.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .design import FilterBank, FreqKernel, build_bank
from .flow import VelocityField, _autocorr_tables, pick_gains
from .parallel import BlockExecutor, ExecStrategy
from .params import FilterParams, ParamError, validate
from .spectrum import NaiveSpectrumStream, SpectrumStream

__all__ = [
    "WhitenedOutput",
    "Pipeline",
    "apply_pef",
    "valid_bounds",
    "valid_mask",
]


def valid_bounds(params: FilterParams, width: int, height: int):
    """Inclusive output-pixel bounds (ox_lo, ox_hi, oy_lo, oy_hi) where a
    full analysis window and the group-delay shift are available."""
    mhx, mhy, _ = params.mhat
    return (
        params.mx - 1 - mhx,
        width - 1 - mhx,
        params.my - 1 - mhy,
        height - 1 - mhy,
    )


def valid_mask(params: FilterParams, width: int, height: int) -> np.ndarray:
    """Boolean (H, W) mask of valid output pixels."""
    ox_lo, ox_hi, oy_lo, oy_hi = valid_bounds(params, width, height)
    mask = np.zeros((height, width), dtype=bool)
    mask[oy_lo : oy_hi + 1, ox_lo : ox_hi + 1] = True
    return mask


def apply_pef(bins, kernel: FreqKernel | np.ndarray, delayed_intensity: float):
    """Apply one prediction kernel to one pixel's bins.

    ``bins`` is the pixel's raw (Mz, My, Mx) spectrum block; the kernel
    coefficients cover the retained band.  Returns (prediction, residual)
    with the prediction being the real part of the inner product, exactly
    mirroring the streaming filter arithmetic.
    """
    coeffs = kernel.coeffs if isinstance(kernel, FreqKernel) else np.asarray(kernel)
    bins = np.asarray(bins, dtype=np.complex128)
    mz, wy, wx = coeffs.shape
    if bins.ndim != 3 or bins.shape[0] != mz:
        raise ValueError(f"bins shape {bins.shape} incompatible with kernel {coeffs.shape}")
    ky_c = (bins.shape[1] - 1) // 2
    kx_c = (bins.shape[2] - 1) // 2
    by = (wy - 1) // 2
    bx = (wx - 1) // 2
    band = bins[:, ky_c - by : ky_c + by + 1, kx_c - bx : kx_c + bx + 1]
    acc = np.sum(coeffs.astype(np.complex128) * band)
    prediction = float(acc.real)
    return prediction, float(delayed_intensity) - prediction


@dataclass
class WhitenedOutput:
    """One whitened frame, aligned to input index ``frame_index``.

    ``residual = delayed input - prediction`` at valid pixels, zero
    elsewhere.  ``velocity`` holds the per-anchor-pixel applied velocity
    field; ``imag_peak`` is the largest imaginary residue of the prediction
    inner product (diagnostic; near zero for real inputs).
    """

    frame_index: int
    residual: np.ndarray
    prediction: np.ndarray
    velocity: VelocityField
    mask: np.ndarray
    imag_peak: float


class Pipeline:
    """Streaming whitening filter for a fixed frame geometry.

    Parameters
    ----------
    params : FilterParams
    width, height : image size in pixels (must fit the analysis window)
    strategy : ExecStrategy or str
        "serial", "parallel" or "parallel:N"; outputs are bit-identical
        across strategies and worker counts.
    spectrum_backend : "recursive" (production) or "naive" (reference).
    forced_velocity : optional (vx, vy) grid velocity overriding the flow
        estimate for every pixel (testing/diagnostics).
    bank : optional prebuilt FilterBank matching ``params``.
    """

    def __init__(
        self,
        params: FilterParams,
        width: int,
        height: int,
        strategy: ExecStrategy | str = "serial",
        spectrum_backend: str = "recursive",
        forced_velocity=None,
        bank: FilterBank | None = None,
    ):
        validate(params)
        if isinstance(strategy, str):
            strategy = ExecStrategy.parse(strategy)
        self.params = params
        self.width = width
        self.height = height
        self._executor = BlockExecutor(strategy)
        if spectrum_backend == "recursive":
            self._stream = SpectrumStream(
                params, width, height, executor=self._executor
            )
        elif spectrum_backend == "naive":
            self._stream = NaiveSpectrumStream(params, width, height)
        else:
            raise ValueError(f"unknown spectrum backend {spectrum_backend!r}")
        self.spectrum_backend = spectrum_backend
        if bank is None:
            bank = build_bank(params)
        elif bank.params != params:
            raise ParamError("filter bank was built for different parameters")
        self.bank = bank

        p = params
        shape = (height, width, p.mz, p.my, p.mx)
        self._sbins = np.zeros(shape, dtype=np.complex128)
        self._cond = np.zeros(shape, dtype=np.complex128)
        self._pw = np.zeros((height, width, p.bin_count), dtype=np.float64)
        ly, lx = len(p.lag_grid_y), len(p.lag_grid_x)
        self._r = np.zeros((height, width, ly, lx), dtype=np.float64)
        self._rhat = np.zeros_like(self._r)
        self._have_rhat = False
        self._idx = np.zeros((height, width, 2), dtype=np.int32)
        self._vel = np.zeros((height, width, 2), dtype=np.float64)
        self._pred = np.zeros((height, width), dtype=np.float32)
        self._res = np.zeros((height, width), dtype=np.float32)
        self._imag = np.zeros((height, width), dtype=np.float32)
        self._az, self._axl, self._ayl = _autocorr_tables(params)
        self._gx, self._gy = pick_gains(params)
        self._lag_x = np.asarray(p.lag_grid_x, dtype=np.float64)
        self._lag_y = np.asarray(p.lag_grid_y, dtype=np.float64)
        self._delay: deque[np.ndarray] = deque(maxlen=p.mhat[2] + 1)
        self.mask = valid_mask(params, width, height)
        self.mask.setflags(write=False)
        self._bounds = valid_bounds(params, width, height)
        self.last_timings: dict[str, float] = {}

        self._forced = None
        if forced_velocity is not None:
            ix, iy = self.bank.index_of(forced_velocity)
            self._forced = (ix, iy, float(forced_velocity[0]), float(forced_velocity[1]))

    @property
    def strategy(self) -> ExecStrategy:
        return self._executor.strategy

    @property
    def latency(self) -> int:
        return self.params.mhat[2]

    @property
    def frames_seen(self) -> int:
        return self._stream.frames_seen

    def set_strategy(self, strategy: ExecStrategy | str) -> None:
        """Switch serial/parallel execution; outputs are unaffected."""
        if isinstance(strategy, str):
            strategy = ExecStrategy.parse(strategy)
        old = self._executor
        self._executor = BlockExecutor(strategy)
        if isinstance(self._stream, SpectrumStream):
            self._stream._executor = self._executor
        old.close()

    def process_frame(self, frame) -> WhitenedOutput | None:
        """Consume one frame; returns the whitened output aligned to
        ``input index - mhat_z`` once warm-up is complete, else None."""
        frame = np.ascontiguousarray(frame, dtype=np.float32)
        if frame.shape != (self.height, self.width):
            raise ValueError(
                f"frame shape {frame.shape} != {(self.height, self.width)}"
            )
        self._delay.append(frame)
        timings: dict[str, float] = {}
        t_frame = time.perf_counter()

        field = self._stream.push(frame, out=self._sbins)
        timings["spectrum"] = time.perf_counter() - t_frame
        if not field.ready:
            timings["pipeline"] = time.perf_counter() - t_frame
            self.last_timings = timings
            return None

        ex = self._executor
        h = self.height
        p = self.params

        t0 = time.perf_counter()
        sbins, cond, pw = self._sbins, self._cond, self._pw
        ky_c, kx_c = p.ky, p.kx
        cond_flat = cond.reshape(h, self.width, -1)
        ex.map_blocks(
            lambda lo, hi: _kernels.copy_field(sbins, cond, lo, hi), h
        )
        ex.map_blocks(
            lambda lo, hi: _kernels.zero_spatial_dc(cond, ky_c, kx_c, lo, hi), h
        )
        ex.map_blocks(lambda lo, hi: _kernels.hann3(cond, cond, lo, hi), h)
        ex.map_blocks(lambda lo, hi: _kernels.power(cond_flat, pw, lo, hi), h)
        timings["conditioning"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        pw5 = pw.reshape(cond.shape[:2] + (p.mz, p.my, p.mx))
        r, rhat = self._r, self._rhat
        az, axl, ayl = self._az, self._axl, self._ayl
        ex.map_blocks(
            lambda lo, hi: _kernels.autocorr(pw5, az, axl, ayl, r, lo, hi), h
        )
        if not self._have_rhat:
            np.copyto(rhat, r)
            self._have_rhat = True
        else:
            alpha = p.alpha
            ex.map_blocks(
                lambda lo, hi: _kernels.smooth(r, rhat, alpha, lo, hi), h
            )
        idx, vel = self._idx, self._vel
        lag_x, lag_y = self._lag_x, self._lag_y
        gx, gy = self._gx, self._gy
        ex.map_blocks(
            lambda lo, hi: _kernels.pick(rhat, lag_x, lag_y, gx, gy, idx, vel, lo, hi),
            h,
        )
        if self._forced is not None:
            fix, fiy, fvx, fvy = self._forced
            idx[..., 0] = fix
            idx[..., 1] = fiy
            vel[..., 0] = fvx
            vel[..., 1] = fvy
        timings["autocorr"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        delayed = self._delay[0]
        s_flat = sbins.reshape(h, self.width, -1)
        bank_flat = self.bank.coeffs_flat
        retained = self.bank.retained
        pred, res, imag = self._pred, self._res, self._imag
        mhx, mhy, mhz = p.mhat
        ox_lo, ox_hi, oy_lo, oy_hi = self._bounds
        ex.map_blocks(
            lambda lo, hi: _kernels.pef(
                s_flat, bank_flat, retained, idx, delayed, pred, res, imag,
                mhx, mhy, ox_lo, ox_hi, oy_lo, oy_hi, lo, hi,
            ),
            h,
        )
        timings["filtering"] = time.perf_counter() - t0
        timings["pipeline"] = time.perf_counter() - t_frame
        self.last_timings = timings

        return WhitenedOutput(
            frame_index=field.frame_index - mhz,
            residual=res.copy(),
            prediction=pred.copy(),
            velocity=VelocityField(idx.copy(), vel.copy()),
            mask=self.mask,
            imag_peak=float(imag.max()),
        )

    def close(self) -> None:
        self._stream.close()
        self._executor.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
