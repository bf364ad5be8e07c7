"""Background optical flow from the local spectrum.

Stage order is fixed: spatial-DC suppression, Hann conditioning, power
spectrum, fractional-lag autocorrelation at one frame of temporal lag,
recursive exponential smoothing, envelope-compensated argmax velocity pick
(see :func:`pick_gains` for why plain argmax is biased).  Every stage is a
pure function of its inputs (smoothing also takes the previous state).

All stages accept either a full field shaped (H, W, Mz, My, Mx) or a single
pixel's bin block shaped (Mz, My, Mx).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .parallel import BlockExecutor
from .params import FilterParams

__all__ = [
    "VelocityField",
    "suppress_spatial_dc",
    "hann_condition",
    "power_spectrum",
    "autocorr",
    "smooth",
    "pick_velocity",
]


def _as_field(bins, dtype) -> tuple[np.ndarray, bool]:
    bins = np.ascontiguousarray(bins, dtype=dtype)
    if bins.ndim == 3:
        return bins.reshape((1, 1) + bins.shape), True
    if bins.ndim != 5:
        raise ValueError(f"expected (H, W, Mz, My, Mx) or (Mz, My, Mx), got {bins.shape}")
    return bins, False


def _run(executor, fn, n):
    if executor is None:
        fn(0, n)
    else:
        executor.map_blocks(fn, n)


def suppress_spatial_dc(bins, executor: BlockExecutor | None = None) -> np.ndarray:
    """Zero the bins with kx = ky = 0 (all temporal bins); near-DC spatial
    content carries no usable flow information."""
    field, squeeze = _as_field(bins, np.complex128)
    out = field.copy()
    ky_c = (field.shape[3] - 1) // 2
    kx_c = (field.shape[4] - 1) // 2
    _run(executor, lambda lo, hi: _kernels.zero_spatial_dc(out, ky_c, kx_c, lo, hi),
         field.shape[0])
    return out.reshape(bins.shape) if squeeze else out


def hann_condition(bins, executor: BlockExecutor | None = None) -> np.ndarray:
    """Circular (-1/4, 1/2, -1/4) convolution along each bin axis.

    Equivalent to tapering the window samples with
    ``0.5 - 0.5*cos(2*pi*m/M)`` per dimension before transforming; applied
    in all three dimensions.
    """
    field, squeeze = _as_field(bins, np.complex128)
    out = np.empty_like(field)
    _run(executor, lambda lo, hi: _kernels.hann3(field, out, lo, hi), field.shape[0])
    return out.reshape(bins.shape) if squeeze else out


def power_spectrum(bins, executor: BlockExecutor | None = None) -> np.ndarray:
    """Squared magnitude per bin, as float64."""
    field, squeeze = _as_field(bins, np.complex128)
    h, w = field.shape[:2]
    flat = field.reshape(h, w, -1)
    out = np.empty(flat.shape, dtype=np.float64)
    _run(executor, lambda lo, hi: _kernels.power(flat, out, lo, hi), h)
    out = out.reshape(field.shape)
    return out.reshape(bins.shape) if squeeze else out


@lru_cache(maxsize=8)
def _autocorr_tables(params: FilterParams):
    kz = np.arange(params.mz) - params.kz
    az = np.exp(-2j * np.pi * kz / params.mz)
    kx = np.arange(params.mx) - params.kx
    ky = np.arange(params.my) - params.ky
    lag_x = np.asarray(params.lag_grid_x, dtype=np.float64)
    lag_y = np.asarray(params.lag_grid_y, dtype=np.float64)
    axl = np.exp(-2j * np.pi * np.outer(lag_x, kx) / params.mx)
    ayl = np.exp(-2j * np.pi * np.outer(lag_y, ky) / params.my)
    return az, axl, ayl


def autocorr(power_bins, params: FilterParams,
             executor: BlockExecutor | None = None) -> np.ndarray:
    """Real 3-D autocorrelation samples over the fractional lag grid.

    ``R[ly, lx] = Re sum_k exp(-j2*pi*(kx*lx/Mx + ky*ly/My + kz/Mz)) * P(k)``
    with the temporal lag fixed at one frame.  The exponential evaluation
    interpolates fractional lags directly (no zero padding).  Returns
    (H, W, Ly, Lx) for field input or (Ly, Lx) for one pixel.
    """
    field, squeeze = _as_field(power_bins, np.float64)
    az, axl, ayl = _autocorr_tables(params)
    h, w = field.shape[:2]
    out = np.empty((h, w, len(ayl), len(axl)), dtype=np.float64)
    _run(executor, lambda lo, hi: _kernels.autocorr(field, az, axl, ayl, out, lo, hi), h)
    return out[0, 0] if squeeze else out


def smooth(r, r_hat_prev, alpha: float,
           executor: BlockExecutor | None = None) -> np.ndarray:
    """Exponential smoothing ``(1 - alpha)*R + alpha*R_hat_prev``;
    with no previous state the result is R itself."""
    r = np.asarray(r, dtype=np.float64)
    if r_hat_prev is None:
        return r.copy()
    if np.shape(r_hat_prev) != r.shape:
        raise ValueError("smoothed-state layout does not match R")
    out = np.ascontiguousarray(r_hat_prev, dtype=np.float64).copy()
    squeeze = r.ndim == 2
    rr = r.reshape((1, 1) + r.shape) if squeeze else r
    oo = out.reshape((1, 1) + out.shape) if squeeze else out
    _run(executor, lambda lo, hi: _kernels.smooth(rr, oo, alpha, lo, hi), rr.shape[0])
    return out


@dataclass
class VelocityField:
    """Per-pixel picked velocity.

    ``indices[y, x] = (ix, iy)`` into the lag grids and
    ``velocities[y, x] = (vx, vy)`` in pixels/frame (velocity equals lag
    because the temporal lag is one frame).
    """

    indices: np.ndarray
    velocities: np.ndarray


@lru_cache(maxsize=8)
def pick_gains(params: FilterParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-lag compensation for the conditioning taper's own lag envelope.

    Tapering the window samples multiplies the underlying autocorrelation
    by the taper's circular autocorrelation ``A(l) = 1/4 + cos(2*pi*l/M)/8``
    per spatial dimension, which decays away from zero lag and biases a
    plain argmax toward small velocities (about 0.4 px/frame at 1.6 px
    lag for the default window).  The pick therefore maximizes
    ``R_hat(l) * A(0)/A(lx) * A(0)/A(ly)``; the temporal factor is constant
    at a fixed one-frame lag and drops out.
    """
    lag_x = np.asarray(params.lag_grid_x, dtype=np.float64)
    lag_y = np.asarray(params.lag_grid_y, dtype=np.float64)
    ax = 0.25 + 0.125 * np.cos(2.0 * np.pi * lag_x / params.mx)
    ay = 0.25 + 0.125 * np.cos(2.0 * np.pi * lag_y / params.my)
    return 0.375 / ax, 0.375 / ay


def pick_velocity(r_hat, params: FilterParams,
                  executor: BlockExecutor | None = None) -> VelocityField:
    """Velocity pick: argmax of the envelope-compensated smoothed
    autocorrelation over the lag grid (see :func:`pick_gains`).

    Score ties break toward the smallest velocity norm, then lexicographic
    (ix, iy), so an all-zero surface yields (0, 0) when on the grid.
    """
    r_hat = np.asarray(r_hat, dtype=np.float64)
    squeeze = r_hat.ndim == 2
    field = r_hat.reshape((1, 1) + r_hat.shape) if squeeze else r_hat
    field = np.ascontiguousarray(field)
    lag_x = np.asarray(params.lag_grid_x, dtype=np.float64)
    lag_y = np.asarray(params.lag_grid_y, dtype=np.float64)
    if field.shape[2:] != (len(lag_y), len(lag_x)):
        raise ValueError("autocorrelation layout does not match the lag grid")
    gx, gy = pick_gains(params)
    h, w = field.shape[:2]
    idx = np.empty((h, w, 2), dtype=np.int32)
    vel = np.empty((h, w, 2), dtype=np.float64)
    _run(executor,
         lambda lo, hi: _kernels.pick(field, lag_x, lag_y, gx, gy, idx, vel, lo, hi),
         h)
    if squeeze:
        return VelocityField(idx[0, 0], vel[0, 0])
    return VelocityField(idx, vel)
