"""Velocity-tuned background-prediction filter design.

The predictor for velocity ``v = (vx, vy)`` is a separable frequency-sampling
FIR over the analysis window: each 2-D slice at temporal offset ``mz`` is a
pair of Dirichlet interpolation kernels re-centered along the motion
trajectory through the group-delay point ``mhat``:

``H(m) = (Wx*Wy)/(Mx*My*Mz)
         * dirichlet((mx - mhat_x - vx*(mz - mhat_z)) / Mx, Wx)
         * dirichlet((my - mhat_y - vy*(mz - mhat_z)) / My, Wy)``

Its tap sum is exactly 1 for any real velocity (unit DC gain), so the
prediction-error filter ``I - H*I`` annihilates constants.

Frequency-domain coefficients are the unitary DFT of the taps restricted to
the retained bin set ``|kx| <= Bx, |ky| <= By`` (all temporal bins); the taps
are spatially band-limited so the restriction is exact.  The same
coefficients arise from sampling the analytic frequency response
:func:`freq_response` at the bin frequencies; tests pin the two paths
against each other, which fixes every sign and normalization convention.

Design math runs in double precision; the precomputed bank stores single-
precision complex coefficients for the per-pixel filtering hot path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .params import FilterParams, ParamError, validate

__all__ = [
    "dirichlet",
    "SampleKernel",
    "FreqKernel",
    "FilterBank",
    "sample_kernel",
    "kernel_to_freq",
    "freq_response",
    "sampled_freq_kernel",
    "build_bank",
    "retained_bin_indices",
]

# Dirichlet denominator zeros are resolved analytically below this threshold;
# well under the node spacing for any window length in sane use (M <= 63).
_DIRICHLET_EPS = 1e-9


def dirichlet(w, order: int):
    """Periodic sinc ``sin(pi*W*w) / (W*sin(pi*w))`` of odd order ``W``.

    At integer ``w`` both sine factors vanish; for odd order the limit is
    exactly 1, which is returned there.  Accepts scalars or arrays.
    """
    if order < 1 or order % 2 == 0:
        raise ValueError(f"order must be odd and >= 1, got {order}")
    w = np.asarray(w, dtype=np.float64)
    den = order * np.sin(np.pi * w)
    num = np.sin(np.pi * order * w)
    near_pole = np.abs(np.sin(np.pi * w)) < _DIRICHLET_EPS
    safe = np.where(near_pole, 1.0, den)
    out = np.where(near_pole, 1.0, num / safe)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SampleKernel:
    """Real prediction-filter taps over the analysis window.

    ``taps[mz, my, mx]`` weights the window sample at backward offset m;
    the tap sum is 1 within rounding for any velocity.
    """

    velocity: tuple[float, float]
    taps: np.ndarray


@dataclass(frozen=True)
class FreqKernel:
    """Complex prediction coefficients over the retained bin set.

    ``coeffs[ikz, iky, ikx]`` with ``ikz = kz + Kz`` over all temporal bins
    and ``iky = ky + By``, ``ikx = kx + Bx`` over the retained spatial
    band (Wx*Wy*Mz entries; 245 for defaults).
    """

    velocity: tuple[float, float]
    coeffs: np.ndarray


def _check_velocity(params: FilterParams, velocity) -> tuple[float, float]:
    vx, vy = float(velocity[0]), float(velocity[1])
    span_x = max(abs(v) for v in params.lag_grid_x)
    span_y = max(abs(v) for v in params.lag_grid_y)
    if abs(vx) > span_x + 1e-12 or abs(vy) > span_y + 1e-12:
        raise ParamError(
            f"velocity ({vx}, {vy}) outside the configured grid span "
            f"(+-{span_x}, +-{span_y})"
        )
    return vx, vy


def sample_kernel(params: FilterParams, velocity) -> SampleKernel:
    """Design the sample-domain prediction kernel for one velocity."""
    vx, vy = _check_velocity(params, velocity)
    mhx, mhy, mhz = params.mhat
    mx = np.arange(params.mx).reshape(1, 1, params.mx)
    my = np.arange(params.my).reshape(1, params.my, 1)
    mz = np.arange(params.mz).reshape(params.mz, 1, 1)
    gain = params.wx * params.wy / params.bin_count
    taps = (
        gain
        * dirichlet((mx - mhx - vx * (mz - mhz)) / params.mx, params.wx)
        * dirichlet((my - mhy - vy * (mz - mhz)) / params.my, params.wy)
    )
    return SampleKernel((vx, vy), taps)


def kernel_to_freq(kernel: SampleKernel, params: FilterParams) -> FreqKernel:
    """Unitary DFT of the taps, restricted to the retained bin set."""
    cz = np.conj(_band_table(params.mz, params.kz))
    cy = np.conj(_band_table(params.my, params.by))
    cx = np.conj(_band_table(params.mx, params.bx))
    coeffs = np.einsum("am,bn,co,mno->abc", cz, cy, cx, kernel.taps)
    coeffs /= np.sqrt(params.bin_count)
    return FreqKernel(kernel.velocity, coeffs)


def _band_table(m_len: int, half_band: int) -> np.ndarray:
    """Basis phases e^{+j2*pi*k*m/M} for k in [-half_band, +half_band]."""
    k = np.arange(-half_band, half_band + 1)
    m = np.arange(m_len)
    return np.exp(2j * np.pi * np.outer(k, m) / m_len)


def freq_response(params: FilterParams, velocity, f) -> complex | np.ndarray:
    """Analytic frequency response of the velocity-tuned predictor.

    ``f = (fx, fy, fz)`` in cycles/sample per dimension; components may be
    scalars or broadcastable arrays.  The response sums, over the retained
    spatial bins, a per-bin product of synthesis phases, center-offset
    modulations and Dirichlet interpolation factors; the temporal factor
    interpolates along the velocity-tilted plane, capturing the inter-bin
    leakage that rigid motion produces in the temporal dimension.
    """
    vx, vy = _check_velocity(params, velocity)
    fx, fy, fz = (np.asarray(c, dtype=np.float64) for c in f)
    mhx, mhy, mhz = params.mhat
    dx, dy, dz = params.delta
    mx, my, mz = params.mx, params.my, params.mz

    center = np.exp(-2j * np.pi * (fx * dx + fy * dy + fz * dz))
    total = np.zeros(np.broadcast(fx, fy, fz).shape, dtype=np.complex128)
    for ky in range(-params.by, params.by + 1):
        sync_y = np.exp(-2j * np.pi * ky * (mhy - dy) / my)
        interp_y = dirichlet(fy - ky / my, my)
        for kx in range(-params.bx, params.bx + 1):
            sync_x = np.exp(-2j * np.pi * kx * (mhx - dx) / mx)
            tilt = vx * kx / mx + vy * ky / my
            sync_v = np.exp(2j * np.pi * tilt * (mhz - dz))
            interp_x = dirichlet(fx - kx / mx, mx)
            interp_z = dirichlet(fz + tilt, mz)
            total = total + (sync_x * sync_y * sync_v) * (
                interp_x * interp_y * interp_z
            )
    total = total * center / np.sqrt(params.bin_count)
    if total.ndim == 0:
        return complex(total)
    return total


def sampled_freq_kernel(params: FilterParams, velocity) -> FreqKernel:
    """Retained-set coefficients from the analytic response at the bins.

    Evaluates :func:`freq_response` at ``f = (kx/Mx, ky/My, kz/Mz)`` for the
    retained bin set; agrees with :func:`kernel_to_freq` of
    :func:`sample_kernel` to rounding.
    """
    kz = (np.arange(params.mz) - params.kz).reshape(params.mz, 1, 1)
    ky = (np.arange(params.wy) - params.by).reshape(1, params.wy, 1)
    kx = (np.arange(params.wx) - params.bx).reshape(1, 1, params.wx)
    fx = np.broadcast_to(kx / params.mx, (params.mz, params.wy, params.wx))
    fy = np.broadcast_to(ky / params.my, fx.shape)
    fz = np.broadcast_to(kz / params.mz, fx.shape)
    coeffs = freq_response(params, velocity, (fx, fy, fz))
    return FreqKernel(tuple(float(c) for c in velocity), coeffs)


def retained_bin_indices(params: FilterParams) -> np.ndarray:
    """Flat indices of the retained bins inside a (Mz, My, Mx) bin block,
    ordered to match FreqKernel coefficient layout."""
    idx = []
    for ikz in range(params.mz):
        for ky in range(-params.by, params.by + 1):
            iky = ky + params.ky
            for kx in range(-params.bx, params.bx + 1):
                ikx = kx + params.kx
                idx.append((ikz * params.my + iky) * params.mx + ikx)
    return np.asarray(idx, dtype=np.int64)


@dataclass
class FilterBank:
    """Precomputed frequency-domain predictors for every grid velocity.

    ``coeffs[iy, ix]`` holds the FreqKernel coefficient block for velocity
    ``(lag_x[ix], lag_y[iy])``, stored complex64; immutable by convention
    once built.
    """

    params: FilterParams
    lag_x: np.ndarray
    lag_y: np.ndarray
    coeffs: np.ndarray
    build_seconds: float = 0.0
    retained: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.retained is None:
            self.retained = retained_bin_indices(self.params)

    @property
    def size(self) -> int:
        return len(self.lag_y) * len(self.lag_x)

    @property
    def coeffs_flat(self) -> np.ndarray:
        """(Ly, Lx, retained_count) view for the filtering kernel."""
        ly, lx = self.coeffs.shape[:2]
        return self.coeffs.reshape(ly, lx, -1)

    def index_of(self, velocity) -> tuple[int, int]:
        """Grid indices (ix, iy) of an exact grid velocity."""
        vx, vy = float(velocity[0]), float(velocity[1])
        ix = np.nonzero(np.abs(self.lag_x - vx) < 1e-9)[0]
        iy = np.nonzero(np.abs(self.lag_y - vy) < 1e-9)[0]
        if len(ix) != 1 or len(iy) != 1:
            raise ParamError(
                f"velocity ({vx}, {vy}) is not on the configured velocity grid"
            )
        return int(ix[0]), int(iy[0])

    def kernel(self, ix: int, iy: int) -> FreqKernel:
        """FreqKernel at grid indices (ix, iy)."""
        return FreqKernel(
            (float(self.lag_x[ix]), float(self.lag_y[iy])), self.coeffs[iy, ix]
        )


def build_bank(params: FilterParams) -> FilterBank:
    """Design one FreqKernel per velocity-grid point (289 for defaults)."""
    validate(params)
    t0 = time.perf_counter()
    lag_x = np.asarray(params.lag_grid_x, dtype=np.float64)
    lag_y = np.asarray(params.lag_grid_y, dtype=np.float64)
    shape = (len(lag_y), len(lag_x), params.mz, params.wy, params.wx)
    coeffs = np.empty(shape, dtype=np.complex64)
    for iy, vy in enumerate(lag_y):
        for ix, vx in enumerate(lag_x):
            fk = kernel_to_freq(sample_kernel(params, (vx, vy)), params)
            coeffs[iy, ix] = fk.coeffs.astype(np.complex64)
    return FilterBank(
        params=params,
        lag_x=lag_x,
        lag_y=lag_y,
        coeffs=coeffs,
        build_seconds=time.perf_counter() - t0,
    )
