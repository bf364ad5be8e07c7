"""Per-pixel local 3-D spectra of an image stream.

The local spectrum of pixel ``n`` collects ``S(k) = sum_m F(m; k) I(n - m)``
over the analysis window behind and before the pixel (``m`` counts backward
from the anchor in x, y and time) with the unitary complex-exponential basis
``F(m; k) = exp(+j2*pi*(kx*mx/Mx + ky*my/My + kz*mz/Mz)) / sqrt(Mx*My*Mz)``.

Two implementations are provided:

* :class:`SpectrumStream` - the production path.  Sliding-window recursions
  over x (per row) and y (per column) update the spatial bins in O(1) per
  pixel per bin; the temporal stage is an exact ring-buffer DFT over the
  last ``Mz`` spatial-bin fields.
* :func:`naive_local_spectrum` / :class:`NaiveSpectrumStream` - direct
  evaluation from raw samples with no sharing between pixels; the oracle
  the recursive path is checked against, and the non-recursive reference
  backend for benchmarks.

Spectra are only defined where the full window fits (``x >= Mx - 1``,
``y >= My - 1``); border pixels hold zeros.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .parallel import BlockExecutor, ExecStrategy
from .params import FilterParams, ParamError, validate

__all__ = [
    "SpectrumField",
    "SpectrumStream",
    "NaiveSpectrumStream",
    "basis",
    "naive_local_spectrum",
    "naive_spectrum_field",
]


def basis(m, k, params: FilterParams) -> complex:
    """One sample of the unitary 3-D DFT basis.

    Parameters
    ----------
    m : (mx, my, mz) window sample index, each in [0, M - 1].
    k : (kx, ky, kz) bin index, each in [-K, +K].
    """
    mx, my, mz = m
    kx, ky, kz = k
    if not (0 <= mx < params.mx and 0 <= my < params.my and 0 <= mz < params.mz):
        raise ValueError(f"sample index {m} outside window")
    if not (
        abs(kx) <= params.kx and abs(ky) <= params.ky and abs(kz) <= params.kz
    ):
        raise ValueError(f"bin index {k} outside [-K, +K]")
    phase = kx * mx / params.mx + ky * my / params.my + kz * mz / params.mz
    return np.exp(2j * np.pi * phase) / np.sqrt(params.bin_count)


@lru_cache(maxsize=8)
def _axis_tables(params: FilterParams):
    """Per-axis bin/sample phase tables ``e[ik, m] = exp(j2*pi*k*m/M)``."""
    tables = []
    for m_len in (params.mx, params.my, params.mz):
        k = np.arange(m_len) - (m_len - 1) // 2
        m = np.arange(m_len)
        tables.append(np.exp(2j * np.pi * np.outer(k, m) / m_len))
    ex, ey, ez = tables
    return ex, ey, ez


@lru_cache(maxsize=8)
def _full_basis_matrix(params: FilterParams) -> np.ndarray:
    """Dense (bins x samples) basis built by direct phase evaluation."""
    mx, my, mz = params.mx, params.my, params.mz
    kx = (np.arange(mx) - params.kx).reshape(1, 1, mx, 1, 1, 1)
    ky = (np.arange(my) - params.ky).reshape(1, my, 1, 1, 1, 1)
    kz = (np.arange(mz) - params.kz).reshape(mz, 1, 1, 1, 1, 1)
    smx = np.arange(mx).reshape(1, 1, 1, 1, 1, mx)
    smy = np.arange(my).reshape(1, 1, 1, 1, my, 1)
    smz = np.arange(mz).reshape(1, 1, 1, mz, 1, 1)
    phase = kx * smx / mx + ky * smy / my + kz * smz / mz
    nb = params.bin_count
    return (np.exp(2j * np.pi * phase) / np.sqrt(nb)).reshape(nb, nb)


def naive_local_spectrum(window, params: FilterParams) -> np.ndarray:
    """Directly evaluate all bins of one pixel's local spectrum.

    ``window[mz, my, mx]`` holds the intensity at backward offset ``m`` from
    the anchor pixel.  Returns bins shaped (Mz, My, Mx) indexed by
    ``ik = k + K`` per axis.
    """
    window = np.asarray(window, dtype=np.float64)
    shape = (params.mz, params.my, params.mx)
    if window.shape != shape:
        raise ValueError(f"window shape {window.shape} != {shape}")
    flat = _full_basis_matrix(params) @ window.ravel()
    return flat.reshape(shape)


@dataclass
class SpectrumField:
    """Per-pixel complex bins for one frame time.

    ``bins[y, x, ikz, iky, ikx]`` with ``ik = k + K`` per axis; zeros at
    border pixels where no full window fits and everywhere before temporal
    warm-up (``ready`` False).
    """

    bins: np.ndarray
    frame_index: int
    ready: bool
    params: FilterParams

    @property
    def height(self) -> int:
        return self.bins.shape[0]

    @property
    def width(self) -> int:
        return self.bins.shape[1]

    @property
    def valid_slices(self) -> tuple[slice, slice]:
        """(rows, cols) where the full spatial window fits."""
        return (
            slice(self.params.my - 1, self.height),
            slice(self.params.mx - 1, self.width),
        )


def _check_dims(params: FilterParams, width: int, height: int) -> None:
    if width < params.mx or height < params.my:
        raise ParamError(
            f"image {width}x{height} smaller than analysis window "
            f"{params.mx}x{params.my}"
        )


class SpectrumStream:
    """Recursive sliding-window spectrum engine over a frame stream.

    Per pushed frame: stage 1 slides a windowed DFT along every row, stage 2
    slides the x-stage output down every column, stage 3 applies an exact
    DFT across the ``Mz`` most recent spatial-bin fields held in a ring
    buffer.  Output matches :func:`naive_local_spectrum` at every valid
    pixel; results are bit-identical for serial and partitioned execution.
    """

    def __init__(
        self,
        params: FilterParams,
        width: int,
        height: int,
        strategy: ExecStrategy = ExecStrategy(),
        executor: BlockExecutor | None = None,
    ):
        validate(params)
        _check_dims(params, width, height)
        self.params = params
        self.width = width
        self.height = height
        self.frames_seen = 0
        ex, ey, ez = _axis_tables(params)
        self._ex = np.ascontiguousarray(ex)
        self._ey = np.ascontiguousarray(ey)
        self._ez = np.ascontiguousarray(ez)
        self._twx = np.ascontiguousarray(self._ex[:, 1])
        self._twy = np.ascontiguousarray(self._ey[:, 1])
        self._norm = 1.0 / np.sqrt(params.bin_count)
        self._xf = np.zeros((height, width, params.mx), dtype=np.complex128)
        self._ring = np.zeros(
            (params.mz, height, width, params.my, params.mx), dtype=np.complex128
        )
        self._executor = executor if executor is not None else BlockExecutor(strategy)
        self._owns_executor = executor is None

    @property
    def ready(self) -> bool:
        return self.frames_seen >= self.params.mz

    def bins_shape(self) -> tuple[int, ...]:
        p = self.params
        return (self.height, self.width, p.mz, p.my, p.mx)

    def push(self, frame, out: np.ndarray | None = None) -> SpectrumField:
        """Consume one frame; returns the spectrum field for it.

        ``out``, when given, receives the bins in place (reused buffers keep
        the steady-state path allocation-free).  Before warm-up the returned
        field has ``ready=False`` and all-zero bins.
        """
        frame = np.ascontiguousarray(frame, dtype=np.float32)
        if frame.shape != (self.height, self.width):
            raise ValueError(
                f"frame shape {frame.shape} != {(self.height, self.width)}"
            )
        p = self.params
        ex, ey = self._ex, self._ey
        twx, twy = self._twx, self._twy
        xf = self._xf
        slot = self.frames_seen % p.mz
        sp = self._ring[slot]

        self._executor.map_blocks(
            lambda lo, hi: _kernels.sdft_rows(frame, ex, twx, xf, lo, hi),
            self.height,
        )
        x_min = p.mx - 1
        self._executor.map_blocks(
            lambda lo, hi: _kernels.sdft_cols(xf, ey, twy, sp, x_min, lo, hi),
            self.width,
        )
        self.frames_seen += 1

        if out is None:
            out = np.zeros(self.bins_shape(), dtype=np.complex128)
        elif out.shape != self.bins_shape() or out.dtype != np.complex128:
            raise ValueError("out buffer has wrong shape or dtype")

        index = self.frames_seen - 1
        if not self.ready:
            out[...] = 0.0
            return SpectrumField(out, index, False, p)

        slots = np.array(
            [(index - mz) % p.mz for mz in range(p.mz)], dtype=np.int64
        )
        ring, ez, norm = self._ring, self._ez, self._norm
        y_min = p.my - 1
        self._executor.map_blocks(
            lambda lo, hi: _kernels.temporal_dft(
                ring, slots, ez, norm, out, x_min, y_min, lo, hi
            ),
            self.height,
        )
        return SpectrumField(out, index, True, p)

    def close(self) -> None:
        if self._owns_executor:
            self._executor.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class NaiveSpectrumStream:
    """Drop-in stream computing every pixel's spectrum from raw samples.

    Non-recursive and strictly serial; each pixel's bins are rebuilt from
    its own window with no sharing between pixels.  ``method`` picks the
    reference flavor:

    * ``"direct"`` (default) - literal evaluation: every bin is a full
      inner product over all window samples (the benchmark baseline).
    * ``"factored"`` - per-axis factoring within each pixel; circa an
      order of magnitude faster, used as the large-scale test oracle.
    """

    def __init__(self, params: FilterParams, width: int, height: int,
                 method: str = "direct", **_ignored):
        validate(params)
        _check_dims(params, width, height)
        if method not in ("direct", "factored"):
            raise ValueError(f"unknown naive method {method!r}")
        self.params = params
        self.width = width
        self.height = height
        self.method = method
        self.frames_seen = 0
        self._recent: deque[np.ndarray] = deque(maxlen=params.mz)
        ex, ey, ez = _axis_tables(params)
        self._ex = np.ascontiguousarray(ex)
        self._ey = np.ascontiguousarray(ey)
        self._ez = np.ascontiguousarray(ez)
        self._norm = 1.0 / np.sqrt(params.bin_count)
        self._basis_flat = _full_basis_matrix(params) if method == "direct" else None

    @property
    def ready(self) -> bool:
        return self.frames_seen >= self.params.mz

    def bins_shape(self) -> tuple[int, ...]:
        p = self.params
        return (self.height, self.width, p.mz, p.my, p.mx)

    def push(self, frame, out: np.ndarray | None = None) -> SpectrumField:
        frame = np.ascontiguousarray(frame, dtype=np.float32)
        if frame.shape != (self.height, self.width):
            raise ValueError(
                f"frame shape {frame.shape} != {(self.height, self.width)}"
            )
        p = self.params
        self._recent.append(frame)
        self.frames_seen += 1
        if out is None:
            out = np.zeros(self.bins_shape(), dtype=np.complex128)
        elif out.shape != self.bins_shape() or out.dtype != np.complex128:
            raise ValueError("out buffer has wrong shape or dtype")
        index = self.frames_seen - 1
        if not self.ready:
            out[...] = 0.0
            return SpectrumField(out, index, False, p)
        stack = np.stack([self._recent[-1 - mz] for mz in range(p.mz)])
        if self.method == "direct":
            out_flat = out.reshape(self.height, self.width, -1)
            _kernels.naive_spectrum_direct(
                stack, p.my, p.mx, self._basis_flat, out_flat, 0, self.height
            )
        else:
            _kernels.naive_spectrum(
                stack, self._ex, self._ey, self._ez, self._norm, out, 0, self.height
            )
        return SpectrumField(out, index, True, p)

    def close(self) -> None:
        pass


def naive_spectrum_field(frames, params: FilterParams,
                         method: str = "factored") -> SpectrumField:
    """Compute the spectrum field of the last frame of ``frames`` directly.

    ``frames`` is a (T, H, W) array with T >= Mz; convenience wrapper over
    :class:`NaiveSpectrumStream` used by tests and equivalence checks.
    """
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[0] < params.mz:
        raise ValueError(f"need at least {params.mz} frames, got {frames.shape}")
    stream = NaiveSpectrumStream(
        params, frames.shape[2], frames.shape[1], method=method
    )
    field = None
    for t in range(frames.shape[0]):
        field = stream.push(frames[t])
    return field
