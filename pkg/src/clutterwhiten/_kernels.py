"""Numba kernels for the streaming spectrum, flow and filtering stages.

Array layouts (C-contiguous throughout):

* frame        (H, W) float32, indexed [y, x]
* x-stage      (H, W, Mx) complex128; [y, x, ikx] with bin kx = ikx - Kx,
               unnormalized running window sum over x
* spatial      (H, W, My, Mx) complex128; one ring-buffer slot per frame
* spectrum     (H, W, Mz, My, Mx) complex128; normalized local 3-D bins
* power        same bin layout, float64
* autocorr     (H, W, Ly, Lx) float64 over the (lag_y, lag_x) grid
* velocity idx (H, W, 2) int32 storing (ix, iy) grid indices

Each kernel takes a ``lo, hi`` range over its partition axis (rows, or
columns for the y stage) and writes only inside that range, so thread-
partitioned calls are bit-identical to serial ones.  All kernels release
the GIL.

Sliding-window recursion per bin k over window length M:
``U(k; n) = e^{j2*pi*k/M} * U(k; n-1) + x(n) - x(n-M)``
(comb feeding a resonator on the unit circle), restarted with a direct
summation at the first full window of every row/column.
"""

import numpy as np
from numba import njit

_JIT = dict(nogil=True, cache=True)


@njit(**_JIT)
def sdft_rows(frame, init_x, tw_x, xf, row_lo, row_hi):
    # init_x[ikx, mx] = e^{j2pi kx mx / Mx}; tw_x[ikx] = e^{j2pi kx / Mx}
    H, W = frame.shape
    Mx = tw_x.shape[0]
    for y in range(row_lo, row_hi):
        for ikx in range(Mx):
            acc = 0.0 + 0.0j
            for mx in range(Mx):
                acc += init_x[ikx, mx] * np.float64(frame[y, Mx - 1 - mx])
            xf[y, Mx - 1, ikx] = acc
        for x in range(Mx, W):
            comb = np.float64(frame[y, x]) - np.float64(frame[y, x - Mx])
            for ikx in range(Mx):
                xf[y, x, ikx] = tw_x[ikx] * xf[y, x - 1, ikx] + comb


@njit(**_JIT)
def sdft_cols(xf, init_y, tw_y, sp, x_min, col_lo, col_hi):
    # Slides the x-stage output down each column; columns left of x_min
    # never hold a full x window and are skipped.
    H, W, Mx = xf.shape
    My = tw_y.shape[0]
    for x in range(col_lo, col_hi):
        if x < x_min:
            continue
        for iky in range(My):
            for ikx in range(Mx):
                acc = 0.0 + 0.0j
                for my in range(My):
                    acc += init_y[iky, my] * xf[My - 1 - my, x, ikx]
                sp[My - 1, x, iky, ikx] = acc
        for y in range(My, H):
            for iky in range(My):
                t = tw_y[iky]
                for ikx in range(Mx):
                    comb = xf[y, x, ikx] - xf[y - My, x, ikx]
                    sp[y, x, iky, ikx] = t * sp[y - 1, x, iky, ikx] + comb


@njit(**_JIT)
def temporal_dft(ring, slots, ez, norm, out, x_min, y_min, row_lo, row_hi):
    # ring[slots[mz]] is the spatial stage for the frame mz steps back;
    # ez[ikz, mz] = e^{j2pi kz mz / Mz}.  norm applies the unitary 1/sqrt(M^3).
    Mz = slots.shape[0]
    H, W, My, Mx = ring.shape[1:]
    taps = np.empty(Mz, dtype=np.complex128)
    for y in range(row_lo, row_hi):
        if y < y_min:
            continue
        for x in range(x_min, W):
            for iky in range(My):
                for ikx in range(Mx):
                    for mz in range(Mz):
                        taps[mz] = ring[slots[mz], y, x, iky, ikx]
                    for ikz in range(Mz):
                        acc = 0.0 + 0.0j
                        for mz in range(Mz):
                            acc += ez[ikz, mz] * taps[mz]
                        out[y, x, ikz, iky, ikx] = norm * acc


@njit(**_JIT)
def naive_spectrum(stack, ex, ey, ez, norm, out, row_lo, row_hi):
    # Non-recursive reference backend: each pixel's bins are computed from
    # its own raw Mx*My*Mz window with no sharing between pixels.
    # stack[mz] is the input frame mz steps back.
    Mz, H, W = stack.shape
    Mx = ex.shape[0]
    My = ey.shape[0]
    a = np.empty((Mz, My, Mx), dtype=np.complex128)
    b = np.empty((Mz, My, Mx), dtype=np.complex128)
    for y in range(row_lo, row_hi):
        if y < My - 1:
            continue
        for x in range(Mx - 1, W):
            for mz in range(Mz):
                for my in range(My):
                    for ikx in range(Mx):
                        acc = 0.0 + 0.0j
                        for mx in range(Mx):
                            acc += ex[ikx, mx] * np.float64(stack[mz, y - my, x - mx])
                        a[mz, my, ikx] = acc
            for mz in range(Mz):
                for iky in range(My):
                    for ikx in range(Mx):
                        acc = 0.0 + 0.0j
                        for my in range(My):
                            acc += ey[iky, my] * a[mz, my, ikx]
                        b[mz, iky, ikx] = acc
            for ikz in range(Mz):
                for iky in range(My):
                    for ikx in range(Mx):
                        acc = 0.0 + 0.0j
                        for mz in range(Mz):
                            acc += ez[ikz, mz] * b[mz, iky, ikx]
                        out[y, x, ikz, iky, ikx] = norm * acc


@njit(**_JIT)
def naive_spectrum_direct(stack, my_len, mx_len, basis_flat, out_flat, row_lo, row_hi):
    # Literal non-recursive reference: every bin of every pixel is the full
    # inner product of one basis row with the pixel's raw window; nothing is
    # shared across bins or pixels.  basis_flat is (NB, NB) over flattened
    # (mz, my, mx) sample order; out_flat is (H, W, NB).
    Mz, H, W = stack.shape
    NB = basis_flat.shape[0]
    window = np.empty(NB, dtype=np.float64)
    for y in range(row_lo, row_hi):
        if y < my_len - 1:
            continue
        for x in range(mx_len - 1, W):
            i = 0
            for mz in range(Mz):
                for my in range(my_len):
                    for mx in range(mx_len):
                        window[i] = np.float64(stack[mz, y - my, x - mx])
                        i += 1
            for b in range(NB):
                acc = 0.0 + 0.0j
                for m in range(NB):
                    acc += basis_flat[b, m] * window[m]
                out_flat[y, x, b] = acc


@njit(**_JIT)
def copy_field(src, dst, row_lo, row_hi):
    H, W, Mz, My, Mx = src.shape
    for y in range(row_lo, row_hi):
        for x in range(W):
            for ikz in range(Mz):
                for iky in range(My):
                    for ikx in range(Mx):
                        dst[y, x, ikz, iky, ikx] = src[y, x, ikz, iky, ikx]


@njit(**_JIT)
def zero_spatial_dc(s, ky_c, kx_c, row_lo, row_hi):
    # Clears the (kx, ky) = (0, 0) column across all temporal bins.
    H, W, Mz, My, Mx = s.shape
    for y in range(row_lo, row_hi):
        for x in range(W):
            for ikz in range(Mz):
                s[y, x, ikz, ky_c, kx_c] = 0.0 + 0.0j


@njit(**_JIT)
def hann3(s, out, row_lo, row_hi):
    # Circular 3-tap (-1/4, 1/2, -1/4) convolution over each bin axis in
    # turn; equals a per-axis 0.5 - 0.5*cos(2*pi*m/M) taper on the window
    # samples.  Safe for out is s (per-pixel scratch copies).
    H, W, Mz, My, Mx = s.shape
    b1 = np.empty((Mz, My, Mx), dtype=np.complex128)
    b2 = np.empty((Mz, My, Mx), dtype=np.complex128)
    for y in range(row_lo, row_hi):
        for x in range(W):
            for ikz in range(Mz):
                for iky in range(My):
                    for ikx in range(Mx):
                        b1[ikz, iky, ikx] = s[y, x, ikz, iky, ikx]
            for ikz in range(Mz):
                for iky in range(My):
                    for ikx in range(Mx):
                        lo = ikx - 1 if ikx > 0 else Mx - 1
                        hi = ikx + 1 if ikx < Mx - 1 else 0
                        b2[ikz, iky, ikx] = (
                            0.5 * b1[ikz, iky, ikx]
                            - 0.25 * (b1[ikz, iky, lo] + b1[ikz, iky, hi])
                        )
            for ikz in range(Mz):
                for iky in range(My):
                    lo = iky - 1 if iky > 0 else My - 1
                    hi = iky + 1 if iky < My - 1 else 0
                    for ikx in range(Mx):
                        b1[ikz, iky, ikx] = (
                            0.5 * b2[ikz, iky, ikx]
                            - 0.25 * (b2[ikz, lo, ikx] + b2[ikz, hi, ikx])
                        )
            for ikz in range(Mz):
                lo = ikz - 1 if ikz > 0 else Mz - 1
                hi = ikz + 1 if ikz < Mz - 1 else 0
                for iky in range(My):
                    for ikx in range(Mx):
                        out[y, x, ikz, iky, ikx] = (
                            0.5 * b1[ikz, iky, ikx]
                            - 0.25 * (b1[lo, iky, ikx] + b1[hi, iky, ikx])
                        )


@njit(**_JIT)
def power(s_flat, out_flat, row_lo, row_hi):
    H, W, NB = s_flat.shape
    for y in range(row_lo, row_hi):
        for x in range(W):
            for b in range(NB):
                v = s_flat[y, x, b]
                out_flat[y, x, b] = v.real * v.real + v.imag * v.imag


@njit(**_JIT)
def autocorr(p, az, axl, ayl, out, row_lo, row_hi):
    # az[ikz] = e^{-j2pi kz/Mz} (temporal lag fixed at one frame),
    # axl[il, ikx] = e^{-j2pi kx lx[il]/Mx}, ayl likewise for y.
    # Separable reduction: collapse kz, then kx per x-lag, then ky per y-lag.
    H, W, Mz, My, Mx = p.shape
    Lx = axl.shape[0]
    Ly = ayl.shape[0]
    tz = np.empty((My, Mx), dtype=np.complex128)
    by = np.empty(My, dtype=np.complex128)
    for y in range(row_lo, row_hi):
        for x in range(W):
            for iky in range(My):
                for ikx in range(Mx):
                    acc = 0.0 + 0.0j
                    for ikz in range(Mz):
                        acc += az[ikz] * p[y, x, ikz, iky, ikx]
                    tz[iky, ikx] = acc
            for ilx in range(Lx):
                for iky in range(My):
                    acc = 0.0 + 0.0j
                    for ikx in range(Mx):
                        acc += axl[ilx, ikx] * tz[iky, ikx]
                    by[iky] = acc
                for ily in range(Ly):
                    acc = 0.0 + 0.0j
                    for iky in range(My):
                        acc += ayl[ily, iky] * by[iky]
                    out[y, x, ily, ilx] = acc.real


@njit(**_JIT)
def smooth(r, rhat, alpha, row_lo, row_hi):
    H, W, Ly, Lx = r.shape
    beta = 1.0 - alpha
    for y in range(row_lo, row_hi):
        for x in range(W):
            for ily in range(Ly):
                for ilx in range(Lx):
                    rhat[y, x, ily, ilx] = (
                        beta * r[y, x, ily, ilx] + alpha * rhat[y, x, ily, ilx]
                    )


@njit(**_JIT)
def pick(rhat, lag_x, lag_y, gain_x, gain_y, idx, vel, row_lo, row_hi):
    # Argmax of the envelope-compensated score rhat * gain_x * gain_y over
    # the lag grid; ties broken by smaller |v|^2, then lexicographic (ix, iy).
    H, W, Ly, Lx = rhat.shape
    for y in range(row_lo, row_hi):
        for x in range(W):
            best = rhat[y, x, 0, 0] * gain_y[0] * gain_x[0]
            bix = 0
            biy = 0
            bnorm = lag_x[0] * lag_x[0] + lag_y[0] * lag_y[0]
            for ily in range(Ly):
                for ilx in range(Lx):
                    v = rhat[y, x, ily, ilx] * gain_y[ily] * gain_x[ilx]
                    if v < best:
                        continue
                    norm2 = lag_x[ilx] * lag_x[ilx] + lag_y[ily] * lag_y[ily]
                    if v > best or (
                        norm2 < bnorm
                        or (norm2 == bnorm and (ilx < bix or (ilx == bix and ily < biy)))
                    ):
                        best = v
                        bix = ilx
                        biy = ily
                        bnorm = norm2
            idx[y, x, 0] = bix
            idx[y, x, 1] = biy
            vel[y, x, 0] = lag_x[bix]
            vel[y, x, 1] = lag_y[biy]


@njit(**_JIT)
def pef(
    s_flat,
    bank,
    retained,
    idx,
    delayed,
    pred,
    res,
    imag,
    mhx,
    mhy,
    ox_lo,
    ox_hi,
    oy_lo,
    oy_hi,
    row_lo,
    row_hi,
):
    # Per valid output pixel (oy, ox): the analysis window is anchored at
    # (oy + mhy, ox + mhx); its picked velocity selects the bank entry and
    # the prediction is the real part of the retained-bin inner product.
    NC = retained.shape[0]
    for oy in range(row_lo, row_hi):
        if oy < oy_lo or oy > oy_hi:
            continue
        for ox in range(ox_lo, ox_hi + 1):
            ny = oy + mhy
            nx = ox + mhx
            bix = idx[ny, nx, 0]
            biy = idx[ny, nx, 1]
            acc = 0.0 + 0.0j
            for j in range(NC):
                acc += bank[biy, bix, j] * s_flat[ny, nx, retained[j]]
            p = acc.real
            pred[oy, ox] = np.float32(p)
            res[oy, ox] = np.float32(np.float64(delayed[oy, ox]) - p)
            imag[oy, ox] = np.float32(abs(acc.imag))
