import numpy as np
import pytest

from clutterwhiten import (
    build_bank,
    dirichlet,
    freq_response,
    kernel_to_freq,
    naive_local_spectrum,
    sample_kernel,
    sampled_freq_kernel,
)
from clutterwhiten.design import retained_bin_indices
from clutterwhiten.params import ParamError
from clutterwhiten.spectrum import _full_basis_matrix


# -- dirichlet ---------------------------------------------------------------


def test_dirichlet_limit_at_zero():
    assert dirichlet(0.0, 7) == 1.0


def test_dirichlet_numerator_node():
    assert dirichlet(1 / 7, 7) == pytest.approx(0.0, abs=1e-12)


def test_dirichlet_half():
    assert dirichlet(0.5, 7) == pytest.approx(-1 / 7, rel=1e-12)


def test_dirichlet_limit_at_integers_is_one():
    for w in (-3, -1, 1, 2, 5):
        assert dirichlet(float(w), 9) == 1.0


def test_dirichlet_periodic_for_odd_order():
    w = np.linspace(-1.3, 1.3, 313)
    assert np.abs(dirichlet(w + 1.0, 7) - dirichlet(w, 7)).max() < 1e-9


def test_dirichlet_rejects_even_order():
    with pytest.raises(ValueError):
        dirichlet(0.3, 4)


def test_dirichlet_array_shape():
    w = np.zeros((3, 4))
    assert dirichlet(w, 9).shape == (3, 4)


# -- sample kernel -----------------------------------------------------------


def test_static_kernel_center_tap(params):
    kern = sample_kernel(params, (0.0, 0.0))
    assert kern.taps.shape == (5, 9, 9)
    assert kern.taps[2, 4, 4] == pytest.approx(49 / 405, rel=1e-12)


def test_tap_sum_is_unit_for_every_grid_velocity(params):
    for vy in params.lag_grid_y:
        for vx in params.lag_grid_x:
            total = sample_kernel(params, (vx, vy)).taps.sum()
            assert abs(total - 1.0) < 1e-5


def test_static_kernel_slices_repeat_over_time(params):
    taps = sample_kernel(params, (0.0, 0.0)).taps
    for mz in range(1, 5):
        assert np.array_equal(taps[mz], taps[0])
    assert taps[0].sum() == pytest.approx(1 / 5, rel=1e-9)


def test_kernel_rejects_velocity_outside_grid_span(params):
    with pytest.raises(ParamError, match="outside the configured grid"):
        sample_kernel(params, (2.5, 0.0))


# -- frequency-domain kernel ---------------------------------------------------


def test_freq_kernel_shape_and_count(params):
    fk = kernel_to_freq(sample_kernel(params, (1.0, -0.5)), params)
    assert fk.coeffs.shape == (5, 7, 7)
    assert fk.coeffs.size == 245


def test_static_kernel_has_no_temporal_content(params):
    fk = kernel_to_freq(sample_kernel(params, (0.0, 0.0)), params)
    off_dc = fk.coeffs.copy()
    off_dc[2] = 0
    assert np.abs(off_dc).max() < 1e-12


def test_freq_kernel_conjugate_symmetry(params):
    fk = kernel_to_freq(sample_kernel(params, (1.25, 0.75)), params)
    assert np.abs(fk.coeffs - np.conj(fk.coeffs[::-1, ::-1, ::-1])).max() < 1e-6


def test_band_limited_reconstruction_is_exact(params):
    # taps live inside the retained band, so the truncated expansion is exact
    basis = _full_basis_matrix(params)
    ret = retained_bin_indices(params)
    for v in [(0.0, 0.0), (1.25, -0.75), (-2.0, 2.0)]:
        kern = sample_kernel(params, v)
        fk = kernel_to_freq(kern, params)
        recon = fk.coeffs.ravel() @ basis[ret, :]
        assert np.abs(recon.imag).max() < 1e-12
        assert np.abs(recon.real.reshape(kern.taps.shape) - kern.taps).max() < 1e-5


def test_prediction_is_exact_for_in_band_bin_cosine(params):
    # an in-band on-bin component translating at the tuned velocity is
    # reproduced exactly at the group-delay point
    vx, vy = 1.0, -0.75
    fx, fy = 2 / 9, 1 / 9
    fz = -(vx * fx + vy * fy)
    kern = sample_kernel(params, (vx, vy))
    mx = np.arange(9)[None, None, :]
    my = np.arange(9)[None, :, None]
    mz = np.arange(5)[:, None, None]
    for phase in (0.0, 1.1):
        window = np.cos(2 * np.pi * (fx * (0 - mx) + fy * (0 - my) + fz * (0 - mz)) + phase)
        pred = np.sum(kern.taps * window)
        mh = params.mhat
        want = np.cos(
            2 * np.pi * (fx * (0 - mh[0]) + fy * (0 - mh[1]) + fz * (0 - mh[2])) + phase
        )
        assert pred == pytest.approx(want, abs=1e-9)


# -- analytic response ---------------------------------------------------------


def test_response_at_bin_frequency_selects_single_bin(params):
    q = freq_response(params, (0.0, 0.0), (1 / 9, 0.0, 0.0))
    want = np.exp(-2j * np.pi * (1 / 9) * 4) / np.sqrt(405)
    assert q == pytest.approx(want, abs=1e-12)
    fk = kernel_to_freq(sample_kernel(params, (0.0, 0.0)), params)
    assert q == pytest.approx(complex(fk.coeffs[2, 3, 4]), abs=1e-9)  # k=(1,0,0)


def test_response_scalar_and_array_forms_agree(params):
    fx = np.array([0.05, 0.1, -0.2])
    arr = freq_response(params, (0.5, 0.25), (fx, fx * 0, fx * 0.3))
    for i, f in enumerate(fx):
        assert arr[i] == pytest.approx(
            freq_response(params, (0.5, 0.25), (f, 0.0, f * 0.3)), abs=1e-12
        )


def test_cross_path_identity_on_sampled_velocities(params):
    for v in [(0.0, 0.0), (0.25, 0.0), (-1.5, 1.0), (2.0, -2.0), (0.75, 1.75)]:
        a = kernel_to_freq(sample_kernel(params, v), params).coeffs
        b = sampled_freq_kernel(params, v).coeffs
        assert np.abs(a - b).max() < 1e-5


def test_velocity_tilt_maps_passband(params):
    q_static = freq_response(params, (0.0, 0.0), (1 / 9, 0.0, 0.0))
    q_moving = freq_response(params, (1.0, 0.0), (1 / 9, 0.0, -1 / 9))
    assert abs(abs(q_moving) - abs(q_static)) < 1e-3


# -- bank ----------------------------------------------------------------------


def test_bank_dimensions(params, default_bank):
    assert default_bank.size == 289
    assert default_bank.coeffs.shape == (17, 17, 5, 7, 7)
    assert default_bank.coeffs.dtype == np.complex64
    assert default_bank.retained.shape == (245,)
    assert default_bank.build_seconds > 0


def test_bank_lookup_matches_design_path(params, default_bank):
    ix, iy = default_bank.index_of((0.0, 0.0))
    assert (ix, iy) == (8, 8)
    fk = kernel_to_freq(sample_kernel(params, (0.0, 0.0)), params)
    assert np.array_equal(
        default_bank.coeffs[iy, ix], fk.coeffs.astype(np.complex64)
    )
    kern = default_bank.kernel(ix, iy)
    assert kern.velocity == (0.0, 0.0)


def test_bank_is_deterministic(params, default_bank):
    again = build_bank(params)
    assert np.array_equal(default_bank.coeffs, again.coeffs)


def test_bank_rejects_off_grid_velocity(default_bank):
    with pytest.raises(ParamError, match="not on the configured velocity grid"):
        default_bank.index_of((0.1, 0.0))


def test_linear_phase_at_zero_velocity(params):
    fk = kernel_to_freq(sample_kernel(params, (0.0, 0.0)), params)
    assert np.abs(fk.coeffs - np.conj(fk.coeffs[::-1, ::-1, ::-1])).max() < 1e-6
    taps = sample_kernel(params, (0.0, 0.0)).taps
    # symmetric about the group-delay point
    assert np.abs(taps - taps[:, ::-1, ::-1]).max() < 1e-6


def test_retained_indices_match_coefficient_layout(params):
    ret = retained_bin_indices(params)
    assert len(ret) == 245
    assert len(set(ret.tolist())) == 245
    # spot check: first entry is (kz=-2, ky=-3, kx=-3) -> ik=(0, 1, 1)
    assert ret[0] == (0 * 9 + 1) * 9 + 1
    # center entry maps to the DC bin
    fk = kernel_to_freq(sample_kernel(params, (0.75, -1.25)), params)
    s = naive_local_spectrum(np.ones((5, 9, 9)), params).ravel()
    inner_full = fk.coeffs.ravel() @ s[ret]
    assert inner_full.real == pytest.approx(1.0, abs=1e-6)  # unit DC gain
