import numpy as np
import pytest

from idbp.grid import add_gaussian_noise
from idbp.operators import (
    SCENARIO_NOISE_VARIANCE,
    BlurOperator,
    InpaintingOperator,
    SpectralInverse,
    fft2,
    generate_random_mask,
    generate_scenario_kernel,
    ifft2,
    kernel_spectrum,
)
from idbp.rng import RngState


def _random_grid(seed, h, w, scale=40.0, offset=128.0):
    return RngState(seed).gaussians(h * w).reshape(h, w) * scale + offset


def _delta_kernel(size=3):
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k


# ---------------------------------------------------------------------------
# Spectral engine vs a direct DFT oracle
# ---------------------------------------------------------------------------


def _direct_dft2(x):
    h, w = x.shape
    wh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ww = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return wh @ x @ ww.T


@pytest.mark.parametrize("shape", [(8, 8), (15, 15), (12, 17), (32, 32)])
def test_fft2_matches_direct_dft(shape):
    x = _random_grid(1, *shape)
    got = fft2(x)
    want = _direct_dft2(x)
    assert np.max(np.abs(got - want)) < 1e-9 * np.max(np.abs(want))


@pytest.mark.parametrize("size", [15, 64, 100, 256])
def test_fft2_round_trip_and_parseval(size):
    x = _random_grid(2, size, size)
    spectrum = fft2(x)
    back = ifft2(spectrum)
    assert np.max(np.abs(back - x)) < 1e-10 * np.max(np.abs(x))
    space = float(np.sum(x * x))
    freq = float(np.sum(np.abs(spectrum) ** 2)) / x.size
    assert abs(space - freq) < 1e-9 * space


def test_constant_image_concentrates_in_dc_bin():
    spectrum = fft2(np.full((16, 16), 7.0))
    dc = spectrum[0, 0]
    assert dc == pytest.approx(7.0 * 256)
    spectrum[0, 0] = 0
    assert np.max(np.abs(spectrum)) < 1e-10 * abs(dc)


def test_convolution_theorem_against_explicit_circular_sum():
    # direct O(n^2 k^2) circular convolution as the oracle
    x = _random_grid(3, 10, 13)
    kernel = generate_scenario_kernel(4)
    op = BlurOperator(kernel, x.shape)
    got = op.forward(x)
    h, w = x.shape
    kh, kw = kernel.shape
    want = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    acc += kernel[a, b] * x[(i - (a - kh // 2)) % h, (j - (b - kw // 2)) % w]
            want[i, j] = acc
    assert np.max(np.abs(got - want)) < 1e-10
    # and in the frequency domain: F{h * x} = F{h} . F{x}
    assert np.max(np.abs(fft2(got) - op.spectrum * fft2(x))) < 1e-9 * np.max(np.abs(fft2(x)))


# ---------------------------------------------------------------------------
# Inpainting operator
# ---------------------------------------------------------------------------


def test_all_true_mask_is_identity_forward_and_zero_null():
    x = _random_grid(4, 8, 8)
    op = InpaintingOperator(np.ones((8, 8), dtype=bool))
    assert np.array_equal(op.forward(x), x)
    assert np.array_equal(op.project_null(x), np.zeros((8, 8)))


def test_pseudoinverse_zero_pads_missing_entries():
    mask = np.zeros((1, 4), dtype=bool)
    mask[0, 0] = mask[0, 2] = True
    op = InpaintingOperator(mask)
    y = np.array([[5.0, 0.0, 7.0, 0.0]])
    assert np.array_equal(op.pseudoinverse(y), np.array([[5.0, 0.0, 7.0, 0.0]]))


def test_projection_algebra_exact():
    rng = RngState(5)
    for _ in range(50):
        op = generate_random_mask(12, 12, float(rng.uniforms(1)[0] * 0.9), rng)
        x = rng.gaussians(144).reshape(12, 12) * 50 + 100
        y = op.forward(rng.gaussians(144).reshape(12, 12) * 50 + 100)
        assert np.array_equal(op.forward(op.pseudoinverse(y)), y)
        q = op.project_null(x)
        assert np.array_equal(op.project_null(q), q)
        assert float(np.vdot(op.forward(x), op.project_null(x))) == 0.0
        # norm identity behind the zero-delta choice
        residual = y - op.forward(x)
        assert float(np.linalg.norm(residual)) == float(np.linalg.norm(op.pseudoinverse(residual)))


def test_mask_generation_counts_and_determinism():
    op0 = generate_random_mask(10, 10, 0.0, RngState(1))
    assert op0.observed_count == 100
    a = generate_random_mask(10, 10, 0.8, RngState(2))
    b = generate_random_mask(10, 10, 0.8, RngState(2))
    c = generate_random_mask(10, 10, 0.8, RngState(3))
    assert a.observed_count == 20
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, c.mask)


def test_mask_generation_rejects_bad_fraction():
    for frac in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            generate_random_mask(4, 4, frac, RngState(0))


def test_all_missing_mask_rejected():
    with pytest.raises(ValueError):
        InpaintingOperator(np.zeros((3, 3), dtype=bool))


# ---------------------------------------------------------------------------
# Blur operator
# ---------------------------------------------------------------------------


def test_delta_kernel_forward_is_identity():
    x = _random_grid(6, 16, 16)
    op = BlurOperator(_delta_kernel(), (16, 16))
    assert np.max(np.abs(op.forward(x) - x)) < 1e-10


def test_uniform_kernel_preserves_constants():
    op = BlurOperator(np.full((3, 3), 1.0 / 9.0), (8, 8))
    out = op.forward(np.full((8, 8), 100.0))
    assert np.max(np.abs(out - 100.0)) < 1e-10


def test_delta_kernel_regularised_inverse_scales():
    # denominator 1 + epsilon sigma^2 = 1.02 everywhere
    op = BlurOperator(_delta_kernel(), (8, 8), epsilon=0.02, sigma_n=1.0)
    y = _random_grid(7, 8, 8)
    assert np.max(np.abs(op.pseudoinverse(y) - y / 1.02)) < 1e-12


def test_unregularised_inverse_round_trip_on_invertible_kernel():
    # taps chosen so the 1-D spectrum 0.6 + 0.4 cos stays strictly positive
    taps = np.array([0.2, 0.6, 0.2])
    kernel = np.outer(taps, taps)
    x = _random_grid(8, 32, 32)
    op = BlurOperator(kernel, (32, 32))
    assert np.max(np.abs(op.pseudoinverse(op.forward(x)) - x)) < 1e-8


def test_tikhonov_damping_is_monotone_in_epsilon():
    kernel = generate_scenario_kernel(2)
    y = _random_grid(9, 32, 32)
    norms = []
    for eps in (1e-4, 1e-3, 1e-2, 1e-1):
        op = BlurOperator(kernel, (32, 32), epsilon=eps, sigma_n=2.0)
        norms.append(float(np.linalg.norm(op.pseudoinverse(y))))
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_spectral_inverse_flat_spectrum_invariant():
    spectrum = np.exp(1j * RngState(10).uniforms(64).reshape(8, 8) * 2 * np.pi)  # |.| = 1
    inv = SpectralInverse(spectrum, epsilon=0.5, sigma_n=2.0)  # weight = 2.0
    assert np.allclose(inv.g_tilde, np.conj(spectrum) / 3.0, atol=1e-14)


def test_forward_only_operator_tolerates_spectral_zeros():
    # the 5-tap binomial kernel has an exact zero at Nyquist on even sizes
    op = BlurOperator(generate_scenario_kernel(4), (16, 16))
    op.forward(np.ones((16, 16)))
    with pytest.raises(ValueError, match="undefined"):
        _ = op.inverse


def test_blur_operator_validates_kernel():
    with pytest.raises(ValueError, match="odd"):
        BlurOperator(np.full((2, 2), 0.25), (8, 8))
    with pytest.raises(ValueError, match="sum"):
        BlurOperator(np.full((3, 3), 1.0), (8, 8))


def test_kernel_spectrum_centres_delta_at_ones():
    spec = kernel_spectrum(_delta_kernel(5), (12, 12))
    assert np.max(np.abs(spec - 1.0)) < 1e-12


# ---------------------------------------------------------------------------
# Scenario kernels
# ---------------------------------------------------------------------------


def test_scenario_kernels_sum_to_one_and_are_symmetric():
    for sid in (1, 2, 3, 4):
        k = generate_scenario_kernel(sid)
        assert abs(k.sum() - 1.0) < 1e-12
        assert np.array_equal(k, k[::-1, ::-1])


def test_scenario_1_inverse_quadratic_profile():
    k = generate_scenario_kernel(1)
    assert k.shape == (15, 15)
    unnorm = k / k[7, 7]  # origin back to 1
    assert unnorm[7, 8] == pytest.approx(0.5, rel=1e-12)
    assert unnorm[8, 7] == pytest.approx(0.5, rel=1e-12)
    assert unnorm[0, 0] == pytest.approx(1.0 / 99.0, rel=1e-12)


def test_scenario_3_uniform():
    k = generate_scenario_kernel(3)
    assert k.shape == (9, 9)
    assert np.allclose(k, 1.0 / 81.0, atol=1e-15)


def test_scenario_4_binomial():
    k = generate_scenario_kernel(4)
    assert k.shape == (5, 5)
    assert k[2, 2] == pytest.approx(36.0 / 256.0, rel=0, abs=0)
    assert k[0, 0] == pytest.approx(1.0 / 256.0, rel=0, abs=0)


def test_scenario_noise_table():
    assert SCENARIO_NOISE_VARIANCE == {1: 2.0, 2: 8.0, 3: None, 4: 49.0}


def test_unknown_scenario_rejected():
    with pytest.raises(ValueError):
        generate_scenario_kernel(5)
