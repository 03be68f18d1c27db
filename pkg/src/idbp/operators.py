"""Degradation operators: masking, circular blur, and their pseudoinverses.

Both operator families expose the same surface:

* ``forward(x)``        -- the degradation H x
* ``pseudoinverse(y)``  -- H+ y (exact transpose for masks, Tikhonov-
                           regularised inverse filter for blur)
* ``project_null(x)``   -- Q x = x - H+ H x, the component invisible to H

Masks use pure element selection, so their projection algebra (H H+ = I on
observations, Q idempotent, row/null orthogonality) holds bit-exactly.
Blur runs in the frequency domain with circular boundaries; its
pseudoinverse is only approximate, with a regularisation weight
``epsilon * sigma_n**2`` added to the squared kernel spectrum.
"""

from __future__ import annotations

import numpy as np

from .grid import as_grid, require_same_shape
from .rng import RngState

# ---------------------------------------------------------------------------
# Spectral engine
# ---------------------------------------------------------------------------


def fft2(x: np.ndarray) -> np.ndarray:
    """2-D DFT on any rectangular size (mixed radix via numpy.fft)."""
    return np.fft.fft2(x)


def ifft2(x: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT; inverse of :func:`fft2` to ~1e-15 relative."""
    return np.fft.ifft2(x)


def kernel_spectrum(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """DFT of a small kernel zero-padded to `shape` and centred at index (0, 0).

    The circular shift puts the kernel origin at the top-left corner so a
    delta kernel maps to the all-ones spectrum.
    """
    kh, kw = kernel.shape
    height, width = shape
    if kh > height or kw > width:
        raise ValueError(f"kernel {kernel.shape} larger than image {shape}")
    padded = np.zeros(shape)
    padded[:kh, :kw] = kernel
    padded = np.roll(padded, shift=(-(kh // 2), -(kw // 2)), axis=(0, 1))
    return fft2(padded)


def circular_convolve(x: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    """Periodic-boundary convolution by a precomputed kernel spectrum."""
    return np.real(ifft2(fft2(x) * spectrum))


# ---------------------------------------------------------------------------
# Inpainting
# ---------------------------------------------------------------------------


class InpaintingOperator:
    """Row selection of the identity: keeps the pixels where `mask` is True.

    Observations are carried as full grids with unobserved entries zero,
    which makes H+ (zero-padding transpose) and H coincide as maps on full
    grids and keeps every projection an exact element copy.
    """

    def __init__(self, mask) -> None:
        mask = np.ascontiguousarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
        if not mask.any():
            raise ValueError("mask observes no pixels")
        self.mask = mask
        self.mask.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def observed_count(self) -> int:
        return int(self.mask.sum())

    def forward(self, x) -> np.ndarray:
        x = as_grid(x)
        require_same_shape(x, self.mask)
        return np.where(self.mask, x, 0.0)

    def pseudoinverse(self, y) -> np.ndarray:
        y = as_grid(y)
        require_same_shape(y, self.mask)
        return np.where(self.mask, y, 0.0)

    def project_null(self, x) -> np.ndarray:
        x = as_grid(x)
        require_same_shape(x, self.mask)
        return np.where(self.mask, 0.0, x)


def generate_random_mask(
    height: int, width: int, missing_fraction: float, rng: RngState
) -> InpaintingOperator:
    """Mask with exactly round(fraction * n) missing pixels, chosen by a
    seeded partial Fisher-Yates shuffle."""
    if not 0.0 <= missing_fraction < 1.0:
        raise ValueError("missing_fraction must lie in [0, 1)")
    n = height * width
    k = int(missing_fraction * n + 0.5)
    missing = rng.shuffled_prefix(n, k)
    mask = np.ones(n, dtype=bool)
    mask[missing] = False
    return InpaintingOperator(mask.reshape(height, width))


# ---------------------------------------------------------------------------
# Circular blur
# ---------------------------------------------------------------------------


class SpectralInverse:
    """Regularised inverse filter conj(F{h}) / (|F{h}|^2 + epsilon * sigma_n^2)."""

    def __init__(self, spectrum: np.ndarray, epsilon: float, sigma_n: float) -> None:
        if epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")
        self.epsilon = float(epsilon)
        self.sigma_n = float(sigma_n)
        denom = np.abs(spectrum) ** 2 + self.epsilon * self.sigma_n**2
        if np.any(denom == 0.0):
            raise ValueError(
                "kernel spectrum has zeros and regularisation weight is zero; "
                "the inverse filter is undefined"
            )
        self.g_tilde = np.conj(spectrum) / denom
        self.g_tilde.setflags(write=False)


class BlurOperator:
    """Circular shift-invariant blur on a fixed grid shape.

    The kernel spectrum is precomputed at construction.  The regularised
    inverse filter and its product with the spectrum (used by the
    null-space projector) are built on first use, so a forward-only
    operator never requires an invertible spectrum; the lazy fill is
    idempotent and the instance is otherwise immutable.
    """

    def __init__(self, kernel, shape: tuple[int, int], epsilon: float = 0.0, sigma_n: float = 0.0) -> None:
        kernel = np.ascontiguousarray(kernel, dtype=np.float64)
        if kernel.ndim != 2:
            raise ValueError("kernel must be 2-D")
        if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError(f"kernel dimensions must be odd, got {kernel.shape}")
        total = float(kernel.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"kernel must sum to 1, got {total!r}")
        if epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")
        self.kernel = kernel
        self.kernel.setflags(write=False)
        self.shape = (int(shape[0]), int(shape[1]))
        self.epsilon = float(epsilon)
        self.sigma_n = float(sigma_n)
        self.spectrum = kernel_spectrum(kernel, self.shape)
        self.spectrum.setflags(write=False)
        self._inverse: SpectralInverse | None = None
        self._null_filter: np.ndarray | None = None

    @property
    def inverse(self) -> SpectralInverse:
        if self._inverse is None:
            self._inverse = SpectralInverse(self.spectrum, self.epsilon, self.sigma_n)
        return self._inverse

    def with_epsilon(self, epsilon: float) -> "BlurOperator":
        """Same blur with a different regularisation weight."""
        return BlurOperator(self.kernel, self.shape, epsilon=epsilon, sigma_n=self.sigma_n)

    def _check(self, x) -> np.ndarray:
        x = as_grid(x)
        if x.shape != self.shape:
            raise ValueError(f"shape mismatch: {x.shape} vs operator {self.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        return circular_convolve(self._check(x), self.spectrum)

    def pseudoinverse(self, y) -> np.ndarray:
        return circular_convolve(self._check(y), self.inverse.g_tilde)

    def project_null(self, x) -> np.ndarray:
        x = self._check(x)
        if self._null_filter is None:
            null_filter = self.inverse.g_tilde * self.spectrum
            null_filter.setflags(write=False)
            self._null_filter = null_filter
        return x - circular_convolve(x, self._null_filter)


# ---------------------------------------------------------------------------
# Benchmark blur scenarios
# ---------------------------------------------------------------------------

# Scenario id -> noise variance; None marks per-image calibration to BSNR 40 dB.
SCENARIO_NOISE_VARIANCE: dict[int, float | None] = {1: 2.0, 2: 8.0, 3: None, 4: 49.0}


def generate_scenario_kernel(scenario_id: int) -> np.ndarray:
    """Blur kernel for benchmark scenarios 1-4, normalised to unit sum.

    Scenarios 1-2 use 1 / (1 + x1^2 + x2^2) on the 15x15 grid x1, x2 in
    -7..7 (the benchmark-literature convention; the bare inverse square sum
    would be singular at the origin).  Scenario 3 is a 9x9 box, scenario 4
    the separable [1,4,6,4,1] outer product over 256.
    """
    if scenario_id in (1, 2):
        coords = np.arange(-7, 8, dtype=np.float64)
        x1, x2 = np.meshgrid(coords, coords, indexing="ij")
        kernel = 1.0 / (1.0 + x1**2 + x2**2)
    elif scenario_id == 3:
        kernel = np.ones((9, 9))
    elif scenario_id == 4:
        taps = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
        kernel = np.outer(taps, taps) / 256.0
    else:
        raise ValueError(f"unknown scenario id {scenario_id} (expected 1-4)")
    return kernel / kernel.sum()
