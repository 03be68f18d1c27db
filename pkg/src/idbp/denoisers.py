"""Pluggable denoising operators D(z; sigma).

A denoiser is a callable mapping ``(z, sigma) -> denoised z`` for a 2-D
grid and a nonnegative noise level.  All native kinds are deterministic,
translation-equivariant in intensity, and return the input unchanged at
sigma == 0.  Two synthetic "oracle" kinds with known contraction and
boundedness constants exist purely to exercise the solver guarantees, and
an external-process bridge lets any loose executable act as the denoiser.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import as_grid
from .rng import RngState

# ---------------------------------------------------------------------------
# Native denoisers
# ---------------------------------------------------------------------------


class MedianDenoiser:
    """Sliding-window median with edge-replicated borders."""

    kind = "median"

    def __init__(self, window: int = 3) -> None:
        if window < 1 or window % 2 == 0:
            raise ValueError("window must be odd and positive")
        self.window = window

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        if sigma == 0:
            return z.copy()
        r = self.window // 2
        padded = np.pad(z, r, mode="edge")
        patches = sliding_window_view(padded, (self.window, self.window))
        return np.median(patches, axis=(2, 3))


class GaussianDenoiser:
    """Separable Gaussian smoothing with kernel std sigma / 20, truncated at 3 std.

    Deliberately weak; useful as a cheap baseline.
    """

    kind = "gaussian"

    def __init__(self, width_factor: float = 1.0 / 20.0) -> None:
        if width_factor <= 0:
            raise ValueError("width_factor must be positive")
        self.width_factor = width_factor

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        if sigma == 0:
            return z.copy()
        std = sigma * self.width_factor
        radius = max(1, int(np.ceil(3.0 * std)))
        taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / std) ** 2)
        taps /= taps.sum()
        return _separable_convolve(z, taps)


def _separable_convolve(z: np.ndarray, taps: np.ndarray) -> np.ndarray:
    r = taps.size // 2
    padded = np.pad(z, ((r, r), (0, 0)), mode="reflect")
    z = sliding_window_view(padded, taps.size, axis=0) @ taps
    padded = np.pad(z, ((0, 0), (r, r)), mode="reflect")
    return sliding_window_view(padded, taps.size, axis=1) @ taps


class DctDenoiser:
    """Sliding-patch DCT hard thresholding with full-overlap uniform aggregation.

    Every patch is transformed by the orthonormal 2-D DCT, AC coefficients
    with magnitude below ``threshold_factor * sigma`` are zeroed (the DC
    term always survives, which preserves flat regions and intensity
    shifts), and overlapping reconstructions are averaged.
    """

    kind = "dct_threshold"

    def __init__(self, patch: int = 8, threshold_factor: float = 3.0) -> None:
        if patch < 2:
            raise ValueError("patch must be at least 2")
        if threshold_factor < 0:
            raise ValueError("threshold_factor must be nonnegative")
        self.patch = patch
        self.threshold_factor = threshold_factor
        self._basis = _dct_matrix(patch)

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        if sigma == 0:
            return z.copy()
        p = self.patch
        if z.shape[0] < p or z.shape[1] < p:
            raise ValueError(f"image {z.shape} smaller than patch {p}x{p}")
        basis = self._basis
        patches = sliding_window_view(z, (p, p))
        coeffs = np.einsum("ab,ijbc,dc->ijad", basis, patches, basis, optimize=True)
        keep = np.abs(coeffs) > self.threshold_factor * sigma
        keep[:, :, 0, 0] = True
        coeffs *= keep
        recon = np.einsum("ba,ijbc,cd->ijad", basis, coeffs, basis, optimize=True)
        out = np.zeros_like(z)
        weight = np.zeros_like(z)
        rows, cols = recon.shape[:2]
        for di in range(p):
            for dj in range(p):
                out[di : di + rows, dj : dj + cols] += recon[:, :, di, dj]
                weight[di : di + rows, dj : dj + cols] += 1.0
        return out / weight


def _dct_matrix(size: int) -> np.ndarray:
    j = np.arange(size)
    basis = np.cos(np.pi * (2 * j[None, :] + 1) * j[:, None] / (2 * size)) * np.sqrt(2.0 / size)
    basis[0, :] = 1.0 / np.sqrt(size)
    return basis


class NlmDenoiser:
    """Non-local means: 7x7 patches compared over a 21x21 search window.

    Weights follow exp(-max(d2 - 2 sigma^2, 0) / h^2) with bandwidth
    h = 0.6 sigma, where d2 is the mean squared patch difference.  Cost
    grows with the squared search radius, so prefer small images in tests.
    """

    kind = "nlm"

    def __init__(self, patch: int = 7, search: int = 21, h_factor: float = 0.6) -> None:
        if patch % 2 == 0 or search % 2 == 0:
            raise ValueError("patch and search sizes must be odd")
        if h_factor <= 0:
            raise ValueError("h_factor must be positive")
        self.patch = patch
        self.search = search
        self.h_factor = h_factor

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        if sigma == 0:
            return z.copy()
        radius = self.search // 2
        h2 = (self.h_factor * sigma) ** 2
        noise_floor = 2.0 * sigma * sigma
        padded = np.pad(z, radius, mode="reflect")
        numerator = np.zeros_like(z)
        weight_sum = np.zeros_like(z)
        height, width = z.shape
        for di in range(-radius, radius + 1):
            for dj in range(-radius, radius + 1):
                shifted = padded[radius + di : radius + di + height, radius + dj : radius + dj + width]
                d2 = _box_mean((z - shifted) ** 2, self.patch)
                w = np.exp(-np.maximum(d2 - noise_floor, 0.0) / h2)
                numerator += w * shifted
                weight_sum += w
        return numerator / weight_sum


def _box_mean(a: np.ndarray, size: int) -> np.ndarray:
    r = size // 2
    padded = np.pad(a, r, mode="reflect")
    return sliding_window_view(padded, (size, size)).mean(axis=(2, 3))


class ShrinkDenoiser:
    """Linear shrink z / (1 + gamma * sigma^2): the proximal map of the
    quadratic prior (gamma / 2) ||x||^2.  Mainly a convex test oracle."""

    kind = "shrink"

    def __init__(self, gamma: float) -> None:
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.gamma = gamma

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        if sigma == 0:
            return z.copy()
        return z / (1.0 + self.gamma * sigma * sigma)


# ---------------------------------------------------------------------------
# Oracle denoisers (ground truth in hand, constants known exactly)
# ---------------------------------------------------------------------------


class OracleLinearDenoiser:
    """Affine pull toward the known truth: alpha * truth + (1 - alpha) * z.

    Its null-space contraction constant is exactly 1 - alpha for every
    operator, which makes solver convergence rates predictable.
    """

    kind = "oracle_linear"

    def __init__(self, alpha: float, truth) -> None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        self.alpha = alpha
        self.truth = as_grid(truth)

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        return self.alpha * self.truth + (1.0 - self.alpha) * z


class OracleBoundedDenoiser:
    """Step toward the truth with Euclidean length capped at sigma * bound.

    Satisfies the bounded-denoiser inequality ||D(z) - z|| <= sigma * bound
    by construction, including D(z; 0) = z.
    """

    kind = "oracle_bounded"

    def __init__(self, alpha: float, bound: float, truth) -> None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if bound < 0:
            raise ValueError("bound must be nonnegative")
        self.alpha = alpha
        self.bound = bound
        self.truth = as_grid(truth)

    def __call__(self, z, sigma: float) -> np.ndarray:
        z = as_grid(z)
        step = self.truth - z
        distance = float(np.linalg.norm(step))
        if distance == 0.0 or sigma == 0.0:
            return z.copy()
        scale = min(self.alpha, sigma * self.bound / distance)
        return z + scale * step


# ---------------------------------------------------------------------------
# External-process bridge
# ---------------------------------------------------------------------------


class ExternalDenoiserError(RuntimeError):
    """Spawn failure, timeout, or wire-protocol violation in the bridge."""


def _format_sigma(sigma: float) -> str:
    sigma = float(sigma)
    return str(int(sigma)) if sigma.is_integer() else repr(sigma)


def external_denoise(command, z, sigma: float, timeout: float = 300.0) -> np.ndarray:
    """Run one denoising pass in a child process.

    Wire protocol: the child receives the ASCII header line
    ``IDBP1 <height> <width> <sigma>\\n`` followed by height * width
    little-endian float32 pixels on stdin, and must answer with exactly
    height * width little-endian float32 pixels on stdout.
    """
    z = as_grid(z)
    height, width = z.shape
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if not argv:
        raise ExternalDenoiserError("empty external denoiser command")
    header = f"IDBP1 {height} {width} {_format_sigma(sigma)}\n".encode("ascii")
    payload = z.astype("<f4").tobytes()
    try:
        proc = subprocess.run(
            argv,
            input=header + payload,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout,
        )
    except FileNotFoundError as exc:
        raise ExternalDenoiserError(f"cannot spawn {argv[0]!r}: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ExternalDenoiserError(f"external denoiser timed out after {timeout} s") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", "replace")[-500:]
        raise ExternalDenoiserError(
            f"external denoiser exited with status {proc.returncode}: {tail}"
        )
    expected = height * width * 4
    if len(proc.stdout) != expected:
        raise ExternalDenoiserError(
            f"protocol violation: expected {expected} payload bytes, received {len(proc.stdout)}"
        )
    out = np.frombuffer(proc.stdout, dtype="<f4").astype(np.float64).reshape(height, width)
    if not np.all(np.isfinite(out)):
        raise ExternalDenoiserError("external denoiser returned non-finite values")
    return out


class ExternalDenoiser:
    """Denoiser backed by a child process speaking the IDBP1 wire protocol."""

    kind = "external"

    def __init__(self, command, timeout: float = 300.0) -> None:
        self.command = command
        self.timeout = timeout

    def __call__(self, z, sigma: float) -> np.ndarray:
        return external_denoise(self.command, z, sigma, timeout=self.timeout)


# ---------------------------------------------------------------------------
# Construction and diagnostics
# ---------------------------------------------------------------------------

_KINDS = {
    "median": MedianDenoiser,
    "gaussian": GaussianDenoiser,
    "nlm": NlmDenoiser,
    "dct_threshold": DctDenoiser,
    "shrink": ShrinkDenoiser,
    "oracle_linear": OracleLinearDenoiser,
    "oracle_bounded": OracleBoundedDenoiser,
    "external": ExternalDenoiser,
}


def build_denoiser(kind: str, **params):
    """Instantiate a denoiser by kind name; see _KINDS for the vocabulary."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown denoiser kind {kind!r}; choose from {sorted(_KINDS)}") from None
    return cls(**params)


@dataclass
class DenoiserDiagnostics:
    """Empirical lower bounds for the boundedness and contraction constants.

    ``bound_estimate_B`` is the largest observed ||D(z) - z|| / sigma;
    ``contraction_estimate_K`` the largest observed Lipschitz ratio of the
    null-space-projected denoiser.  True constants can only be larger.
    """

    bound_estimate_B: float
    contraction_estimate_K: float


def estimate_conditions(
    denoiser, operator, sample_images, sigma: float, rng: RngState
) -> DenoiserDiagnostics:
    """Probe a denoiser on sample images for its guarantee constants.

    Pairs combine the samples with each other and with null-space-only
    perturbations of themselves; the latter make the contraction estimate
    tight for denoisers whose Lipschitz worst case lies in the null space.
    """
    samples = [as_grid(s) for s in sample_images]
    if not samples:
        raise ValueError("need at least one sample image")
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    denoised = [denoiser(s, sigma) for s in samples]
    bound = max(float(np.linalg.norm(d - s)) / sigma for s, d in zip(samples, denoised))

    pairs = [(i, j) for i in range(len(samples)) for j in range(i + 1, len(samples))]
    contraction = 0.0
    for i, j in pairs:
        gap = float(np.linalg.norm(samples[i] - samples[j]))
        if gap == 0.0:
            continue
        null_gap = float(
            np.linalg.norm(operator.project_null(denoised[i]) - operator.project_null(denoised[j]))
        )
        contraction = max(contraction, null_gap / gap)
    for base, base_denoised in zip(samples, denoised):
        bump = operator.project_null(sigma * rng.gaussians(base.size).reshape(base.shape))
        gap = float(np.linalg.norm(bump))
        if gap == 0.0:
            continue
        shifted = denoiser(base + bump, sigma)
        null_gap = float(
            np.linalg.norm(operator.project_null(shifted) - operator.project_null(base_denoised))
        )
        contraction = max(contraction, null_gap / gap)
    return DenoiserDiagnostics(bound_estimate_B=bound, contraction_estimate_K=contraction)
