"""Inverse-problem restoration with pluggable denoisers.

Public surface re-exported here: image grid helpers and metrics, the
degradation operators, denoiser construction, and the three solvers.
"""

from .grid import MetricReport, add_gaussian_noise, as_grid, bsnr, isnr, psnr, sigma_for_bsnr
from .pgm import PgmFormatError, load_pgm, save_pgm
from .rng import RngState
from .operators import (
    BlurOperator,
    InpaintingOperator,
    SCENARIO_NOISE_VARIANCE,
    SpectralInverse,
    fft2,
    generate_random_mask,
    generate_scenario_kernel,
    ifft2,
)
from .denoisers import (
    DenoiserDiagnostics,
    ExternalDenoiserError,
    build_denoiser,
    estimate_conditions,
    external_denoise,
)
from .solvers import (
    IdbpConfig,
    IterationTrace,
    PnpConfig,
    TraceRecord,
    condition_ratio,
    idbp_auto_tuned,
    idbp_run,
    improved_measurements,
    median_initialize,
    pnp_run,
)

__all__ = [
    "MetricReport",
    "add_gaussian_noise",
    "as_grid",
    "bsnr",
    "isnr",
    "psnr",
    "sigma_for_bsnr",
    "PgmFormatError",
    "load_pgm",
    "save_pgm",
    "RngState",
    "BlurOperator",
    "InpaintingOperator",
    "SCENARIO_NOISE_VARIANCE",
    "SpectralInverse",
    "fft2",
    "generate_random_mask",
    "generate_scenario_kernel",
    "ifft2",
    "DenoiserDiagnostics",
    "ExternalDenoiserError",
    "build_denoiser",
    "estimate_conditions",
    "external_denoise",
    "IdbpConfig",
    "IterationTrace",
    "PnpConfig",
    "TraceRecord",
    "condition_ratio",
    "idbp_auto_tuned",
    "idbp_run",
    "improved_measurements",
    "median_initialize",
    "pnp_run",
]

__version__ = "0.1.0"
