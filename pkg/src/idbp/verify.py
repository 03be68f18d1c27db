"""Self-contained numerical verification battery.

Each check re-derives an expected behaviour independently (exact algebra,
dense solves, direct DFT sums, closed-form decay rates) and compares the
library against it.  The CLI `verify` subcommand runs the battery and
reports one PASS/FAIL line per check.
"""

from __future__ import annotations

import numpy as np

from .denoisers import DctDenoiser, OracleLinearDenoiser, ShrinkDenoiser
from .grid import add_gaussian_noise, psnr
from .operators import BlurOperator, fft2, generate_random_mask, generate_scenario_kernel, ifft2
from .rng import RngState
from .scenes import synthetic_scene
from .solvers import (
    IdbpConfig,
    PnpConfig,
    condition_ratio,
    idbp_auto_tuned,
    idbp_run,
    improved_measurements,
    median_initialize,
    pnp_run,
)


def _random_image(rng: RngState, height: int, width: int) -> np.ndarray:
    return rng.gaussians(height * width).reshape(height, width) * 40.0 + 128.0


def check_projection_algebra(instances: int = 200) -> tuple[bool, str]:
    """Mask projections must satisfy their operator identities bit-exactly."""
    rng = RngState(1000)
    for i in range(instances):
        frac = 0.1 + 0.8 * rng.uniforms(1)[0]
        op = generate_random_mask(16, 16, float(frac), rng)
        x = _random_image(rng, 16, 16)
        noise = add_gaussian_noise(np.zeros((16, 16)), 5.0, rng)
        y = op.forward(x + noise)
        if not np.array_equal(op.forward(op.pseudoinverse(y)), y):
            return False, f"H H+ != I on instance {i}"
        q = op.project_null(x)
        if not np.array_equal(op.project_null(q), q):
            return False, f"Q not idempotent on instance {i}"
        den = OracleLinearDenoiser(0.5, x)
        cfg = IdbpConfig(delta=1.0, iterations=3)
        states = []
        idbp_run(op, y, 5.0, den, cfg, op.pseudoinverse(y),
                 observer=lambda k, xt, yt: states.append((xt, yt)))
        for xt, yt in states:
            if not np.array_equal(op.forward(yt), y):
                return False, f"constraint H y_tilde = y broken on instance {i}"
            if not np.array_equal(op.project_null(yt), op.project_null(xt)):
                return False, f"null-space consistency broken on instance {i}"
    return True, f"{instances} random instances"


def check_condition_identity() -> tuple[bool, str]:
    """Inpainting feasibility ratio equals ((sigma_n + delta) / sigma_n)^2."""
    rng = RngState(2000)
    worst = 0.0
    for _ in range(50):
        op = generate_random_mask(16, 16, 0.6, rng)
        x = _random_image(rng, 16, 16)
        y = op.forward(_random_image(rng, 16, 16))
        for delta in (0.0, 1.5, 7.0):
            sigma_n = 4.0
            expected = (sigma_n + delta) ** 2 / sigma_n**2
            got = condition_ratio(op, y, x, sigma_n, delta)
            worst = max(worst, abs(got - expected))
    return worst <= 1e-12, f"max deviation {worst:.3e}"


def _direct_dft2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    wh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ww = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return wh @ x @ ww.T


def check_fft_engine() -> tuple[bool, str]:
    rng = RngState(3000)
    for size in (15, 64, 100, 256):
        x = _random_image(rng, size, size)
        spectrum = fft2(x)
        back = ifft2(spectrum)
        if np.max(np.abs(back - x)) / np.max(np.abs(x)) > 1e-9:
            return False, f"round trip failed at {size}"
        energy_space = float(np.sum(x * x))
        energy_freq = float(np.sum(np.abs(spectrum) ** 2)) / x.size
        if abs(energy_space - energy_freq) / energy_space > 1e-9:
            return False, f"Parseval failed at {size}"
        kernel = generate_scenario_kernel(4)
        op = BlurOperator(kernel, x.shape)
        conv = op.forward(x)
        if np.max(np.abs(fft2(conv) - op.spectrum * spectrum)) > 1e-9 * np.max(np.abs(spectrum)):
            return False, f"convolution theorem failed at {size}"
    for size in (8, 15, 32):
        x = _random_image(rng, size, size)
        if np.max(np.abs(fft2(x) - _direct_dft2(x))) > 1e-9 * np.max(np.abs(fft2(x))):
            return False, f"direct DFT mismatch at {size}"
    return True, "sizes 15/64/100/256 plus direct DFT at <=32"


def check_oracle_decay(alpha: float = 0.5) -> tuple[bool, str]:
    """Projected-iterate distance to the ideal measurements contracts by
    exactly (1 - alpha) per iteration for the linear oracle denoiser."""
    rng = RngState(4000)
    truth = _random_image(rng, 32, 32)
    op = generate_random_mask(32, 32, 0.8, rng)
    noise = add_gaussian_noise(np.zeros((32, 32)), 10.0, rng)
    y = op.forward(truth + noise)
    target = improved_measurements(truth, op, op.forward(noise))
    init = median_initialize(op, y)
    distances = []
    idbp_run(
        op, y, 10.0, OracleLinearDenoiser(alpha, truth),
        IdbpConfig(delta=0.0, iterations=20), init,
        observer=lambda k, xt, yt: distances.append(float(np.linalg.norm(yt - target))),
    )
    base = float(np.linalg.norm(init - target))
    expected = [base * (1 - alpha) ** k for k in range(1, 21)]
    rel = max(abs(d - e) / e for d, e in zip(distances, expected))
    monotone = all(a > b for a, b in zip([base] + distances, distances))
    return rel <= 1e-9 and monotone, f"max relative deviation {rel:.3e}"


def check_error_bound(alpha: float = 0.5) -> tuple[bool, str]:
    """Iterate error stays below the contraction + boundedness budget."""
    rng = RngState(5000)
    truth = _random_image(rng, 32, 32)
    op = generate_random_mask(32, 32, 0.8, rng)
    noise = add_gaussian_noise(np.zeros((32, 32)), 10.0, rng)
    y = op.forward(truth + noise)
    target = improved_measurements(truth, op, op.forward(noise))
    init = median_initialize(op, y)
    sigma = 10.0
    contraction = 1.0 - alpha
    pinv_noise = float(np.linalg.norm(op.pseudoinverse(op.forward(noise))))
    iterates, bound_seen, prev = [], [0.0], [init.copy()]

    def watch(k, xt, yt):
        bound_seen[0] = max(bound_seen[0], float(np.linalg.norm(xt - prev[0])) / sigma)
        iterates.append(xt.copy())
        prev[0] = yt.copy()

    idbp_run(op, y, sigma, OracleLinearDenoiser(alpha, truth),
             IdbpConfig(delta=0.0, iterations=25), init, observer=watch)
    base = float(np.linalg.norm(init - target))
    for k in range(1, len(iterates)):
        lhs = float(np.linalg.norm(iterates[k] - truth))
        budget = (
            contraction**k * base
            + pinv_noise / (1 - contraction)
            + (1 / (1 - contraction) + 5) * sigma * bound_seen[0]
        )
        if lhs > budget + 1e-9:
            return False, f"bound violated at iteration {k}"
    return True, f"25 iterations, measured bound constant {bound_seen[0]:.2f}"


def check_convex_equivalence() -> tuple[bool, str]:
    """Both solvers with the quadratic-prior shrink denoiser must land on
    the corresponding dense linear-system solutions."""
    rng = RngState(6000)
    truth = _random_image(rng, 16, 16)
    op = generate_random_mask(16, 16, 0.5, rng)
    sigma_n = 10.0
    noise = add_gaussian_noise(np.zeros((16, 16)), sigma_n, rng)
    y = op.forward(truth + noise)
    gamma = 0.01
    shrink = ShrinkDenoiser(gamma)
    mask_flat = op.mask.ravel().astype(float)
    gram = np.diag(mask_flat)
    rhs = (y * op.mask).ravel()

    x_star = np.linalg.solve(gram + gamma * sigma_n**2 * np.eye(256), rhs).reshape(16, 16)
    est, _ = pnp_run(op, y, sigma_n, shrink,
                     PnpConfig(beta=1.0, lam=0.05, iterations=400), op.pseudoinverse(y))
    pnp_err = float(np.max(np.abs(est - x_star)))

    shrink_factor = 1.0 / (1.0 + gamma * sigma_n**2)
    system = np.eye(256) - shrink_factor * (np.eye(256) - gram)
    x_lin = np.linalg.solve(system, shrink_factor * rhs).reshape(16, 16)
    est, _ = idbp_run(op, y, sigma_n, shrink,
                      IdbpConfig(delta=0.0, iterations=120), op.pseudoinverse(y))
    idbp_err = float(np.max(np.abs(est - x_lin)))
    ok = pnp_err <= 1e-6 and idbp_err <= 1e-8
    return ok, f"pnp err {pnp_err:.2e}, idbp err {idbp_err:.2e}"


def check_auto_tuning() -> tuple[bool, str]:
    """A deliberately small starting weight must trigger restarts, and the
    accepted pass must clear the margin at every checked iteration."""
    scene = synthetic_scene(64, 64)
    kernel = generate_scenario_kernel(1)
    sigma_n = float(np.sqrt(2.0))
    blurred = BlurOperator(kernel, scene.shape).forward(scene)
    y = add_gaussian_noise(blurred, sigma_n, RngState(7000))
    op = BlurOperator(kernel, scene.shape, epsilon=1e-5, sigma_n=sigma_n)
    cfg = IdbpConfig(delta=5.0, iterations=12, epsilon=1e-5,
                     condition_margin_tau=3.0, epsilon_increment=5e-4)
    _, trace = idbp_auto_tuned(op, y, sigma_n, DctDenoiser(), cfg, init=y, ground_truth=scene)
    final = trace.final_pass()
    margins_ok = all(r.condition_ratio >= cfg.condition_margin_tau for r in final if r.iteration > 1)
    return trace.restart_count >= 1 and margins_ok, (
        f"{trace.restart_count} restarts, final epsilon {final[0].epsilon:g}"
    )


def check_end_to_end_inpainting() -> tuple[bool, str]:
    """Noisy inpainting beats the median-fill baseline by a clear margin."""
    scene = synthetic_scene(128, 128)
    rng = RngState(8000)
    op = generate_random_mask(128, 128, 0.8, rng)
    y = op.forward(add_gaussian_noise(scene, 10.0, rng))
    init = median_initialize(op, y)
    est, _ = idbp_run(op, y, 10.0, DctDenoiser(),
                      IdbpConfig(delta=0.0, iterations=40), init)
    gain = psnr(scene, est) - psnr(scene, init)
    return gain >= 1.5, f"gain {gain:+.2f} dB over median fill"


ALL_CHECKS = [
    ("projection-algebra", check_projection_algebra),
    ("condition-identity", check_condition_identity),
    ("fft-engine", check_fft_engine),
    ("oracle-decay", check_oracle_decay),
    ("error-bound", check_error_bound),
    ("convex-equivalence", check_convex_equivalence),
    ("auto-tuning", check_auto_tuning),
    ("end-to-end-inpainting", check_end_to_end_inpainting),
]


def run_all(print_fn=print) -> bool:
    all_ok = True
    for name, check in ALL_CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # noqa: BLE001 - report, do not crash the battery
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        print_fn(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
