"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured margin (visible with pytest -s / on failure).

Runtime-sensitive criteria state their budget in the test; the whole
module is expected to finish well inside it on commodity hardware.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from idbp.bench import ExperimentSpec, run_benchmark, run_single
from idbp.denoisers import DctDenoiser, OracleLinearDenoiser, ShrinkDenoiser, estimate_conditions
from idbp.grid import add_gaussian_noise, psnr
from idbp.operators import (
    BlurOperator,
    fft2,
    generate_random_mask,
    generate_scenario_kernel,
    ifft2,
)
from idbp.pgm import load_pgm
from idbp.rng import RngState
from idbp.scenes import synthetic_scene
from idbp.solvers import (
    IdbpConfig,
    PnpConfig,
    condition_ratio,
    idbp_auto_tuned,
    idbp_run,
    improved_measurements,
    median_initialize,
    pnp_run,
)


def _report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS  ({detail})")


def _noisy_inpainting(seed, size, fraction=0.8, sigma_n=10.0):
    rng = RngState(seed)
    truth = rng.gaussians(size * size).reshape(size, size) * 30 + 128
    op = generate_random_mask(size, size, fraction, rng)
    noise = add_gaussian_noise(np.zeros((size, size)), sigma_n, rng)
    y = op.forward(truth + noise)
    return truth, op, noise, y


# ---------------------------------------------------------------------------
# 1. Projection algebra, exact, 1000 instances, < 5 s
# ---------------------------------------------------------------------------


def test_criterion_1_projection_algebra_exact():
    start = time.time()
    rng = RngState(101)
    for instance in range(1000):
        fraction = 0.05 + 0.9 * float(rng.uniforms(1)[0])
        op = generate_random_mask(16, 16, fraction, rng)
        truth = rng.gaussians(256).reshape(16, 16) * 40 + 120
        y = op.forward(add_gaussian_noise(truth, 7.0, rng))
        assert np.array_equal(op.forward(op.pseudoinverse(y)), y)
        probe = rng.gaussians(256).reshape(16, 16) * 40
        q = op.project_null(probe)
        assert np.array_equal(op.project_null(q), q)

        iterates = []
        idbp_run(
            op, y, 7.0, OracleLinearDenoiser(0.5, truth),
            IdbpConfig(delta=1.0, iterations=2), op.pseudoinverse(y),
            observer=lambda k, xt, yt: iterates.append((xt, yt)),
        )
        for xt, yt in iterates:
            assert np.array_equal(op.forward(yt), y)
            assert np.array_equal(op.project_null(yt), op.project_null(xt))
    elapsed = time.time() - start
    assert elapsed < 5.0
    _report(1, f"1000 instances, all identities bit-exact, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Condition identity to 1e-12
# ---------------------------------------------------------------------------


def test_criterion_2_condition_identity():
    rng = RngState(202)
    worst = 0.0
    for _ in range(200):
        op = generate_random_mask(16, 16, float(rng.uniforms(1)[0] * 0.9), rng)
        y = op.forward(rng.gaussians(256).reshape(16, 16) * 50 + 110)
        x = rng.gaussians(256).reshape(16, 16) * 50 + 110
        sigma_n = 1.0 + float(rng.uniforms(1)[0] * 20)
        delta = float(rng.uniforms(1)[0] * 8)
        got = condition_ratio(op, y, x, sigma_n, delta)
        expected = (sigma_n + delta) ** 2 / sigma_n**2
        worst = max(worst, abs(got - expected))
        assert got == pytest.approx(expected, abs=1e-12)
        assert condition_ratio(op, y, x, sigma_n, 0.0) == pytest.approx(1.0, abs=1e-12)
    _report(2, f"200 instances, worst deviation {worst:.2e}")


# ---------------------------------------------------------------------------
# 3. Strict geometric decay of the projected iterates, < 10 s
# ---------------------------------------------------------------------------

# iteration counts keep the expected distances far above the float64
# subtraction noise floor so the 1e-9 relative check stays meaningful
_DECAY_ITERATIONS = {0.1: 40, 0.5: 20, 0.9: 5}


def test_criterion_3_oracle_decay():
    start = time.time()
    truth, op, noise, y = _noisy_inpainting(303, 32)
    target = improved_measurements(truth, op, op.forward(noise))
    init = median_initialize(op, y)
    base = float(np.linalg.norm(init - target))
    worst = 0.0
    for alpha, iterations in _DECAY_ITERATIONS.items():
        distances = []
        idbp_run(
            op, y, 10.0, OracleLinearDenoiser(alpha, truth),
            IdbpConfig(delta=0.0, iterations=iterations), init,
            observer=lambda k, xt, yt: distances.append(float(np.linalg.norm(yt - target))),
        )
        previous = base
        for k, dist in enumerate(distances, start=1):
            assert dist < previous, f"not strictly decreasing at alpha={alpha}, k={k}"
            expected = base * (1.0 - alpha) ** k
            rel = abs(dist - expected) / expected
            worst = max(worst, rel)
            assert rel <= 1e-9, f"decay mismatch at alpha={alpha}, k={k}: rel={rel:.2e}"
            previous = dist
    elapsed = time.time() - start
    assert elapsed < 10.0
    _report(3, f"alphas 0.1/0.5/0.9, worst relative deviation {worst:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 4. Error bound with measured constants
# ---------------------------------------------------------------------------


def test_criterion_4_error_bound():
    truth, op, noise, y = _noisy_inpainting(404, 32)
    target = improved_measurements(truth, op, op.forward(noise))
    init = median_initialize(op, y)
    base = float(np.linalg.norm(init - target))
    pinv_noise = float(np.linalg.norm(op.pseudoinverse(op.forward(noise))))
    sigma = 10.0  # sigma_n + delta with delta = 0
    for alpha, iterations in _DECAY_ITERATIONS.items():
        denoiser = OracleLinearDenoiser(alpha, truth)
        probes = [init, target, truth]
        diag = estimate_conditions(denoiser, op, probes, sigma, RngState(405))
        contraction = diag.contraction_estimate_K
        assert contraction == pytest.approx(1.0 - alpha, abs=1e-10)

        iterates, bound, prev = [], [diag.bound_estimate_B], [init.copy()]

        def watch(k, xt, yt):
            bound[0] = max(bound[0], float(np.linalg.norm(xt - prev[0])) / sigma)
            iterates.append(xt.copy())
            prev[0] = yt.copy()

        idbp_run(op, y, sigma, denoiser, IdbpConfig(delta=0.0, iterations=iterations),
                 init, observer=watch)
        for k in range(1, len(iterates)):
            lhs = float(np.linalg.norm(iterates[k] - truth))
            budget = (
                contraction**k * base
                + pinv_noise / (1.0 - contraction)
                + (1.0 / (1.0 - contraction) + 5.0) * sigma * bound[0]
            )
            assert lhs <= budget + 1e-9, f"bound violated at alpha={alpha}, k={k}"
    _report(4, "bound held at every iteration for alphas 0.1/0.5/0.9")


# ---------------------------------------------------------------------------
# 5. Convex-oracle equivalence, < 30 s
# ---------------------------------------------------------------------------


def test_criterion_5_convex_oracle_equivalence():
    start = time.time()
    truth, op, noise, y = _noisy_inpainting(505, 16, fraction=0.5)
    gamma, sigma_n = 0.01, 10.0
    shrink = ShrinkDenoiser(gamma)
    n = truth.size
    mask_diag = np.diag(op.mask.ravel().astype(float))
    data_vec = (y * op.mask).ravel()

    # (a) ADMM lands on the quadratic-prior least-squares minimiser
    x_star = np.linalg.solve(mask_diag + gamma * sigma_n**2 * np.eye(n), data_vec).reshape(16, 16)
    est_pnp, _ = pnp_run(op, y, sigma_n, shrink,
                         PnpConfig(beta=1.0, lam=0.05, iterations=400), op.pseudoinverse(y))
    err_pnp = float(np.max(np.abs(est_pnp - x_star)))
    assert err_pnp <= 1e-6

    # (b) the projected iteration solves its own fixed-point system
    factor = 1.0 / (1.0 + gamma * sigma_n**2)
    system = np.eye(n) - factor * (np.eye(n) - mask_diag)
    x_fix = np.linalg.solve(system, factor * data_vec).reshape(16, 16)
    est_idbp, _ = idbp_run(op, y, sigma_n, shrink,
                           IdbpConfig(delta=0.0, iterations=120), op.pseudoinverse(y))
    err_idbp = float(np.max(np.abs(est_idbp - x_fix)))
    assert err_idbp <= 1e-8

    # both iterations settle numerically
    for runner, cfg in (
        (lambda obs: pnp_run(op, y, sigma_n, shrink, PnpConfig(beta=1.0, lam=0.05, iterations=400),
                             op.pseudoinverse(y), observer=lambda k, x, v, u: obs(x)), None),
        (lambda obs: idbp_run(op, y, sigma_n, shrink, IdbpConfig(delta=0.0, iterations=120),
                              op.pseudoinverse(y), observer=lambda k, xt, yt: obs(xt)), None),
    ):
        last, gap = {}, [np.inf]

        def track(x):
            if "x" in last:
                gap[0] = float(np.linalg.norm(x - last["x"]))
            last["x"] = x

        runner(track)
        assert gap[0] < 1e-9
    elapsed = time.time() - start
    assert elapsed < 30.0
    _report(5, f"pnp err {err_pnp:.1e} <= 1e-6, idbp err {err_idbp:.1e} <= 1e-8, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 6. FFT engine
# ---------------------------------------------------------------------------


def _direct_dft2(x):
    h, w = x.shape
    wh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ww = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return wh @ x @ ww.T


def test_criterion_6_fft_engine():
    rng = RngState(606)
    kernel = generate_scenario_kernel(4)
    for size in (15, 64, 100, 256):
        x = rng.gaussians(size * size).reshape(size, size) * 45 + 125
        spectrum = fft2(x)
        assert np.max(np.abs(ifft2(spectrum) - x)) <= 1e-9 * np.max(np.abs(x))
        space = float(np.sum(x * x))
        freq = float(np.sum(np.abs(spectrum) ** 2)) / x.size
        assert abs(space - freq) <= 1e-9 * space
        op = BlurOperator(kernel, x.shape)
        lhs = fft2(op.forward(x))
        rhs = op.spectrum * spectrum
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))
    for size in (8, 15, 31, 32):
        x = rng.gaussians(size * size).reshape(size, size)
        want = _direct_dft2(x)
        assert np.max(np.abs(fft2(x) - want)) <= 1e-9 * np.max(np.abs(want))
    _report(6, "round trip, Parseval, convolution theorem at 15/64/100/256; DFT oracle <= 32")


# ---------------------------------------------------------------------------
# 7. End-to-end quality with the native patch denoiser, < 5 min per image
# ---------------------------------------------------------------------------


def test_criterion_7a_noisy_inpainting_beats_median_fill():
    start = time.time()
    scene = synthetic_scene(256, 256)
    spec = ExperimentSpec(task="inpaint", solver="idbp", denoiser="dct_threshold",
                          seed=707, mask_fraction=0.8, sigma_n=10.0)
    result = run_single(spec, scene, RngState(spec.seed))
    gain = result.psnr_out_db - result.psnr_in_db
    elapsed = time.time() - start
    assert gain >= 1.5, f"gain {gain:.2f} dB below 1.5 dB"
    assert elapsed < 300.0
    _report("7a", f"median fill {result.psnr_in_db:.2f} dB -> {result.psnr_out_db:.2f} dB "
                  f"(gain {gain:+.2f} dB), {elapsed:.1f}s")


def test_criterion_7b_scenario3_deblurring_isnr():
    start = time.time()
    scene = synthetic_scene(256, 256)
    spec = ExperimentSpec(task="deblur", solver="idbp", denoiser="dct_threshold",
                          seed=708, scenario=3)
    result = run_single(spec, scene, RngState(spec.seed))
    elapsed = time.time() - start
    assert result.isnr_db > 4.0, f"ISNR {result.isnr_db:.2f} dB below 4 dB"
    assert result.bsnr_db == pytest.approx(40.0, abs=1e-9)
    assert elapsed < 300.0
    _report("7b", f"scenario 3 ISNR {result.isnr_db:+.2f} dB at BSNR 40, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 8. Auto-tuning restarts out of a violating regularisation weight
# ---------------------------------------------------------------------------


def test_criterion_8_auto_tuning_restarts_and_margin():
    scene = synthetic_scene(128, 128)
    kernel = generate_scenario_kernel(1)
    sigma_n = float(np.sqrt(2.0))
    blurred = BlurOperator(kernel, scene.shape).forward(scene)
    y = add_gaussian_noise(blurred, sigma_n, RngState(808))
    operator = BlurOperator(kernel, scene.shape, epsilon=1e-5, sigma_n=sigma_n)
    config = IdbpConfig(delta=5.0, iterations=20, epsilon=1e-5,
                        condition_margin_tau=3.0, epsilon_increment=5e-4)
    _, trace = idbp_auto_tuned(operator, y, sigma_n, DctDenoiser(), config, init=y,
                               ground_truth=scene)
    assert trace.restart_count >= 1
    final = trace.final_pass()
    assert [r.iteration for r in final] == list(range(1, 21))
    checked = [r.condition_ratio for r in final if r.iteration > 1]
    assert all(ratio >= config.condition_margin_tau for ratio in checked)
    _report(8, f"{trace.restart_count} restarts, accepted pass min ratio "
               f"{min(checked):.2f} >= tau 3, final epsilon {final[0].epsilon:g}")


# ---------------------------------------------------------------------------
# 9. Optional external-denoiser parity on the classic corpus
# ---------------------------------------------------------------------------

_PARITY_TABLE_AVERAGE_DB = 27.48
_CORPUS_NAMES = ("cameraman", "house", "peppers", "lena", "barbara", "boat", "hill", "couple")


@pytest.mark.skipif(
    not (os.environ.get("IDBP_EXTERNAL_DENOISER") and os.environ.get("IDBP_CORPUS_DIR")),
    reason="parity run needs IDBP_EXTERNAL_DENOISER and IDBP_CORPUS_DIR",
)
def test_criterion_9_external_denoiser_parity():
    corpus_dir = Path(os.environ["IDBP_CORPUS_DIR"])
    corpus = []
    for name in _CORPUS_NAMES:
        path = corpus_dir / f"{name}.pgm"
        if not path.exists():
            pytest.skip(f"corpus image {path} missing")
        corpus.append((name, load_pgm(path)))
    spec = ExperimentSpec(
        task="inpaint", solver="idbp", denoiser="external",
        external_cmd=os.environ["IDBP_EXTERNAL_DENOISER"],
        seed=909, mask_fraction=0.8, sigma_n=10.0,
    )
    report = run_benchmark(spec, corpus)
    failures = [r for r in report.rows if r.error]
    assert not failures, failures
    average = report.averages().psnr_out_db
    assert average == pytest.approx(_PARITY_TABLE_AVERAGE_DB, abs=0.5)
    _report(9, f"corpus average {average:.2f} dB within +-0.5 of {_PARITY_TABLE_AVERAGE_DB}")
