"""Command-line front end.

Subcommands: ``inpaint``, ``deblur``, ``pnp`` restore a single image whose
degradation is synthesized from the (seeded) flags, treating the input as
ground truth; ``bench`` runs a whole corpus directory; ``verify`` runs the
numerical verification battery.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Settings resolve
with precedence builtin defaults < ./idbp.cfg < command-line flags.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import verify as verify_mod
from .bench import (
    ExperimentSpec,
    ImageRow,
    RunReport,
    emit_trace_csv,
    run_benchmark,
    run_single,
    write_summary_csv,
)
from .pgm import load_pgm, save_pgm
from .rng import RngState

CONFIG_FILENAME = "idbp.cfg"


class UsageError(Exception):
    """Bad invocation: unknown flag, missing flag, malformed value."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def load_config_file(path) -> dict[str, str]:
    """INI-style key=value settings; [section] lines and # comments ignored."""
    settings: dict[str, str] = {}
    with open(path, "r") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith(("#", ";")) or line.startswith("["):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"malformed config line {raw.strip()!r} in {path}")
            settings[key.strip().lower().replace("-", "_")] = value.strip()
    return settings


def _build_parser() -> _Parser:
    parser = _Parser(prog="idbp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input PGM (ground truth) or corpus directory for bench")
    common.add_argument("--output", help="output path: restored PGM, or CSV directory for bench")
    common.add_argument("--mask-frac", type=float, dest="mask_frac", help="fraction of missing pixels")
    common.add_argument("--seed", type=int, help="master seed for masks and noise")
    common.add_argument("--sigma-n", type=float, dest="sigma_n", help="noise standard deviation")
    common.add_argument("--delta", type=float, help="denoiser noise-level inflation")
    common.add_argument("--epsilon", type=float, help="inverse-filter regularisation weight")
    common.add_argument("--auto-tune", action="store_true", default=None, dest="auto_tune",
                        help="grow epsilon automatically with restarts (deblur)")
    common.add_argument("--tau", type=float, help="feasibility margin threshold for auto-tuning")
    common.add_argument("--eps-increment", type=float, dest="eps_increment",
                        help="epsilon growth step for auto-tuning")
    common.add_argument("--iters", type=int, help="iteration count")
    common.add_argument("--denoiser", help="median|gaussian|nlm|dct_threshold|shrink|external")
    common.add_argument("--external-cmd", dest="external_cmd",
                        help="command line for the external denoiser bridge")
    common.add_argument("--scenario", type=int, help="deblurring scenario 1-4")
    common.add_argument("--beta", type=float, help="prior weight (ADMM)")
    common.add_argument("--lambda", type=float, dest="lam", help="penalty parameter (ADMM)")
    common.add_argument("--trace", help="write per-iteration CSV here")
    common.add_argument("--report", help="write summary CSV here")

    sub.add_parser("inpaint", parents=[common], help="restore randomly missing pixels")
    sub.add_parser("deblur", parents=[common], help="restore a blurred noisy image")
    sub.add_parser("pnp", parents=[common], help="restore with the ADMM solver")
    bench = sub.add_parser("bench", parents=[common], help="run a corpus benchmark")
    bench.add_argument("solver", nargs="?", default="idbp", choices=("idbp", "idbp_auto", "pnp"),
                       help="solver for the batch (default idbp)")
    sub.add_parser("verify", help="run the numerical verification battery")
    return parser


class _Settings:
    """Precedence-aware view over CLI args and the optional config file."""

    def __init__(self, args: argparse.Namespace, file_cfg: dict[str, str]):
        self.args = args
        self.file_cfg = file_cfg

    def get(self, key: str, builtin=None, cast=str):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.file_cfg:
            raw = self.file_cfg[key]
            try:
                if cast is bool:
                    return raw.lower() in ("1", "true", "yes", "on")
                return cast(raw)
            except ValueError as exc:
                raise UsageError(f"bad config value {key}={raw!r}: {exc}") from exc
        return builtin


def _spec_from_settings(settings: _Settings, task: str, solver: str) -> ExperimentSpec:
    denoiser = settings.get("denoiser", "dct_threshold")
    external_cmd = settings.get("external_cmd")
    if denoiser == "external" and not external_cmd:
        external_cmd = os.environ.get("IDBP_EXTERNAL_DENOISER")
        if not external_cmd:
            raise UsageError("--denoiser external needs --external-cmd or IDBP_EXTERNAL_DENOISER")
    return ExperimentSpec(
        task=task,
        solver=solver,
        denoiser=denoiser,
        external_cmd=external_cmd,
        seed=settings.get("seed", 0, int),
        mask_fraction=settings.get("mask_frac", 0.8, float),
        sigma_n=settings.get("sigma_n", cast=float),
        scenario=settings.get("scenario", cast=int),
        delta=settings.get("delta", cast=float),
        epsilon=settings.get("epsilon", cast=float),
        iterations=settings.get("iters", cast=int),
        tau=settings.get("tau", cast=float),
        eps_increment=settings.get("eps_increment", cast=float),
        beta=settings.get("beta", cast=float),
        lam=settings.get("lam", cast=float),
    )


def _require_input(settings: _Settings) -> str:
    path = settings.get("input")
    if not path:
        raise UsageError("--input is required")
    return path


def _single_image_command(settings: _Settings, task: str, solver: str) -> int:
    path = _require_input(settings)
    image = load_pgm(path)
    spec = _spec_from_settings(settings, task, solver)
    result = run_single(spec, image, RngState(spec.seed))
    parts = [
        f"psnr_in={result.psnr_in_db:.2f} dB",
        f"psnr_out={result.psnr_out_db:.2f} dB",
        f"isnr={result.isnr_db:+.2f} dB",
    ]
    if task == "deblur":
        parts.append(f"bsnr={result.bsnr_db:.2f} dB")
    if solver == "idbp_auto":
        parts.append(f"restarts={result.trace.restart_count}")
    print(f"{task} [{solver}] {Path(path).name}: " + ", ".join(parts))

    output = settings.get("output")
    if output:
        save_pgm(result.estimate, output)
    trace_path = settings.get("trace")
    if trace_path:
        emit_trace_csv(result.trace, trace_path)
    report_path = settings.get("report")
    if report_path:
        row = ImageRow(
            name=Path(path).stem,
            psnr_in_db=result.psnr_in_db,
            psnr_out_db=result.psnr_out_db,
            isnr_db=result.isnr_db,
            bsnr_db=result.bsnr_db,
        )
        write_summary_csv(RunReport(rows=[row], config=spec.resolved()), report_path)
    return 0


def _cmd_inpaint(settings: _Settings) -> int:
    return _single_image_command(settings, "inpaint", "idbp")


def _cmd_deblur(settings: _Settings) -> int:
    if settings.get("scenario", cast=int) is None:
        raise UsageError("--scenario is required for deblur")
    solver = "idbp_auto" if settings.get("auto_tune", False, bool) else "idbp"
    return _single_image_command(settings, "deblur", solver)


def _cmd_pnp(settings: _Settings) -> int:
    task = "deblur" if settings.get("scenario", cast=int) is not None else "inpaint"
    return _single_image_command(settings, task, "pnp")


def _cmd_bench(settings: _Settings) -> int:
    corpus_dir = Path(_require_input(settings))
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory {corpus_dir} does not exist")
    paths = sorted(corpus_dir.glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm files in {corpus_dir}")
    corpus = [(p.stem, load_pgm(p)) for p in paths]

    solver = getattr(settings.args, "solver", "idbp")
    if settings.get("auto_tune", False, bool):
        solver = "idbp_auto"
    task = "deblur" if settings.get("scenario", cast=int) is not None else "inpaint"
    spec = _spec_from_settings(settings, task, solver)

    report = run_benchmark(spec, corpus)
    out_dir = Path(settings.get("output", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, trace in report.traces.items():
        emit_trace_csv(trace, out_dir / f"{name}_trace.csv")
    summary_path = Path(settings.get("report") or out_dir / "summary.csv")
    write_summary_csv(report, summary_path)

    for row in report.rows:
        if row.error:
            print(f"{row.name}: FAILED {row.error}")
        else:
            print(f"{row.name}: psnr_out={row.psnr_out_db:.2f} dB, isnr={row.isnr_db:+.2f} dB")
    avg = report.averages()
    print(f"average: psnr_out={avg.psnr_out_db:.2f} dB, isnr={avg.isnr_db:+.2f} dB")
    print(f"summary written to {summary_path}")
    return 0


def cli_main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        file_cfg = load_config_file(CONFIG_FILENAME) if Path(CONFIG_FILENAME).exists() else {}
        settings = _Settings(args, file_cfg)
        if args.command == "verify":
            return 0 if verify_mod.run_all() else 2
        handler = {
            "inpaint": _cmd_inpaint,
            "deblur": _cmd_deblur,
            "pnp": _cmd_pnp,
            "bench": _cmd_bench,
        }[args.command]
        return handler(settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
