"""Command-line front end: run, report, verify, bench.

Exit codes: 0 success, 2 configuration/schema errors, 3 numerical
failures (including failed verification).  ``FREDLAB_OUTPUT_ROOT``
overrides the artifact root for ``run``; ``FREDLAB_THREADS`` caps BLAS
and compiled-kernel thread counts (set before heavy imports).
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError, NumericsError

THREADS_VAR = "FREDLAB_THREADS"


def _thread_cap() -> int | None:
    raw = os.environ.get(THREADS_VAR)
    if not raw:
        return None
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_VAR}={raw!r} is not an integer") from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_VAR} must be >= 1, got {threads}")
    return threads


def _apply_thread_env() -> None:
    """Cap BLAS pools before numpy loads; honored only at first import."""
    threads = _thread_cap()
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def _apply_numba_cap() -> None:
    threads = _thread_cap()
    if threads is None:
        return
    try:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _cmd_run(args) -> int:
    _apply_numba_cap()
    from pathlib import Path

    from .config import load_config
    from .pipeline import render_report, run_experiment

    cfg = load_config(args.config)
    text = Path(args.config).read_text(encoding="utf-8")
    outdir = run_experiment(cfg, output_root=args.output_root, config_text=text)
    print(f"artifacts: {outdir}")
    sys.stdout.write(render_report(outdir))
    return 0


def _cmd_report(args) -> int:
    from .pipeline import render_report

    sys.stdout.write(render_report(args.dir))
    return 0


def _cmd_verify(args) -> int:
    from .pipeline import verify_artifacts

    ok, problems = verify_artifacts(args.dir)
    if ok:
        print(f"verified: {args.dir} (hashes and recorded checks consistent)")
        return 0
    for problem in problems:
        print(f"verify: {problem}", file=sys.stderr)
    return 3


def _cmd_bench(args) -> int:
    _apply_numba_cap()
    from .bench import run_bench

    sys.stdout.write(
        run_bench(nx=args.nx, ny=args.ny, batch=args.batch, repeats=args.repeats)
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fredlab",
        description="Numerical laboratory for geodesic-flow operators on a periodic channel",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a key=value config file")
    p_run.add_argument(
        "--output-root",
        default=None,
        help="artifact root (default: $FREDLAB_OUTPUT_ROOT or ./runs)",
    )
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="summarize a finished run")
    p_rep.add_argument("dir", help="artifact directory")
    p_rep.set_defaults(func=_cmd_report)

    p_ver = sub.add_parser("verify", help="re-check hashes and recorded booleans")
    p_ver.add_argument("dir", help="artifact directory")
    p_ver.set_defaults(func=_cmd_verify)

    p_ben = sub.add_parser("bench", help="compare compiled and vectorized kernels")
    p_ben.add_argument("--nx", type=int, default=64)
    p_ben.add_argument("--ny", type=int, default=65)
    p_ben.add_argument("--batch", type=int, default=204)
    p_ben.add_argument("--repeats", type=int, default=5)
    p_ben.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_env()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
