"""Command-line entry point: ``srkrp run <experiment> [options]``.

Exit status: 0 on success, 1 when decoding or a numerical kernel fails,
2 on configuration, usage or output-path errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import linalg
from .analysis import empirical_vs_approx_report, format_table
from .codec import SystemConfig
from .errors import ConfigError, DecodeError, NumericalError, SRKRPError
from .experiments import (
    EXPERIMENTS,
    PRESETS,
    SWEEP_KEYS,
    RunSpec,
    expand,
    parse_config,
    results_to_csv,
    run_points,
)
from .runtime import orchestrate, random_stragglers
from .weights import parse_weight_distribution

log = logging.getLogger("srkrp")

EXIT_OK = 0
EXIT_DECODE = 1
EXIT_CONFIG = 2

# flag name -> override key
_OVERRIDE_FLAGS = {
    "m": "m",
    "n": "n",
    "K": "K",
    "workers": "workers",
    "stragglers": "stragglers",
    "overhead": "overhead",
    "extra_computations": "extra_computations",
    "theta": "theta",
    "w_avg": "w_avg",
    "w_star_avg": "w_star_avg",
    "udist": "udist",
    "vdist": "vdist",
    "master_udist": "master_udist",
    "master_vdist": "master_vdist",
    "coeff_dist": "coeff_dist",
    "norm": "norm",
    "input_dist": "input_dist",
    "straggler_mode": "straggler_mode",
    "trials_max": "trials_max",
    "target_failures": "target_failures",
    "r": "r",
    "s": "s",
    "t": "t",
    "pairs_per_point": "pairs_per_point",
    "a": "a",
    "b": "b",
}


def _sweep(text: str):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        return float(parts[0])
    return [float(p) for p in parts]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srkrp",
        description="Sparse random Khatri-Rao product code experiments.",
    )
    parser.add_argument("experiment_pos", nargs="?", metavar="EXPERIMENT", choices=EXPERIMENTS,
                        help=f"one of {', '.join(EXPERIMENTS)}")
    parser.add_argument("--experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="TOML run description")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="campaign points run concurrently")
    parser.add_argument("--output", help="CSV path (matrix path for matmul)")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress the parameter log")

    grp = parser.add_argument_group("parameter overrides (sweep parameters accept comma lists)")
    for flag in ("m", "n", "workers", "stragglers", "trials_max", "target_failures", "r", "s", "t",
                 "pairs_per_point"):
        grp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=int)
    for flag in ("K", "overhead", "extra_computations"):
        grp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=_int_sweep)
    for flag in ("theta", "w_avg", "w_star_avg"):
        grp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=_sweep)
    for flag in ("udist", "vdist", "master_udist", "master_vdist", "input_dist"):
        grp.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
    grp.add_argument("--coeff-dist", dest="coeff_dist", choices=["uniform01", "standard_normal"])
    grp.add_argument("--norm", choices=["spectral", "frobenius"])
    grp.add_argument("--straggler-mode", dest="straggler_mode", choices=["uniform_random_subset", "fixed_set"])
    grp.add_argument("--a", help="matrix file for A (matmul)")
    grp.add_argument("--b", help="matrix file for B (matmul)")
    return parser


def _int_sweep(text: str):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        return int(parts[0])
    return [int(p) for p in parts]


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    base = None
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", key="config") from None
        base = parse_config(text)
    experiment = args.experiment or args.experiment_pos or (base.experiment if base else None)
    if experiment is None:
        raise ConfigError("no experiment given", key="experiment")
    overrides = dict(base.overrides) if base else {}
    for dest, key in _OVERRIDE_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    return RunSpec(
        experiment=experiment,
        overrides=overrides,
        output_path=args.output or (base.output_path if base and base.experiment == experiment else None),
        seed=args.seed if args.seed is not None else (base.seed if base else 0),
        jobs=args.jobs if args.jobs is not None else (base.jobs if base else 1),
    )


def _echo_parameters(spec: RunSpec) -> None:
    log.info("experiment=%s seed=%d jobs=%d output=%s", spec.experiment, spec.seed, spec.jobs, spec.output_path)
    for key, value in sorted(spec.resolved().items()):
        if key in spec.overrides:
            origin = "override"
        elif key in PRESETS[spec.experiment]:
            origin = "preset"
        else:
            origin = "default"
        log.info("  %s = %r (%s)", key, value, origin)


def run_matmul(spec: RunSpec) -> int:
    params = spec.resolved()
    for key in ("a", "b"):
        if params[key] is None:
            raise ConfigError("matmul needs an input matrix file", key=key)
    for key in SWEEP_KEYS:
        if isinstance(params[key], list):
            raise ConfigError("matmul does not sweep", key=key)
    try:
        a = linalg.read_matrix(params["a"]).to_dense()
        b = linalg.read_matrix(params["b"]).to_dense()
    except OSError as exc:
        raise ConfigError(f"cannot read input matrix: {exc}") from None
    except SRKRPError as exc:
        raise ConfigError(str(exc)) from None
    m, n = params["m"], params["n"]
    S = params["stragglers"]
    N = params["workers"] if params["workers"] is not None else m * n + params["overhead"] + S
    try:
        cfg = SystemConfig(
            m=m,
            n=n,
            workers=N,
            stragglers=S,
            extra=params["extra_computations"],
            worker_udist=parse_weight_distribution(params["udist"] or "dense", m),
            worker_vdist=parse_weight_distribution(params["vdist"] or "dense", n),
            master_udist=parse_weight_distribution(params["master_udist"] or "dense", m),
            master_vdist=parse_weight_distribution(params["master_vdist"] or "dense", n),
            coeff_dist=params["coeff_dist"],
            r=a.shape[0],
            s=a.shape[1],
            t=b.shape[1],
        )
    except SRKRPError as exc:
        raise ConfigError(str(exc)) from None
    rng = np.random.default_rng(spec.seed)
    stragglers = random_stragglers(cfg, rng)
    out = _open_output(spec.output_path)
    try:
        c_hat, metrics = orchestrate(cfg, a, b, stragglers, rng)
    except DecodeError as exc:
        out.close()
        Path(spec.output_path).unlink(missing_ok=True)
        print(f"decode failed: {exc}", file=sys.stderr)
        return EXIT_DECODE
    out.close()
    linalg.write_matrix(spec.output_path, c_hat)
    print(f"wrote {c_hat.shape[0]}x{c_hat.shape[1]} product to {spec.output_path}")
    print(f"stragglers={list(stragglers)} results_used={metrics.wall_results_collected} "
          f"mean_worker_comm={metrics.mean_worker_comm(cfg.workers):.1f}")
    return EXIT_OK


def _open_output(path: str):
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write output: {exc}", key="output") from None


def run(spec: RunSpec) -> int:
    _echo_parameters(spec)
    if spec.experiment == "matmul":
        return run_matmul(spec)
    points = expand(spec)
    log.info("%d campaign point(s)", len(points))
    out = _open_output(spec.output_path)
    try:
        results = run_points(points, spec.jobs)
        out.write(results_to_csv(results))
    finally:
        out.close()
    if any(p.stability for p in points):
        rows = [
            {"K": r.K, "R": r.R, "theta": r.theta, "w_avg": r.w_avg, "trials": r.trials_run,
             "failures": r.failures, "mean_rel_error": r.mean_rel_error}
            for r in results
        ]  # fmt: skip
        print(format_table(rows))
    else:
        print(format_table(empirical_vs_approx_report(results)))
    print(f"wrote {len(results)} row(s) to {spec.output_path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        spec = spec_from_args(args)
        return run(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DecodeError, NumericalError) as exc:
        print(f"decode error: {exc}", file=sys.stderr)
        return EXIT_DECODE


if __name__ == "__main__":
    sys.exit(main())
