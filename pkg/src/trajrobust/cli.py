"""``trajrobust`` command line: evaluate, compare and synth subcommands.

Exit codes: 0 success, 1 input error (unreadable or malformed files, bad
arguments), 2 evaluation impossible (e.g. no stamp overlap); in the last case
a partial report is still written.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import report
from .errors import InvalidArgumentError, ParseError, TrajRobustError
from .geometry import Pose, so3_exp
from .metrics import ALIGN_MODES, DEFAULT_RATE, DEFAULT_RPE_DELTA, DEFAULT_THRESHOLDS
from .pipeline import EvalConfig, evaluate_sequence
from .synth import DROPOUT_MODES, DegradationSpec, ScrewSpec, degrade, gen_screw
from .trajio import DEFAULT_MAX_DT, read_tum, write_tum

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNEVALUABLE = 2
SEED_ENV = "TRAJROBUST_SEED"


def _error(msg: str) -> None:
    print(f"trajrobust: error: {msg}", file=sys.stderr)


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _resample_dt(text: str):
    return "auto" if text == "auto" else _positive(text)


def _vector(text: str) -> tuple[float, float, float]:
    parts = text.replace(",", " ").split()
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 3 numbers, got {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 numbers, got {text!r}")
    return values


def _add_eval_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gt", required=True, help="ground-truth TUM file")
    p.add_argument("--max-dt", type=_positive, default=DEFAULT_MAX_DT, help="association tolerance in s (default %(default)s)")
    p.add_argument("--resample-dt", type=_resample_dt, default="auto",
                   help="spline knot spacing in s, or 'auto' for the estimate's median spacing")
    p.add_argument("--rate", type=_positive, default=DEFAULT_RATE, help="velocity evaluation rate in Hz (default %(default)s)")
    p.add_argument("--thresholds", type=int, default=DEFAULT_THRESHOLDS, help="threshold samples per curve (default %(default)s)")
    p.add_argument("--rpe-delta", type=_positive, default=DEFAULT_RPE_DELTA, help="RPE window in s (default %(default)s)")
    p.add_argument("--align", choices=ALIGN_MODES, default="rigid", help="ATE alignment (default %(default)s)")
    p.add_argument("--output", "-o", help="report destination (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--curve-out", help="prefix for F1 curve CSVs (<prefix>[_<name>]_linear.csv, _angular.csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajrobust", description="Trajectory accuracy and velocity robustness evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="evaluate one estimate against ground truth")
    ev.add_argument("--est", required=True, help="estimated trajectory, TUM format")
    _add_eval_options(ev)

    cmp = sub.add_parser("compare", help="evaluate and rank several estimates against one ground truth")
    cmp.add_argument("--est", required=True, nargs="+", action="extend", help="estimated trajectories, TUM format")
    _add_eval_options(cmp)

    sy = sub.add_parser("synth", help="generate a screw trajectory, optionally degraded")
    sy.add_argument("--output", "-o", required=True, help="TUM output path")
    sy.add_argument("--velocity-out", help="CSV sidecar with analytic velocities of the clean trajectory")
    sy.add_argument("--v", type=_vector, default=(0.0, 0.0, 0.0), help="linear rate 'x,y,z' m/s")
    sy.add_argument("--w", type=_vector, default=(0.0, 0.0, 0.0), help="angular rate 'x,y,z' rad/s")
    sy.add_argument("--duration", type=_positive, default=10.0)
    sy.add_argument("--rate", type=_positive, default=10.0)
    sy.add_argument("--start-translation", type=_vector, default=(0.0, 0.0, 0.0))
    sy.add_argument("--start-rotation", type=_vector, default=(0.0, 0.0, 0.0), help="rotation vector (axis * angle)")
    sy.add_argument("--dropout-fraction", type=float, default=0.0)
    sy.add_argument("--dropout-mode", choices=DROPOUT_MODES, default="uniform")
    sy.add_argument("--noise-sigma-trans", type=float, default=0.0)
    sy.add_argument("--noise-sigma-rot", type=float, default=0.0)
    sy.add_argument("--noise-sigma-vel", type=float, default=0.0)
    sy.add_argument("--spike-t", type=float, help="time of a single pose spike")
    sy.add_argument("--spike-offset", type=_vector, default=(1.0, 0.0, 0.0))
    sy.add_argument("--seed", type=int, default=0, help=f"RNG seed (overridden by ${SEED_ENV})")
    sy.add_argument("--name", default="synth")
    return parser


def _config(args, est_path: str | None) -> EvalConfig:
    return EvalConfig(
        est_path=est_path,
        gt_path=args.gt,
        max_dt=args.max_dt,
        resample_dt=args.resample_dt,
        rate=args.rate,
        n_thresholds=args.thresholds,
        rpe_delta=args.rpe_delta,
        align=args.align,
        output=args.output,
        format=args.format,
        curve_out=args.curve_out,
    )


def _read(path: str):
    try:
        return read_tum(path)
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}") from None
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_curves(prefix: str, result: report.SequenceResult, tagged: bool) -> None:
    stem = f"{prefix}_{result.sequence}" if tagged else prefix
    for curve in result.curves:
        report.emit_curve_csv(curve, f"{stem}_{curve.kind}.csv")


def _emit(agg: report.AggregateResult, config: EvalConfig, rankings: bool) -> None:
    if config.format == "json":
        report.emit_json(agg, config.output, rankings=rankings)
    else:
        report.emit_csv(agg, config.output)


def cmd_evaluate(config: EvalConfig) -> int:
    try:
        gt = _read(config.gt_path)
        est = _read(config.est_path)
    except ParseError as exc:
        _error(str(exc))
        return EXIT_INPUT
    result = evaluate_sequence(est, gt, config)
    for w in result.warnings:
        print(f"trajrobust: warning: {w}", file=sys.stderr)
    try:
        _emit(report.aggregate([result]), config, rankings=False)
        if config.curve_out:
            _write_curves(config.curve_out, result, tagged=False)
    except OSError as exc:
        _error(str(exc))
        return EXIT_INPUT
    return EXIT_OK if result.complete else EXIT_UNEVALUABLE


def cmd_compare(configs: list[EvalConfig]) -> int:
    """Evaluate every estimate against the shared gt and rank the successes."""
    if not configs:
        _error("compare needs at least one estimate")
        return EXIT_INPUT
    base = configs[0]
    try:
        gt = _read(base.gt_path)
    except ParseError as exc:
        _error(str(exc))
        return EXIT_INPUT
    results, warnings = [], []
    seen: dict[str, int] = {}
    for config in configs:
        try:
            est = _read(config.est_path)
        except ParseError as exc:
            warnings.append(f"{config.est_path}: {exc}")
            continue
        name = est.name or config.est_path
        # Keep names unique so rankings stay unambiguous.
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}#{seen[name]}"
        result = evaluate_sequence(est, gt, config, name=name)
        if not result.complete:
            warnings.extend(f"{name}: {w}" for w in result.warnings)
        results.append(result)
    for w in warnings:
        print(f"trajrobust: warning: {w}", file=sys.stderr)
    if not results:
        _error("no estimate could be evaluated")
        return EXIT_INPUT
    try:
        _emit(report.aggregate(results, warnings), base, rankings=True)
        if base.curve_out:
            for r in results:
                _write_curves(base.curve_out, r, tagged=True)
    except OSError as exc:
        _error(str(exc))
        return EXIT_INPUT
    return EXIT_OK


def _write_velocity_sidecar(path: str, samples) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "vx", "vy", "vz", "wx", "wy", "wz", "speed", "angular_speed"])
        for s in samples:
            row = [s.t, *s.v_w, *s.w_w, np.linalg.norm(s.v_w), np.linalg.norm(s.w_w)]
            w.writerow([f"{x:.17g}" for x in row])


def cmd_synth(args) -> int:
    seed = args.seed
    env = os.environ.get(SEED_ENV)
    try:
        if env is not None and env.strip():
            try:
                seed = int(env)
            except ValueError:
                raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        start = Pose(so3_exp(args.start_rotation), args.start_translation)
        screw = ScrewSpec(v=args.v, w=args.w, duration=args.duration, rate=args.rate, start=start)
        spike = None if args.spike_t is None else (args.spike_t, args.spike_offset)
        deg = DegradationSpec(
            dropout_fraction=args.dropout_fraction,
            dropout_mode=args.dropout_mode,
            noise_sigma_trans=args.noise_sigma_trans,
            noise_sigma_rot=args.noise_sigma_rot,
            noise_sigma_vel=args.noise_sigma_vel,
            spike=spike,
            seed=seed,
        )
        traj, velocities = gen_screw(screw, name=args.name)
        out = degrade(traj, deg)
    except TrajRobustError as exc:
        _error(str(exc))
        return EXIT_INPUT
    try:
        write_tum(out, args.output)
        if args.velocity_out:
            _write_velocity_sidecar(args.velocity_out, velocities)
    except OSError as exc:
        _error(f"cannot write output: {exc}")
        return EXIT_INPUT
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args)
    try:
        if args.command == "evaluate":
            return cmd_evaluate(_config(args, args.est))
        return cmd_compare([_config(args, path) for path in args.est])
    except InvalidArgumentError as exc:
        _error(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
