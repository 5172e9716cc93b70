"""Per-sequence results, length-weighted aggregation and serialization.

JSON layout::

    {"sequences": [{"name", "length_m",
                    "ate": {"rmse", "mean", "median", "max"} | null,
                    "rpe": {"trans_rmse", "rot_rmse", "delta_s"} | null,
                    "r_p", "r_r", "warnings": [...],
                    "curves": {"linear": {"auc", "points": [[s, T, P, R, F1], ...]},
                               "angular": {...}}}],
     "summary": {"mean_ate", "weighted_r_p", "weighted_r_r", "mean_r_p", "mean_r_r"},
     "rankings": {"r_p": [names], "ate": [names]},   # only when requested
     "warnings": [...]}

Floats are written with 9 significant digits; key order is fixed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ParseError
from .metrics import ATEResult, RobustnessCurve, RPEResult

SIG_DIGITS = 9
CURVE_HEADER = ("s", "T", "precision", "recall", "f1")


@dataclass(frozen=True)
class ATESummary:
    rmse: float
    mean: float
    median: float
    max: float

    @classmethod
    def from_result(cls, r: ATEResult) -> ATESummary:
        return cls(r.rmse, r.mean, r.median, r.max)


@dataclass(frozen=True)
class RPESummary:
    trans_rmse: float
    rot_rmse: float
    delta_s: float

    @classmethod
    def from_result(cls, r: RPEResult) -> RPESummary:
        return cls(r.trans_rmse, r.rot_rmse, r.delta)


@dataclass(frozen=True)
class SequenceResult:
    """Metrics for one estimate against its ground truth.

    ``ate`` / ``rpe`` are ``None`` when the trajectories do not overlap enough
    to compute them; the reason is in ``warnings``.
    """

    sequence: str
    length_m: float
    ate: ATESummary | None
    rpe: RPESummary | None
    r_p: float
    r_r: float
    curves: tuple[RobustnessCurve, RobustnessCurve] = field(
        default_factory=lambda: (RobustnessCurve.empty("linear"), RobustnessCurve.empty("angular"))
    )
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.length_m >= 0:
            raise InvalidArgumentError(f"length_m must be >= 0, got {self.length_m!r}")
        for name in ("r_p", "r_r"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {value!r}")

    @property
    def rpe_trans(self) -> float | None:
        return None if self.rpe is None else self.rpe.trans_rmse

    @property
    def rpe_rot(self) -> float | None:
        return None if self.rpe is None else self.rpe.rot_rmse

    @property
    def complete(self) -> bool:
        """False when any metric could not be evaluated."""
        return self.ate is not None and self.rpe is not None and len(self.curves[0]) > 0


@dataclass(frozen=True)
class AggregateResult:
    per_sequence: tuple[SequenceResult, ...]
    mean_ate: float | None
    weighted_r_p: float
    weighted_r_r: float
    mean_r_p: float
    mean_r_r: float
    warnings: tuple[str, ...] = ()

    def rank_by_r_p(self) -> list[SequenceResult]:
        """Descending R_p; ties keep input order."""
        return sorted(self.per_sequence, key=lambda r: -r.r_p)

    def rank_by_ate(self) -> list[SequenceResult]:
        """Ascending ATE RMSE; sequences without ATE are left out."""
        return sorted((r for r in self.per_sequence if r.ate is not None), key=lambda r: r.ate.rmse)


def _weighted(values: list[float], weights: list[float]) -> float:
    total = math.fsum(weights)
    if total <= 0:
        return math.fsum(values) / len(values)
    w = math.fsum(v * l for v, l in zip(values, weights)) / total
    # Rounding must not push the mean outside the data range.
    return min(max(w, min(values)), max(values))


def aggregate(results, warnings=()) -> AggregateResult:
    """Length-weighted R_p/R_r plus simple means.

    Sums use ``math.fsum`` so the result does not depend on input order.
    With zero total length the weighted values fall back to simple means.
    """
    results = tuple(results)
    if not results:
        raise InvalidArgumentError("aggregate needs at least one sequence result")
    lengths = [r.length_m for r in results]
    r_p = [r.r_p for r in results]
    r_r = [r.r_r for r in results]
    ates = [r.ate.rmse for r in results if r.ate is not None]
    return AggregateResult(
        per_sequence=results,
        mean_ate=math.fsum(ates) / len(ates) if ates else None,
        weighted_r_p=_weighted(r_p, lengths),
        weighted_r_r=_weighted(r_r, lengths),
        mean_r_p=math.fsum(r_p) / len(r_p),
        mean_r_r=math.fsum(r_r) / len(r_r),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _num(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def _fmt(x) -> str:
    return f"{float(x):.{SIG_DIGITS}g}"


def _curve_dict(curve: RobustnessCurve) -> dict:
    return {"auc": _num(curve.auc), "points": [[_num(v) for v in row] for row in curve.points]}


def _sequence_dict(r: SequenceResult) -> dict:
    return {
        "name": r.sequence,
        "length_m": _num(r.length_m),
        "ate": None
        if r.ate is None
        else {"rmse": _num(r.ate.rmse), "mean": _num(r.ate.mean), "median": _num(r.ate.median), "max": _num(r.ate.max)},
        "rpe": None
        if r.rpe is None
        else {"trans_rmse": _num(r.rpe.trans_rmse), "rot_rmse": _num(r.rpe.rot_rmse), "delta_s": _num(r.rpe.delta_s)},
        "r_p": _num(r.r_p),
        "r_r": _num(r.r_r),
        "warnings": list(r.warnings),
        "curves": {"linear": _curve_dict(r.curves[0]), "angular": _curve_dict(r.curves[1])},
    }


def to_dict(result: AggregateResult, rankings: bool = False) -> dict:
    out = {
        "sequences": [_sequence_dict(r) for r in result.per_sequence],
        "summary": {
            "mean_ate": _num(result.mean_ate),
            "weighted_r_p": _num(result.weighted_r_p),
            "weighted_r_r": _num(result.weighted_r_r),
            "mean_r_p": _num(result.mean_r_p),
            "mean_r_r": _num(result.mean_r_r),
        },
    }
    if rankings:
        out["rankings"] = {
            "r_p": [r.sequence for r in result.rank_by_r_p()],
            "ate": [r.sequence for r in result.rank_by_ate()],
        }
    out["warnings"] = list(result.warnings)
    return out


@contextmanager
def _open_text(destination):
    """Yield a writable text stream for a path, a stream, or ``None`` (stdout)."""
    if destination is None or destination == "-":
        yield sys.stdout
    elif hasattr(destination, "write"):
        yield destination
    else:
        try:
            f = open(os.fspath(destination), "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise OSError(f"cannot write {os.fspath(destination)}: {exc.strerror or exc}") from exc
        with f:
            yield f


_NUMBER = r"(?:-?[0-9.eE+-]+|null)"
_NUMERIC_ARRAY = re.compile(rf"\[\s*({_NUMBER}(?:,\s*{_NUMBER})*)\s*\]")


def dumps_json(result: AggregateResult, rankings: bool = False) -> str:
    text = json.dumps(to_dict(result, rankings), indent=2, allow_nan=False)
    # One line per curve point instead of one line per number.
    text = _NUMERIC_ARRAY.sub(lambda m: "[" + ", ".join(x.strip() for x in m.group(1).split(",")) + "]", text)
    return text + "\n"


def emit_json(result: AggregateResult, destination=None, rankings: bool = False) -> None:
    text = dumps_json(result, rankings)
    with _open_text(destination) as f:
        f.write(text)


def _curve_from_dict(kind: str, d: dict) -> RobustnessCurve:
    pts = np.asarray(d.get("points", []), dtype=float).reshape(-1, 5)
    return RobustnessCurve(kind, pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3], pts[:, 4], float(d.get("auc", 0.0)))


def from_dict(data: dict) -> AggregateResult:
    try:
        sequences = []
        for s in data["sequences"]:
            ate = s.get("ate")
            rpe = s.get("rpe")
            curves = s.get("curves") or {}
            sequences.append(
                SequenceResult(
                    sequence=s["name"],
                    length_m=float(s["length_m"]),
                    ate=None if ate is None else ATESummary(ate["rmse"], ate["mean"], ate["median"], ate["max"]),
                    rpe=None if rpe is None else RPESummary(rpe["trans_rmse"], rpe["rot_rmse"], rpe["delta_s"]),
                    r_p=float(s["r_p"]),
                    r_r=float(s["r_r"]),
                    curves=(
                        _curve_from_dict("linear", curves.get("linear", {})),
                        _curve_from_dict("angular", curves.get("angular", {})),
                    ),
                    warnings=tuple(s.get("warnings", ())),
                )
            )
        summary = data["summary"]
        return AggregateResult(
            per_sequence=tuple(sequences),
            mean_ate=summary["mean_ate"],
            weighted_r_p=summary["weighted_r_p"],
            weighted_r_r=summary["weighted_r_r"],
            mean_r_p=summary.get("mean_r_p", summary["weighted_r_p"]),
            mean_r_r=summary.get("mean_r_r", summary["weighted_r_r"]),
            warnings=tuple(data.get("warnings", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed report: {exc!r}") from exc


def load_json(source) -> AggregateResult:
    """Parse a report from a path, a text stream, or a JSON string."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        with open(os.fspath(source), encoding="utf-8") as f:
            text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return from_dict(data)


def emit_curve_csv(curve: RobustnessCurve, destination=None) -> None:
    """Write ``s,T,precision,recall,f1`` rows in ascending ``s``."""
    order = np.argsort(curve.s, kind="stable")
    with _open_text(destination) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for i in order:
            w.writerow([_fmt(curve.s[i]), _fmt(curve.T[i]), _fmt(curve.precision[i]), _fmt(curve.recall[i]), _fmt(curve.f1[i])])


SUMMARY_COLUMNS = (
    "name", "length_m", "ate_rmse", "ate_mean", "ate_median", "ate_max",
    "rpe_trans_rmse", "rpe_rot_rmse", "rpe_delta_s", "r_p", "r_r", "rank_r_p", "rank_ate", "warnings",
)


def emit_csv(result: AggregateResult, destination=None) -> None:
    """One row per sequence, with rank columns; empty cells for missing values."""
    rank_rp = {id(r): k + 1 for k, r in enumerate(result.rank_by_r_p())}
    rank_ate = {id(r): k + 1 for k, r in enumerate(result.rank_by_ate())}

    def cell(x):
        return "" if x is None else _fmt(x)

    with _open_text(destination) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in result.per_sequence:
            a, p = r.ate, r.rpe
            w.writerow(
                [
                    r.sequence,
                    cell(r.length_m),
                    *(cell(None if a is None else getattr(a, k)) for k in ("rmse", "mean", "median", "max")),
                    *(cell(None if p is None else getattr(p, k)) for k in ("trans_rmse", "rot_rmse", "delta_s")),
                    cell(r.r_p),
                    cell(r.r_r),
                    rank_rp[id(r)],
                    rank_ate.get(id(r), ""),
                    "; ".join(r.warnings),
                ]
            )


def dumps_curve_csv(curve: RobustnessCurve) -> str:
    buf = io.StringIO()
    emit_curve_csv(curve, buf)
    return buf.getvalue()
