"""End-to-end evaluation of one estimate against its ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InsufficientOverlapError, InvalidArgumentError
from .metrics import (
    ALIGN_MODES,
    DEFAULT_RATE,
    DEFAULT_RPE_DELTA,
    DEFAULT_THRESHOLDS,
    RobustnessCurve,
    ate,
    robustness_auc,
    rpe,
    velocity_error_series,
)
from .report import ATESummary, RPESummary, SequenceResult
from .spline import fit_pieces
from .trajio import DEFAULT_MAX_DT, Trajectory, resample_uniform


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation parameters; ``resample_dt`` is seconds or ``"auto"``."""

    est_path: str | None = None
    gt_path: str | None = None
    max_dt: float = DEFAULT_MAX_DT
    resample_dt: float | str = "auto"
    rate: float = DEFAULT_RATE
    n_thresholds: int = DEFAULT_THRESHOLDS
    rpe_delta: float = DEFAULT_RPE_DELTA
    align: str = "rigid"
    output: str | None = None
    format: str = "json"
    curve_out: str | None = None

    def __post_init__(self):
        for name in ("max_dt", "rate", "rpe_delta"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise InvalidArgumentError(f"{name} must be positive, got {value!r}")
        if self.resample_dt != "auto" and not (
            isinstance(self.resample_dt, (int, float)) and self.resample_dt > 0 and math.isfinite(self.resample_dt)
        ):
            raise InvalidArgumentError(f"resample_dt must be positive or 'auto', got {self.resample_dt!r}")
        if int(self.n_thresholds) != self.n_thresholds or self.n_thresholds < 2:
            raise InvalidArgumentError(f"n_thresholds must be an integer >= 2, got {self.n_thresholds!r}")
        if self.align not in ALIGN_MODES:
            raise InvalidArgumentError(f"align must be one of {ALIGN_MODES}, got {self.align!r}")
        if self.format not in ("json", "csv"):
            raise InvalidArgumentError(f"format must be json or csv, got {self.format!r}")


def auto_resample_dt(est: Trajectory, gt: Trajectory) -> float:
    """Median spacing of the estimate stamps that fall inside the gt time window."""
    inside = est.t[(est.t >= gt.t[0]) & (est.t <= gt.t[-1])]
    if len(inside) >= 2:
        return float(np.median(np.diff(inside)))
    if len(est) >= 2:
        return est.median_spacing()
    return gt.median_spacing()


def _pieces(traj: Trajectory, dt: float, label: str, warnings: list[str]):
    try:
        pieces = fit_pieces(resample_uniform(traj, dt))
    except InsufficientDataError as exc:
        warnings.append(f"{label}: {exc}")
        return []
    if not pieces:
        warnings.append(f"{label}: no segment long enough for a spline fit")
    return pieces


def evaluate_sequence(est: Trajectory, gt: Trajectory, config: EvalConfig = EvalConfig(), name: str | None = None) -> SequenceResult:
    """ATE, RPE and both robustness scores; failures become warnings.

    Steps: associate stamps for ATE/RPE, resample both trajectories onto a
    shared spacing, fit spline pieces, compare velocities on the gt grid, and
    integrate the F1 curves.
    """
    warnings: list[str] = []
    ate_summary = rpe_summary = None
    try:
        ate_summary = ATESummary.from_result(ate(est, gt, config.max_dt, config.align))
    except InsufficientOverlapError as exc:
        warnings.append(f"ATE not computed: {exc}")
    try:
        rpe_summary = RPESummary.from_result(rpe(est, gt, config.max_dt, config.rpe_delta))
    except InsufficientOverlapError as exc:
        warnings.append(f"RPE not computed: {exc}")

    curves = (RobustnessCurve.empty("linear"), RobustnessCurve.empty("angular"))
    try:
        dt = float(config.resample_dt) if config.resample_dt != "auto" else auto_resample_dt(est, gt)
    except InsufficientDataError as exc:
        warnings.append(f"robustness not computed: {exc}")
        dt = None
    if dt is not None:
        gt_pieces = _pieces(gt, dt, "ground truth", warnings)
        if gt_pieces:
            est_pieces = _pieces(est, dt, "estimate", warnings)
            lin, ang = velocity_error_series(est_pieces, gt_pieces, config.rate)
            if lin.covered == 0:
                warnings.append("estimate does not overlap the ground-truth spline span")
            curves = (
                robustness_auc(lin, config.n_thresholds, "linear"),
                robustness_auc(ang, config.n_thresholds, "angular"),
            )
    return SequenceResult(
        sequence=name if name is not None else (est.name or "estimate"),
        length_m=gt.path_length(),
        ate=ate_summary,
        rpe=rpe_summary,
        r_p=curves[0].auc,
        r_r=curves[1].auc,
        curves=curves,
        warnings=tuple(warnings),
    )
