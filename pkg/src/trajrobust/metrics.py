"""Accuracy (ATE, RPE) and velocity-robustness metrics.

The robustness score of an error series is the area under its F1 curve,
where an error ``e`` counts as an inlier at threshold ``T`` when ``e < T``.
Precision is measured over the estimate's samples, recall over every
ground-truth instant, so gaps in the estimate lower recall. Thresholds are
swept on the mapped axis ``s = exp(-10 T)``, ``s`` in (0, 1], and the AUC is
taken over ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometryError, InsufficientOverlapError, InvalidArgumentError
from .geometry import Pose, Rotation, matrix_to_quat, quat_angle, relative_arrays
from .spline import SplineTrajectory
from .trajio import DEFAULT_MAX_DT, Trajectory, associate

ALIGN_MODES = ("none", "rigid", "similarity")
DEFAULT_THRESHOLDS = 1000
DEFAULT_RATE = 10.0
DEFAULT_RPE_DELTA = 1.0
THRESHOLD_DECAY = 10.0
RPE_WINDOW_TOL = 0.2


# ---------------------------------------------------------------------------
# Alignment and ATE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentResult:
    """Similarity ``x -> scale * R x + t`` taking estimate points onto ground truth."""

    transform: Pose
    scale: float
    residual_rmse: float

    def apply(self, points) -> np.ndarray:
        R = self.transform.rotation.matrix
        return self.scale * np.asarray(points, dtype=float) @ R.T + self.transform.translation


def _umeyama(est: np.ndarray, gt: np.ndarray, with_scale: bool, strict: bool) -> AlignmentResult:
    n = len(est)
    mu_e = est.mean(axis=0)
    mu_g = gt.mean(axis=0)
    X = est - mu_e
    Y = gt - mu_g
    cov = Y.T @ X / n
    U, D, Vt = np.linalg.svd(cov)
    if strict and (D[0] == 0 or D[1] <= 1e-12 * D[0]):
        raise DegenerateGeometryError(f"point set is degenerate (covariance singular values {D.tolist()})")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_e = np.mean(np.sum(X * X, axis=1))
        if var_e == 0:
            raise DegenerateGeometryError("estimate points coincide; scale is undefined")
        scale = float(np.sum(D * np.diag(S)) / var_e)
    else:
        scale = 1.0
    t = mu_g - scale * R @ mu_e
    residual = gt - (scale * est @ R.T + t)
    rmse = float(np.sqrt(np.mean(np.sum(residual * residual, axis=1))))
    return AlignmentResult(Pose(Rotation(matrix_to_quat(R)), t), scale, rmse)


def umeyama_align(est_points, gt_points, with_scale: bool = False) -> AlignmentResult:
    """Closed-form least-squares rigid (or similarity) alignment.

    Minimises ``sum |gt_i - (s R est_i + t)|^2``; reflections are excluded by
    the determinant sign correction.

    Raises:
        DegenerateGeometryError: fewer than 3 pairs or a covariance of rank < 2.
    """
    est = np.asarray(est_points, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt_points, dtype=float).reshape(-1, 3)
    if len(est) != len(gt):
        raise InvalidArgumentError(f"point lists differ in length: {len(est)} vs {len(gt)}")
    if len(est) < 3:
        raise DegenerateGeometryError(f"alignment needs at least 3 point pairs, got {len(est)}")
    return _umeyama(est, gt, with_scale, strict=True)


@dataclass(frozen=True)
class ATEResult:
    rmse: float
    mean: float
    median: float
    max: float
    errors: np.ndarray
    alignment: AlignmentResult | None

    @property
    def n_pairs(self) -> int:
        return len(self.errors)


def ate(est: Trajectory, gt: Trajectory, max_dt: float = DEFAULT_MAX_DT, align: str = "rigid") -> ATEResult:
    """Absolute translational error over timestamp-associated pairs."""
    if align not in ALIGN_MODES:
        raise InvalidArgumentError(f"align must be one of {ALIGN_MODES}, got {align!r}")
    assoc = associate(est, gt, max_dt)
    needed = 1 if align == "none" else 3
    if len(assoc) < needed:
        raise InsufficientOverlapError(
            f"ATE needs at least {needed} associated pairs, got {len(assoc)} (max_dt={max_dt})"
        )
    pe = est.positions[assoc.est_idx]
    pg = gt.positions[assoc.gt_idx]
    alignment = None
    if align != "none":
        # Collinear paths still have a well-defined minimum residual, so the
        # rank check is skipped here.
        alignment = _umeyama(pe, pg, with_scale=align == "similarity", strict=False)
        pe = alignment.apply(pe)
    errors = np.linalg.norm(pe - pg, axis=1)
    return ATEResult(
        rmse=float(np.sqrt(np.mean(errors * errors))),
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        max=float(np.max(errors)),
        errors=errors,
        alignment=alignment,
    )


# ---------------------------------------------------------------------------
# RPE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RPEResult:
    trans_rmse: float
    rot_rmse: float
    trans_errors: np.ndarray
    rot_errors: np.ndarray
    delta: float


def rpe(
    est: Trajectory, gt: Trajectory, max_dt: float = DEFAULT_MAX_DT, delta: float = DEFAULT_RPE_DELTA
) -> RPEResult:
    """Relative pose error over windows of ``delta`` seconds of ground-truth time.

    Each associated pair ``i`` is matched with the pair ``j`` whose gt time
    offset is closest to ``delta`` (within ``0.2 * delta``); the error pose is
    ``(Q_i^-1 Q_j)^-1 (P_i^-1 P_j)`` with ``Q`` ground truth and ``P`` estimate.
    """
    if not (delta > 0 and math.isfinite(delta)):
        raise InvalidArgumentError(f"delta must be positive, got {delta!r}")
    assoc = associate(est, gt, max_dt)
    if len(assoc) < 2:
        raise InsufficientOverlapError(f"RPE needs at least 2 associated pairs, got {len(assoc)}")
    tg = gt.t[assoc.gt_idx]
    k = len(tg)
    i = np.arange(k)
    target = tg + delta
    hi = np.clip(np.searchsorted(tg, target), 1, k - 1)
    lo = hi - 1
    j = np.where(np.abs(tg[hi] - target) < np.abs(tg[lo] - target), hi, lo)
    ok = (j > i) & (np.abs(tg[j] - tg[i] - delta) <= RPE_WINDOW_TOL * delta)
    if not np.any(ok):
        span = float(tg[-1] - tg[0])
        raise InsufficientOverlapError(
            f"no RPE window matches delta={delta} s (associated span {span:.6g} s, {k} pairs)"
        )
    i, j = i[ok], j[ok]
    gi, gj = assoc.gt_idx[i], assoc.gt_idx[j]
    ei, ej = assoc.est_idx[i], assoc.est_idx[j]
    gq, gp = relative_arrays(gt.quats[gi], gt.positions[gi], gt.quats[gj], gt.positions[gj])
    eq, ep = relative_arrays(est.quats[ei], est.positions[ei], est.quats[ej], est.positions[ej])
    errq, errp = relative_arrays(gq, gp, eq, ep)
    trans = np.linalg.norm(errp, axis=1)
    rot = quat_angle(errq)
    return RPEResult(
        trans_rmse=float(np.sqrt(np.mean(trans * trans))),
        rot_rmse=float(np.sqrt(np.mean(rot * rot))),
        trans_errors=trans,
        rot_errors=rot,
        delta=float(delta),
    )


# ---------------------------------------------------------------------------
# Velocity errors and the robustness curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorSeries:
    """Errors at the covered ground-truth instants.

    ``gt_total`` counts every ground-truth evaluation instant, covered or not.
    """

    t: np.ndarray
    e: np.ndarray
    gt_total: int

    def __post_init__(self):
        if len(self.e) > self.gt_total:
            raise InvalidArgumentError(f"{len(self.e)} samples exceed gt_total={self.gt_total}")
        if np.any(~np.isfinite(self.e)) or np.any(self.e < 0):
            raise InvalidArgumentError("errors must be finite and non-negative")

    @classmethod
    def from_errors(cls, errors, gt_total: int | None = None) -> ErrorSeries:
        e = np.asarray(errors, dtype=float).reshape(-1)
        return cls(np.arange(len(e), dtype=float), e, len(e) if gt_total is None else int(gt_total))

    @property
    def covered(self) -> int:
        return len(self.e)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.e.tolist()))


def _as_pieces(spline) -> list[SplineTrajectory]:
    if spline is None:
        return []
    if isinstance(spline, SplineTrajectory):
        return [spline]
    return list(spline)


def _evaluate_pieces(pieces: Sequence[SplineTrajectory], t: np.ndarray):
    covered = np.zeros(len(t), dtype=bool)
    v = np.zeros((len(t), 3))
    w = np.zeros((len(t), 3))
    for piece in pieces:
        m = piece.contains(t) & ~covered
        if np.any(m):
            v[m], w[m] = piece.velocities_at(np.clip(t[m], *piece.valid_span))
            covered |= m
    return covered, v, w


def evaluation_grid(gt_spline, rate: float = DEFAULT_RATE) -> np.ndarray:
    """Uniform instants at ``rate`` Hz inside the ground-truth spline pieces."""
    pieces = _as_pieces(gt_spline)
    if not pieces:
        return np.zeros(0)
    start = min(p.valid_span[0] for p in pieces)
    end = max(p.valid_span[1] for p in pieces)
    n = int(math.floor((end - start) * rate + 1e-9)) + 1
    t = start + np.arange(n) / rate
    inside = np.zeros(n, dtype=bool)
    for p in pieces:
        inside |= p.contains(t)
    return t[inside]


def velocity_error_series(est_spline, gt_spline, rate: float = DEFAULT_RATE) -> tuple[ErrorSeries, ErrorSeries]:
    """Linear and angular velocity error magnitudes on the gt evaluation grid.

    Either argument may be a single spline or a list of spline pieces. Grid
    instants outside the estimate count towards ``gt_total`` only.
    """
    if not (rate > 0 and math.isfinite(rate)):
        raise InvalidArgumentError(f"rate must be positive, got {rate!r}")
    t = evaluation_grid(gt_spline, rate)
    _, v_gt, w_gt = _evaluate_pieces(_as_pieces(gt_spline), t)
    covered, v_est, w_est = _evaluate_pieces(_as_pieces(est_spline), t)
    tc = t[covered]
    lin = np.linalg.norm(v_gt[covered] - v_est[covered], axis=1)
    ang = np.linalg.norm(w_gt[covered] - w_est[covered], axis=1)
    return ErrorSeries(tc, lin, len(t)), ErrorSeries(tc, ang, len(t))


def precision_recall(series: ErrorSeries, threshold: float) -> tuple[float, float]:
    """Inlier fractions for ``e < threshold`` over estimate samples / gt instants."""
    if not threshold >= 0:
        raise InvalidArgumentError(f"threshold must be >= 0, got {threshold!r}")
    inliers = int(np.count_nonzero(series.e < threshold))
    precision = inliers / series.covered if series.covered else 1.0
    recall = inliers / series.gt_total if series.gt_total else 0.0
    return precision, recall


def f1(precision: float, recall: float) -> float:
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise InvalidArgumentError(f"precision and recall must lie in [0, 1], got {precision!r}, {recall!r}")
    total = precision + recall
    return 0.0 if total == 0 else 2.0 * precision * recall / total


def threshold_to_mapped(threshold):
    return np.exp(-THRESHOLD_DECAY * np.asarray(threshold, dtype=float))


def mapped_to_threshold(s):
    # abs() turns the -0.0 produced at s == 1 into 0.0
    return np.abs(-np.log(np.asarray(s, dtype=float)) / THRESHOLD_DECAY)


@dataclass(frozen=True)
class RobustnessCurve:
    kind: str
    s: np.ndarray
    T: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    auc: float

    @classmethod
    def empty(cls, kind: str) -> RobustnessCurve:
        z = np.zeros(0)
        return cls(kind, z, z, z, z, z, 0.0)

    @property
    def points(self) -> list[tuple[float, float, float, float, float]]:
        return list(zip(self.s.tolist(), self.T.tolist(), self.precision.tolist(), self.recall.tolist(), self.f1.tolist()))

    def __len__(self) -> int:
        return len(self.s)


def robustness_auc(series: ErrorSeries, n_thresholds: int = DEFAULT_THRESHOLDS, kind: str = "linear") -> RobustnessCurve:
    """F1 curve on ``s_k = k / n`` (k = 1..n) and its area over s in [0, 1].

    The point at ``s = 1`` (``T = 0``) uses the limit ``T -> 0+``, i.e. exact
    zeros count as inliers there. The interval ``[0, 1/n]`` is closed with
    the F1 value at the largest sampled threshold.
    """
    if int(n_thresholds) != n_thresholds or n_thresholds < 2:
        raise InvalidArgumentError(f"n_thresholds must be an integer >= 2, got {n_thresholds!r}")
    n = int(n_thresholds)
    s = np.arange(1, n + 1) / n
    T = mapped_to_threshold(s)
    e = np.sort(series.e)
    counts = np.searchsorted(e, T, side="left")
    counts[T == 0] = np.searchsorted(e, 0.0, side="right")
    precision = counts / series.covered if series.covered else np.ones(n)
    recall = counts / series.gt_total if series.gt_total else np.zeros(n)
    denom = precision + recall
    f1_values = np.divide(2.0 * precision * recall, denom, out=np.zeros(n), where=denom > 0)
    auc = f1_values[0] * s[0] + float(np.sum(0.5 * (f1_values[1:] + f1_values[:-1]) * np.diff(s)))
    auc = min(max(auc, 0.0), 1.0)
    return RobustnessCurve(kind, s, T, precision, recall, f1_values, float(auc))
