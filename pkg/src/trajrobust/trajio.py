"""Trajectory containers, TUM file I/O, timestamp association and resampling."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError, ParseError
from .geometry import (
    Pose,
    Rotation,
    compose_arrays,
    exp_se3,
    log_se3,
    quat_normalize,
    relative_arrays,
)

DEFAULT_MAX_DT = 0.01
DUPLICATE_EPS = 1e-9
GAP_BREAK_FACTOR = 10.0


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    pose: Pose


class Trajectory:
    """Time-stamped SE(3) poses stored column-wise.

    ``t`` is (N,), ``positions`` (N, 3) and ``quats`` (N, 4) in (x, y, z, w)
    order. ``breaks`` lists indices where a new contiguous segment starts;
    resampling records gaps there instead of interpolating across them.
    """

    __slots__ = ("t", "positions", "quats", "name", "frame", "breaks")

    def __init__(self, t, positions, quats, name: str = "", frame: str = "world", breaks: Iterable[int] = ()):
        t = np.array(t, dtype=float).reshape(-1)
        positions = np.array(positions, dtype=float).reshape(-1, 3)
        quats = np.array(quats, dtype=float).reshape(-1, 4)
        if not (len(t) == len(positions) == len(quats)):
            raise InvalidArgumentError(
                f"length mismatch: {len(t)} timestamps, {len(positions)} positions, {len(quats)} quaternions"
            )
        if len(t) == 0:
            raise InsufficientDataError("trajectory needs at least 1 sample")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(positions))):
            raise InvalidArgumentError("timestamps and positions must be finite")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("timestamps must be strictly increasing")
        quats = quat_normalize(quats)
        breaks = tuple(sorted(int(b) for b in breaks))
        if any(b <= 0 or b >= len(t) for b in breaks):
            raise InvalidArgumentError(f"break indices must lie in [1, {len(t) - 1}], got {breaks}")
        for a in (t, positions, quats):
            a.setflags(write=False)
        self.t = t
        self.positions = positions
        self.quats = quats
        self.name = name
        self.frame = frame
        self.breaks = breaks

    @classmethod
    def from_samples(cls, samples: Iterable[TrajectorySample], **kwargs) -> Trajectory:
        samples = list(samples)
        return cls(
            [s.t for s in samples],
            [s.pose.translation for s in samples],
            [s.pose.rotation.quat for s in samples],
            **kwargs,
        )

    @classmethod
    def from_poses(cls, t, poses: Iterable[Pose], **kwargs) -> Trajectory:
        poses = list(poses)
        return cls(t, [p.translation for p in poses], [p.rotation.quat for p in poses], **kwargs)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> TrajectorySample:
        return TrajectorySample(float(self.t[i]), self.pose(i))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"Trajectory(name={self.name!r}, n={len(self)}, span=[{self.t[0]!r}, {self.t[-1]!r}])"

    @property
    def samples(self) -> list[TrajectorySample]:
        return list(self)

    def pose(self, i: int) -> Pose:
        return Pose(Rotation(self.quats[i]), self.positions[i])

    def replace(self, **changes) -> Trajectory:
        kwargs = dict(
            t=self.t, positions=self.positions, quats=self.quats, name=self.name, frame=self.frame, breaks=self.breaks
        )
        kwargs.update(changes)
        return Trajectory(**kwargs)

    def select(self, indices) -> Trajectory:
        """Sub-trajectory at the given (sorted) indices; breaks are dropped."""
        idx = np.asarray(indices)
        return Trajectory(self.t[idx], self.positions[idx], self.quats[idx], name=self.name, frame=self.frame)

    def segments(self) -> list[tuple[int, int]]:
        """Half-open index ranges of contiguous segments."""
        edges = [0, *self.breaks, len(self)]
        return [(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def segment(self, start: int, stop: int) -> Trajectory:
        return Trajectory(
            self.t[start:stop], self.positions[start:stop], self.quats[start:stop], name=self.name, frame=self.frame
        )

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.positions, axis=0), axis=1)))

    def median_spacing(self) -> float:
        if len(self) < 2:
            raise InsufficientDataError("median spacing needs at least 2 samples")
        return float(np.median(np.diff(self.t)))


# ---------------------------------------------------------------------------
# TUM format
# ---------------------------------------------------------------------------


def parse_tum(source: TextIO | str, name: str | None = None) -> Trajectory:
    """Parse TUM text ``timestamp tx ty tz qx qy qz qw``.

    Args:
        source: open text stream, or the text itself.
        name: label for the trajectory; defaults to the stream's ``name``.

    Raises:
        ParseError: on malformed lines, zero quaternions or duplicate stamps.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    label = name if name is not None else str(getattr(source, "name", ""))
    rows = []
    lines = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}: {line!r}", lineno, label or None)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno, label or None) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"non-finite value in {line!r}", lineno, label or None)
        if values[4] == values[5] == values[6] == values[7] == 0.0:
            raise ParseError("zero-norm quaternion", lineno, label or None)
        rows.append(values)
        lines.append(lineno)
    if not rows:
        raise ParseError("no trajectory samples found", None, label or None)

    data = np.array(rows)
    line_numbers = np.array(lines)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    line_numbers = line_numbers[order]
    dup = np.flatnonzero(np.diff(data[:, 0]) < DUPLICATE_EPS)
    if dup.size:
        k = dup[0]
        a, b = sorted((int(line_numbers[k]), int(line_numbers[k + 1])))
        raise ParseError(f"duplicate timestamp {data[k, 0]!r} on lines {a} and {b}", b, label or None)
    return Trajectory(data[:, 0], data[:, 1:4], data[:, 4:8], name=label)


def read_tum(path: str | os.PathLike, name: str | None = None) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        return parse_tum(fh, name=name if name is not None else os.path.basename(os.fspath(path)))


def format_tum(traj: Trajectory) -> str:
    """Serialise with 17 significant digits so reparsing is lossless."""
    data = np.column_stack([traj.t, traj.positions, traj.quats])
    return "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in data)


def write_tum(traj: Trajectory, destination: TextIO | str | os.PathLike) -> None:
    text = format_tum(traj)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Association
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssociationSet:
    est_idx: np.ndarray
    gt_idx: np.ndarray
    dt: np.ndarray
    unmatched_est: np.ndarray
    unmatched_gt: np.ndarray
    max_dt: float
    pairs: list[tuple[int, int, float]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", [(int(e), int(g), float(d)) for e, g, d in zip(self.est_idx, self.gt_idx, self.dt)]
        )

    def __len__(self) -> int:
        return len(self.est_idx)


def associate(est: Trajectory, gt: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> AssociationSet:
    """Greedy mutual-nearest timestamp matching.

    Candidate pairs within ``max_dt`` are visited by increasing ``|dt|``
    (ties: earlier gt stamp, then earlier est stamp) and accepted while both
    endpoints are unused. Pairs come back ordered by gt index.
    """
    if not (max_dt > 0 and math.isfinite(max_dt)):
        raise InvalidArgumentError(f"max_dt must be positive and finite, got {max_dt!r}")
    et, gtt = est.t, gt.t
    lo = np.searchsorted(gtt, et - max_dt, side="left")
    hi = np.searchsorted(gtt, et + max_dt, side="right")
    counts = hi - lo
    total = int(counts.sum())
    cand_e = np.repeat(np.arange(len(et)), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    cand_g = np.repeat(lo, counts) + (np.arange(total) - starts)
    cand_dt = np.abs(et[cand_e] - gtt[cand_g])
    keep = cand_dt <= max_dt
    cand_e, cand_g, cand_dt = cand_e[keep], cand_g[keep], cand_dt[keep]
    order = np.lexsort((et[cand_e], gtt[cand_g], cand_dt))

    used_e = np.zeros(len(et), dtype=bool)
    used_g = np.zeros(len(gtt), dtype=bool)
    pe, pg, pd = [], [], []
    for k in order:
        e, g = cand_e[k], cand_g[k]
        if used_e[e] or used_g[g]:
            continue
        used_e[e] = used_g[g] = True
        pe.append(e)
        pg.append(g)
        pd.append(cand_dt[k])
    pe = np.array(pe, dtype=int)
    pg = np.array(pg, dtype=int)
    pd = np.array(pd, dtype=float)
    by_gt = np.argsort(pg, kind="stable")
    return AssociationSet(
        est_idx=pe[by_gt],
        gt_idx=pg[by_gt],
        dt=pd[by_gt],
        unmatched_est=np.flatnonzero(~used_e),
        unmatched_gt=np.flatnonzero(~used_g),
        max_dt=float(max_dt),
    )


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def interpolate_poses(
    traj: Trajectory, times, gap_break: float | None = None, tol: float = 0.0
) -> tuple[np.ndarray, ...]:
    """Screw-interpolate ``traj`` at ``times`` inside its time span.

    Returns ``(mask, quats, positions)`` where ``mask`` flags the times that
    could be interpolated, i.e. inside the span and not strictly inside an
    input gap longer than ``gap_break``.
    """
    times = np.asarray(times, dtype=float)
    t = traj.t
    n = len(t)
    if n < 2:
        raise InsufficientDataError("interpolation needs at least 2 samples")
    a = np.clip(np.searchsorted(t, times, side="right") - 1, 0, n - 2)
    span = t[a + 1] - t[a]
    alpha = (times - t[a]) / span
    mask = (times >= t[0] - tol) & (times <= t[-1] + tol)
    if gap_break is not None:
        in_gap = (span > gap_break) & (alpha > 0) & (alpha < 1)
        mask &= ~in_gap
    alpha = np.clip(alpha, 0.0, 1.0)

    a = a[mask]
    alpha = alpha[mask]
    qa, pa = traj.quats[a], traj.positions[a]
    need = np.unique(a)
    xi = np.zeros((n - 1, 6))
    if need.size:
        rq, rp = relative_arrays(traj.quats[need], traj.positions[need], traj.quats[need + 1], traj.positions[need + 1])
        xi[need] = log_se3(rq, rp)
    dq, dp = exp_se3(alpha[:, None] * xi[a])
    q, p = compose_arrays(qa, pa, dq, dp)
    return mask, q, p


def resample_uniform(traj: Trajectory, dt: float | None = None, gap_break: float | None = None) -> Trajectory:
    """Resample onto ``t0, t0 + dt, ...`` by geodesic SE(3) interpolation.

    Args:
        traj: input with at least 2 samples.
        dt: grid spacing; defaults to the median input spacing.
        gap_break: input holes longer than this are not bridged; the grid
            points inside them are omitted and a segment break is recorded.
            Defaults to ``10 * dt``.
    """
    if len(traj) < 2:
        raise InsufficientDataError(f"resampling needs at least 2 samples, got {len(traj)}")
    if dt is None:
        dt = traj.median_spacing()
    if not (dt > 0 and math.isfinite(dt)):
        raise InvalidArgumentError(f"dt must be positive and finite, got {dt!r}")
    if gap_break is None:
        gap_break = GAP_BREAK_FACTOR * dt
    t0 = traj.t[0]
    k_max = int(math.floor((traj.t[-1] - t0) / dt + 1e-9))
    k = np.arange(k_max + 1)
    grid = t0 + k * dt
    mask, q, p = interpolate_poses(traj, grid, gap_break, tol=1e-9 * dt)
    kept = k[mask]
    breaks = (np.flatnonzero(np.diff(kept) > 1) + 1).tolist()
    return Trajectory(grid[mask], p, q, name=traj.name, frame=traj.frame, breaks=breaks)
