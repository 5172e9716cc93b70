"""Cumulative cubic B-splines on SE(3) over uniformly spaced control poses.

Segment ``i`` (``u = (t - t_i) / dt`` in [0, 1]) evaluates

    T(u) = T_{i-1} * exp(b1(u) xi_i) * exp(b2(u) xi_{i+1}) * exp(b3(u) xi_{i+2})

with ``xi_k = log(T_{k-1}^-1 T_k)`` and ``b`` the cumulative cubic basis.
Control poses are the trajectory samples themselves, so the curve
approximates rather than interpolates them; the valid span is
``[t_1, t_{n-2}]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError, OutOfSpanError
from .geometry import (
    Pose,
    Rotation,
    compose_arrays,
    exp_se3,
    hat_se3,
    log_se3,
    quat_to_matrix,
    relative_arrays,
    se3_matrix,
    vee,
)
from .trajio import Trajectory

# Cumulative cubic basis matrix, including the 1/6 normalisation that makes
# the first basis function identically one.
BASIS_MATRIX = np.array(
    [
        [6.0, 0.0, 0.0, 0.0],
        [5.0, 3.0, -3.0, 1.0],
        [1.0, 3.0, 3.0, -2.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
) / 6.0

MIN_CONTROL_POSES = 4
UNIFORM_RTOL = 1e-9


@dataclass(frozen=True)
class BasisVector:
    b: np.ndarray
    bdot: np.ndarray


@dataclass(frozen=True)
class VelocitySample:
    """World-frame linear (m/s) and angular (rad/s) velocity at time ``t``."""

    t: float
    v_w: np.ndarray
    w_w: np.ndarray


def basis_arrays(u) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised cumulative basis: ``(b, db/du)``, each of shape (..., 4)."""
    u = np.asarray(u, dtype=float)
    one = np.ones_like(u)
    zero = np.zeros_like(u)
    powers = np.stack([one, u, u * u, u * u * u], axis=-1)
    dpowers = np.stack([zero, one, 2.0 * u, 3.0 * u * u], axis=-1)
    return powers @ BASIS_MATRIX.T, dpowers @ BASIS_MATRIX.T


def cumulative_basis(u: float) -> BasisVector:
    if not (0.0 <= u <= 1.0):
        raise InvalidArgumentError(f"u must lie in [0, 1], got {u!r}")
    b, bdot = basis_arrays(u)
    return BasisVector(b=b, bdot=bdot)


def _uniform_tolerance(t: np.ndarray, dt: float) -> float:
    # Absolute stamps (e.g. Unix time) carry ~1e-7 s of rounding on their own.
    return UNIFORM_RTOL * dt + 8.0 * np.finfo(float).eps * float(np.max(np.abs(t)))


class SplineTrajectory:
    """A fitted spline; immutable, evaluation methods are pure."""

    def __init__(self, t0: float, dt: float, quats: np.ndarray, positions: np.ndarray, twists: np.ndarray, name=""):
        self.t0 = float(t0)
        self.dt = float(dt)
        self.quats = quats
        self.positions = positions
        self.twists = twists
        self.name = name
        for a in (quats, positions, twists):
            a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.quats)

    def __repr__(self) -> str:
        return f"SplineTrajectory(n={len(self)}, dt={self.dt!r}, span={self.valid_span})"

    @property
    def knot_times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) * self.dt

    @property
    def control(self) -> list[tuple[float, Pose]]:
        return [(float(t), Pose(Rotation(q), p)) for t, q, p in zip(self.knot_times, self.quats, self.positions)]

    @property
    def valid_span(self) -> tuple[float, float]:
        return self.t0 + self.dt, self.t0 + (len(self) - 2) * self.dt

    def contains(self, t) -> np.ndarray:
        lo, hi = self.valid_span
        eps = 1e-9 * self.dt
        t = np.asarray(t, dtype=float)
        return (t >= lo - eps) & (t <= hi + eps)

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = (t - self.t0) / self.dt
        i = np.clip(np.floor(x).astype(int), 1, len(self) - 3)
        u = np.clip(x - i, 0.0, 1.0)
        return i, u

    def _check_span(self, t: np.ndarray) -> None:
        inside = self.contains(t)
        if not np.all(inside):
            bad = float(np.atleast_1d(t)[np.flatnonzero(~np.atleast_1d(inside))[0]])
            raise OutOfSpanError(bad, self.valid_span)

    def evaluate_segments(self, i, u, derivative: bool = True):
        """Evaluate at explicit segment indices and local parameters.

        Returns ``(quats, positions, v_w, w_w)``; the velocities are ``None``
        when ``derivative`` is false.
        """
        i = np.asarray(i, dtype=int)
        u = np.asarray(u, dtype=float)
        b, bdot = basis_arrays(u)
        q = self.quats[i - 1]
        p = self.positions[i - 1]
        factors = []
        for j in (1, 2, 3):
            xi = self.twists[i + j - 1]
            dq, dp = exp_se3(b[..., j, None] * xi)
            q, p = compose_arrays(q, p, dq, dp)
            factors.append((xi, dq, dp))
        if not derivative:
            return q, p, None, None

        # d/dt exp(b_j xi) = (bdot_j / dt) hat(xi) exp(b_j xi); sum the three
        # product-rule terms, each with its derivative slotted in place.
        A = se3_matrix(self.quats[i - 1], self.positions[i - 1])
        E = [se3_matrix(dq, dp) for _, dq, dp in factors]
        H = [(bdot[..., j, None, None] / self.dt) * hat_se3(factors[j - 1][0]) for j in (1, 2, 3)]
        E12 = E[0] @ E[1]
        term = H[0] @ E[0] @ E[1] @ E[2] + E[0] @ H[1] @ E[1] @ E[2] + E12 @ H[2] @ E[2]
        Tdot = A @ term
        R = quat_to_matrix(q)
        v_w = Tdot[..., :3, 3]
        w_w = vee(Tdot[..., :3, :3] @ np.swapaxes(R, -1, -2))
        return q, p, v_w, w_w

    def poses_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Batched pose evaluation: ``(quats (N, 4), positions (N, 3))``."""
        t = np.asarray(t, dtype=float)
        self._check_span(t)
        q, p, _, _ = self.evaluate_segments(*self._locate(t), derivative=False)
        return q, p

    def velocities_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Batched world-frame velocities: ``(v_w (N, 3), w_w (N, 3))``."""
        t = np.asarray(t, dtype=float)
        self._check_span(t)
        _, _, v, w = self.evaluate_segments(*self._locate(t))
        return v, w

    def pose_at(self, t: float) -> Pose:
        q, p = self.poses_at(float(t))
        return Pose(Rotation(q), p)

    def velocity_at(self, t: float) -> VelocitySample:
        v, w = self.velocities_at(float(t))
        return VelocitySample(float(t), v, w)


def fit(traj: Trajectory) -> SplineTrajectory:
    """Use the uniformly spaced samples of ``traj`` directly as control poses.

    Raises:
        InsufficientDataError: fewer than 4 samples.
        InvalidArgumentError: timestamps are not uniformly spaced (run
            ``resample_uniform`` first).
    """
    n = len(traj)
    if n < MIN_CONTROL_POSES:
        raise InsufficientDataError(f"spline fit needs at least {MIN_CONTROL_POSES} poses, got {n}")
    t = traj.t
    dt = (t[-1] - t[0]) / (n - 1)
    dev = np.abs(np.diff(t) - dt)
    if np.max(dev) > _uniform_tolerance(t, dt):
        k = int(np.argmax(dev))
        raise InvalidArgumentError(
            f"timestamps are not uniform (spacing {t[k + 1] - t[k]!r} at index {k} vs mean {dt!r}); "
            "resample with trajio.resample_uniform before fitting"
        )
    twists = np.zeros((n, 6))
    rq, rp = relative_arrays(traj.quats[:-1], traj.positions[:-1], traj.quats[1:], traj.positions[1:])
    twists[1:] = log_se3(rq, rp)
    return SplineTrajectory(t[0], dt, np.array(traj.quats), np.array(traj.positions), twists, name=traj.name)


def fit_pieces(traj: Trajectory) -> list[SplineTrajectory]:
    """Fit one spline per contiguous segment; segments under 4 poses are skipped."""
    return [
        fit(traj.segment(a, b)) for a, b in traj.segments() if b - a >= MIN_CONTROL_POSES
    ]


def pose_at(spline: SplineTrajectory, t: float) -> Pose:
    return spline.pose_at(t)


def velocity_at(spline: SplineTrajectory, t: float) -> VelocitySample:
    return spline.velocity_at(t)
