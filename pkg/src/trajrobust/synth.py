"""Synthetic trajectories with closed-form velocities, and degradations.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64), so a given
seed is bit-reproducible within one build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .geometry import (
    Pose,
    compose_arrays,
    exp_se3,
    exp_so3,
    quat_conjugate,
    quat_multiply,
    quat_rotate,
)
from .spline import VelocitySample
from .trajio import Trajectory

DROPOUT_MODES = ("uniform", "contiguous-block")


def _vec3(v, name):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be a finite 3-vector, got {v!r}")
    return a


def _sample_times(duration: float, rate: float) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9)) + 1
    return np.arange(n) / rate


@dataclass(frozen=True)
class ScrewSpec:
    """Constant-twist motion; ``v`` and ``w`` are world-frame rates at t=0."""

    v: tuple = (0.0, 0.0, 0.0)
    w: tuple = (0.0, 0.0, 0.0)
    duration: float = 10.0
    rate: float = 10.0
    start: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        _vec3(self.v, "v")
        _vec3(self.w, "w")
        if not (self.duration > 0 and self.rate > 0):
            raise InvalidArgumentError(f"duration and rate must be positive, got {self.duration!r}, {self.rate!r}")


@dataclass(frozen=True)
class WaveSpec:
    """Smooth non-screw motion: sinusoidal position plus yaw/roll oscillation.

    Used where velocity must vary in time, e.g. to make interpolation over
    dropped samples lose information.
    """

    duration: float = 20.0
    rate: float = 10.0
    amplitude: tuple = (2.0, 1.0, 0.3)
    frequency: tuple = (0.5, 0.7, 0.3)
    forward_speed: float = 0.5
    yaw_amplitude: float = 0.8
    yaw_frequency: float = 0.4
    roll_amplitude: float = 0.2
    roll_frequency: float = 0.6

    def __post_init__(self):
        if not (self.duration > 0 and self.rate > 0):
            raise InvalidArgumentError(f"duration and rate must be positive, got {self.duration!r}, {self.rate!r}")


@dataclass(frozen=True)
class DegradationSpec:
    """Sample dropout, pose noise and a single pose spike.

    ``noise_sigma_vel`` (m/s) adds zero-mean white noise to the velocity,
    i.e. a random walk on position with per-step sigma ``noise_sigma_vel * dt``.
    ``spike`` is ``(t, offset)``: ``offset`` is added to the sample nearest ``t``.
    """

    dropout_fraction: float = 0.0
    dropout_mode: str = "uniform"
    noise_sigma_trans: float = 0.0
    noise_sigma_rot: float = 0.0
    noise_sigma_vel: float = 0.0
    spike: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.dropout_fraction < 1.0):
            raise InvalidArgumentError(f"dropout_fraction must lie in [0, 1), got {self.dropout_fraction!r}")
        if self.dropout_mode not in DROPOUT_MODES:
            raise InvalidArgumentError(f"dropout_mode must be one of {DROPOUT_MODES}, got {self.dropout_mode!r}")
        for name in ("noise_sigma_trans", "noise_sigma_rot", "noise_sigma_vel"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value!r}")
        if self.spike is not None:
            t, offset = self.spike
            if not math.isfinite(t):
                raise InvalidArgumentError(f"spike time must be finite, got {t!r}")
            _vec3(offset, "spike offset")


def gen_screw(spec: ScrewSpec, name: str = "screw") -> tuple[Trajectory, list[VelocitySample]]:
    """Sample ``T(t) = start * exp(t * xi)`` and its world-frame velocities.

    The twist is chosen so the world-frame rates at t=0 equal ``spec.v`` and
    ``spec.w``. Then ``w_w(t) = w`` for all t and ``v_w(t) = R(t) R0^T v``.
    """
    q0 = spec.start.rotation.quat
    p0 = spec.start.translation
    q0_inv = quat_conjugate(q0)
    rho = quat_rotate(q0_inv, _vec3(spec.v, "v"))
    phi = quat_rotate(q0_inv, _vec3(spec.w, "w"))
    xi = np.concatenate([rho, phi])
    t = _sample_times(spec.duration, spec.rate)
    dq, dp = exp_se3(t[:, None] * xi)
    q, p = compose_arrays(np.broadcast_to(q0, dq.shape), np.broadcast_to(p0, dp.shape), dq, dp)
    v_w = quat_rotate(q, rho)
    w_w = quat_rotate(q, phi)
    traj = Trajectory(t, p, q, name=name)
    return traj, [VelocitySample(float(tk), v, w) for tk, v, w in zip(t, v_w, w_w)]


def wave_state(spec: WaveSpec, t) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form ``(quats, positions, v_w, w_w)`` of the wave motion at ``t``."""
    t = np.asarray(t, dtype=float)
    A = np.asarray(spec.amplitude, dtype=float)
    f = np.asarray(spec.frequency, dtype=float)
    phase = np.array([0.0, 0.5, 1.0])
    arg = t[:, None] * f + phase
    p = A * np.sin(arg)
    p[:, 0] += spec.forward_speed * t
    v = A * f * np.cos(arg)
    v[:, 0] += spec.forward_speed

    yaw = spec.yaw_amplitude * np.sin(spec.yaw_frequency * t)
    yaw_rate = spec.yaw_amplitude * spec.yaw_frequency * np.cos(spec.yaw_frequency * t)
    roll = spec.roll_amplitude * np.sin(spec.roll_frequency * t)
    roll_rate = spec.roll_amplitude * spec.roll_frequency * np.cos(spec.roll_frequency * t)
    zeros = np.zeros_like(t)
    q_yaw = exp_so3(np.column_stack([zeros, zeros, yaw]))
    q_roll = exp_so3(np.column_stack([roll, zeros, zeros]))
    q = quat_multiply(q_yaw, q_roll)
    # R = Rz(yaw) Rx(roll): w_w = yaw' z + Rz(yaw) (roll' x)
    w = quat_rotate(q_yaw, np.column_stack([roll_rate, zeros, zeros]))
    w[:, 2] += yaw_rate
    return q, p, v, w


def gen_wave(spec: WaveSpec, name: str = "wave") -> tuple[Trajectory, list[VelocitySample]]:
    t = _sample_times(spec.duration, spec.rate)
    q, p, v, w = wave_state(spec, t)
    traj = Trajectory(t, p, q, name=name)
    return traj, [VelocitySample(float(tk), vk, wk) for tk, vk, wk in zip(t, v, w)]


def velocity_arrays(samples: list[VelocitySample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack velocity samples into ``(t, v_w, w_w)`` arrays."""
    return (
        np.array([s.t for s in samples]),
        np.array([s.v_w for s in samples]).reshape(-1, 3),
        np.array([s.w_w for s in samples]).reshape(-1, 3),
    )


def dropout_indices(n: int, spec: DegradationSpec, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices kept after dropping ``floor(n * fraction)`` samples."""
    k = int(math.floor(n * spec.dropout_fraction))
    if n - k < 4:
        raise InsufficientDataError(f"dropout leaves {n - k} samples; at least 4 are required")
    if k == 0:
        return np.arange(n)
    if spec.dropout_mode == "uniform":
        removed = rng.choice(n, size=k, replace=False)
    else:
        start = int(rng.integers(0, n - k + 1))
        removed = np.arange(start, start + k)
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    return np.flatnonzero(keep)


def degrade(traj: Trajectory, spec: DegradationSpec) -> Trajectory:
    """Apply dropout, then noise, then the spike. Deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    keep = dropout_indices(len(traj), spec, rng)
    t = traj.t[keep]
    p = np.array(traj.positions[keep])
    q = np.array(traj.quats[keep])
    n = len(t)

    if spec.noise_sigma_trans > 0:
        p += rng.normal(scale=spec.noise_sigma_trans, size=(n, 3))
    if spec.noise_sigma_rot > 0:
        axis = rng.normal(size=(n, 3))
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        angle = rng.normal(scale=spec.noise_sigma_rot, size=n)
        q = quat_multiply(q, exp_so3(axis * angle[:, None]))
    if spec.noise_sigma_vel > 0:
        steps = np.diff(t, prepend=t[0])
        kicks = rng.normal(scale=spec.noise_sigma_vel, size=(n, 3)) * steps[:, None]
        p += np.cumsum(kicks, axis=0)
    if spec.spike is not None:
        t_spike, offset = spec.spike
        k = int(np.argmin(np.abs(t - t_spike)))
        p[k] += _vec3(offset, "spike offset")
    return Trajectory(t, p, q, name=traj.name, frame=traj.frame)
