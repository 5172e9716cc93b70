"""SO(3)/SE(3) primitives.

Rotations are carried as unit quaternions in (x, y, z, w) order, the same
column order as TUM trajectory files, canonicalised to ``w >= 0``. Twists are
ordered (rho, phi): translational part first, rotational part second.

Two layers live here. The array functions (``quat_*``, ``exp_so3``,
``exp_se3`` ...) are vectorised over leading dimensions and are what the
spline and metric code use on whole trajectories. The small immutable
``Rotation`` / ``Pose`` / ``Twist`` types wrap them for scalar use.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, InvalidArgumentError

# Below these the sin(x)/x style coefficients switch to Taylor series.
SMALL_ANGLE = 1e-8
# Cancellation-prone coefficients (x - sin x, 1 - x cot x) use series below this.
SERIES_ANGLE = 1e-3
# se3_log refuses rotations this close to a half turn.
LOG_PI_MARGIN = 1e-6


def _as_vec3(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape[-1:] != (3,):
        raise InvalidArgumentError(f"{name} must have trailing dimension 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite, got {arr!r}")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Skew operators
# ---------------------------------------------------------------------------


def skew(v) -> np.ndarray:
    """Hat operator: 3-vector(s) to skew-symmetric 3x3 matrix(ces)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m) -> np.ndarray:
    """Inverse of :func:`skew`, using the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def hat_se3(xi) -> np.ndarray:
    """4x4 Lie-algebra matrix of twist(s) ordered (rho, phi)."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = skew(xi[..., 3:6])
    out[..., :3, 3] = xi[..., 0:3]
    return out


# ---------------------------------------------------------------------------
# Quaternion arrays, layout (..., 4) = (x, y, z, w)
# ---------------------------------------------------------------------------


def quat_canonical(q) -> np.ndarray:
    """Flip quaternion signs so that ``w >= 0``.

    When ``w == 0`` exactly the first non-zero vector component is made
    positive, so a half turn about +z has the single representation (0,0,1,0).
    """
    q = np.array(q, dtype=float, copy=True)
    w = q[..., 3]
    flip = w < 0
    zero_w = w == 0
    if np.any(zero_w):
        vec = q[..., :3]
        nz = vec != 0
        first = np.argmax(nz, axis=-1)
        lead = np.take_along_axis(vec, first[..., None], axis=-1)[..., 0]
        flip = flip | (zero_w & (lead < 0))
    q[flip] = -q[flip]
    return q


def quat_normalize(q) -> np.ndarray:
    """Normalise to unit length and canonicalise the sign."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if not np.all(np.isfinite(q)) or np.any(n == 0):
        raise InvalidArgumentError("quaternion must be finite and non-zero")
    return quat_canonical(q / n)


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate([-q[..., :3], q[..., 3:]], axis=-1)


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (rotation ``b`` applied first)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax, ay, az, aw = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bx, by, bz, bw = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., :3]
    w = q[..., 3:4]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - z * w)
    out[..., 0, 2] = 2 * (x * z + y * w)
    out[..., 1, 0] = 2 * (x * y + z * w)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - x * w)
    out[..., 2, 0] = 2 * (x * z - y * w)
    out[..., 2, 1] = 2 * (y * z + x * w)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix (..., 3, 3) to canonical unit quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    R = R.reshape((-1, 3, 3))
    m00, m11, m22 = R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]
    tr = m00 + m11 + m22
    case = np.argmax(np.stack([tr, m00, m11, m22], axis=-1), axis=-1)
    q = np.empty((R.shape[0], 4))

    m = case == 0
    if np.any(m):
        r = R[m]
        s = 2.0 * np.sqrt(1.0 + tr[m])
        q[m] = np.stack(
            [(r[:, 2, 1] - r[:, 1, 2]) / s, (r[:, 0, 2] - r[:, 2, 0]) / s, (r[:, 1, 0] - r[:, 0, 1]) / s, 0.25 * s],
            axis=-1,
        )
    m = case == 1
    if np.any(m):
        r = R[m]
        s = 2.0 * np.sqrt(1.0 + m00[m] - m11[m] - m22[m])
        q[m] = np.stack(
            [0.25 * s, (r[:, 0, 1] + r[:, 1, 0]) / s, (r[:, 0, 2] + r[:, 2, 0]) / s, (r[:, 2, 1] - r[:, 1, 2]) / s],
            axis=-1,
        )
    m = case == 2
    if np.any(m):
        r = R[m]
        s = 2.0 * np.sqrt(1.0 + m11[m] - m00[m] - m22[m])
        q[m] = np.stack(
            [(r[:, 0, 1] + r[:, 1, 0]) / s, 0.25 * s, (r[:, 1, 2] + r[:, 2, 1]) / s, (r[:, 0, 2] - r[:, 2, 0]) / s],
            axis=-1,
        )
    m = case == 3
    if np.any(m):
        r = R[m]
        s = 2.0 * np.sqrt(1.0 + m22[m] - m00[m] - m11[m])
        q[m] = np.stack(
            [(r[:, 0, 2] + r[:, 2, 0]) / s, (r[:, 1, 2] + r[:, 2, 1]) / s, 0.25 * s, (r[:, 1, 0] - r[:, 0, 1]) / s],
            axis=-1,
        )
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_canonical(q).reshape(batch + (4,))


def quat_angle(q) -> np.ndarray:
    """Rotation angle in [0, pi] of unit quaternion(s)."""
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., :3], axis=-1), np.abs(q[..., 3]))


# ---------------------------------------------------------------------------
# Exponential / logarithm maps on arrays
# ---------------------------------------------------------------------------


def exp_so3(phi) -> np.ndarray:
    """Rotation vector(s) to canonical unit quaternion(s)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    half = 0.5 * theta
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    w = np.where(small, 1.0 - theta * theta / 8.0, np.cos(half))
    return quat_canonical(np.concatenate([k[..., None] * phi, w[..., None]], axis=-1))


def log_so3(q) -> np.ndarray:
    """Unit quaternion(s) to principal rotation vector(s), norm <= pi."""
    q = quat_canonical(q)
    v = q[..., :3]
    w = q[..., 3]
    n = np.linalg.norm(v, axis=-1)
    small = n < 0.5 * SMALL_ANGLE
    safe_n = np.where(small, 1.0, n)
    safe_w = np.where(small, w, 1.0)
    k = np.where(
        small,
        2.0 / safe_w * (1.0 - n * n / (3.0 * safe_w * safe_w)),
        2.0 * np.arctan2(n, w) / safe_n,
    )
    return k[..., None] * v


def left_jacobian(phi) -> np.ndarray:
    """SO(3) left Jacobian V(phi), the matrix mapping rho to the SE(3) translation."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    t2 = theta * theta
    tiny = theta < SMALL_ANGLE
    small = theta < SERIES_ANGLE
    safe = np.where(tiny, 1.0, theta)
    s = np.sin(0.5 * safe) / safe
    b = np.where(tiny, 0.5 - t2 / 24.0, 2.0 * s * s)
    safe_s = np.where(small, 1.0, theta)
    c = np.where(
        small,
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        (safe_s - np.sin(safe_s)) / safe_s**3,
    )
    P = skew(phi)
    P2 = P @ P
    return np.eye(3) + b[..., None, None] * P + c[..., None, None] * P2


def left_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    t2 = theta * theta
    small = theta < SERIES_ANGLE
    safe = np.where(small, 1.0, theta)
    half = 0.5 * safe
    d = np.where(
        small,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
        (1.0 - half * np.cos(half) / np.sin(half)) / (safe * safe),
    )
    P = skew(phi)
    return np.eye(3) - 0.5 * P + d[..., None, None] * (P @ P)


def exp_se3(xi) -> tuple[np.ndarray, np.ndarray]:
    """Twist array(s) (..., 6) to (quaternion, translation)."""
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:6]
    q = exp_so3(phi)
    p = np.einsum("...ij,...j->...i", left_jacobian(phi), rho)
    return q, p


def log_se3(q, p) -> np.ndarray:
    """(quaternion, translation) array(s) to twist(s) ordered (rho, phi).

    Raises:
        DomainError: if any rotation angle is within 1e-6 of pi.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    angle = quat_angle(q)
    bad = angle >= math.pi - LOG_PI_MARGIN
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))
        worst = float(np.atleast_1d(angle)[idx[0]])
        raise DomainError(
            f"se3_log undefined for rotation angle {worst!r} rad (>= pi - {LOG_PI_MARGIN}); "
            f"{idx.size} offending element(s), first at index {int(idx[0])}"
        )
    phi = log_so3(q)
    rho = np.einsum("...ij,...j->...i", left_jacobian_inv(phi), p)
    return np.concatenate([rho, phi], axis=-1)


def se3_matrix(q, p) -> np.ndarray:
    """Homogeneous 4x4 matrix(ces) from (quaternion, translation)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.zeros(np.broadcast_shapes(q.shape[:-1], p.shape[:-1]) + (4, 4))
    out[..., :3, :3] = quat_to_matrix(q)
    out[..., :3, 3] = p
    out[..., 3, 3] = 1.0
    return out


def exp_se3_matrix(xi) -> np.ndarray:
    return se3_matrix(*exp_se3(xi))


def compose_arrays(qa, pa, qb, pb) -> tuple[np.ndarray, np.ndarray]:
    """Group product of pose arrays: (a * b)."""
    return quat_canonical(quat_multiply(qa, qb)), pa + quat_rotate(qa, pb)


def inverse_arrays(q, p) -> tuple[np.ndarray, np.ndarray]:
    qi = quat_conjugate(q)
    return quat_canonical(qi), -quat_rotate(qi, p)


def relative_arrays(qa, pa, qb, pb) -> tuple[np.ndarray, np.ndarray]:
    """``a^-1 * b`` for pose arrays."""
    qai = quat_conjugate(qa)
    return quat_canonical(quat_multiply(qai, qb)), quat_rotate(qai, pb - pa)


# ---------------------------------------------------------------------------
# Scalar value types
# ---------------------------------------------------------------------------


class Rotation:
    """Immutable 3D rotation backed by a canonical unit quaternion."""

    __slots__ = ("_q",)

    def __init__(self, quat):
        q = np.asarray(quat, dtype=float)
        if q.shape != (4,):
            raise InvalidArgumentError(f"quaternion must have 4 components, got shape {q.shape}")
        self._q = _frozen(quat_normalize(q))

    @classmethod
    def from_quat(cls, x: float, y: float, z: float, w: float) -> Rotation:
        return cls((x, y, z, w))

    @classmethod
    def identity(cls) -> Rotation:
        return cls((0.0, 0.0, 0.0, 1.0))

    @classmethod
    def from_matrix(cls, R) -> Rotation:
        R = np.asarray(R, dtype=float)
        if R.shape != (3, 3) or not np.all(np.isfinite(R)):
            raise InvalidArgumentError("rotation matrix must be a finite 3x3 array")
        return cls(matrix_to_quat(R))

    @property
    def quat(self) -> np.ndarray:
        """(x, y, z, w), read-only."""
        return self._q

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self._q)

    def angle(self) -> float:
        return float(quat_angle(self._q))

    def apply(self, v) -> np.ndarray:
        return quat_rotate(self._q, _as_vec3(v))

    def inverse(self) -> Rotation:
        return Rotation(quat_conjugate(self._q))

    def __mul__(self, other: Rotation) -> Rotation:
        if not isinstance(other, Rotation):
            return NotImplemented
        return Rotation(quat_multiply(self._q, other._q))

    def __repr__(self) -> str:
        x, y, z, w = self._q
        return f"Rotation(x={x!r}, y={y!r}, z={z!r}, w={w!r})"


class Twist:
    """se(3) tangent vector ordered (rho, phi)."""

    __slots__ = ("_rho", "_phi")

    def __init__(self, rho, phi):
        self._rho = _frozen(_as_vec3(rho, "rho"))
        self._phi = _frozen(_as_vec3(phi, "phi"))

    @classmethod
    def from_vector(cls, xi) -> Twist:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (6,):
            raise InvalidArgumentError(f"twist vector must have 6 components, got shape {xi.shape}")
        return cls(xi[:3], xi[3:])

    @property
    def rho(self) -> np.ndarray:
        return self._rho

    @property
    def phi(self) -> np.ndarray:
        return self._phi

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self._rho, self._phi])

    def __mul__(self, k: float) -> Twist:
        return Twist(self._rho * k, self._phi * k)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Twist(rho={self._rho.tolist()}, phi={self._phi.tolist()})"


class Pose:
    """Immutable rigid transform ``x -> R x + t``; ``a @ b`` composes."""

    __slots__ = ("_rotation", "_translation")

    def __init__(self, rotation: Rotation | None = None, translation=(0.0, 0.0, 0.0)):
        self._rotation = rotation if rotation is not None else Rotation.identity()
        self._translation = _frozen(_as_vec3(translation, "translation"))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4):
            raise InvalidArgumentError(f"pose matrix must be 4x4, got shape {T.shape}")
        return cls(Rotation.from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_arrays(cls, quat, translation) -> Pose:
        return cls(Rotation(quat), translation)

    @property
    def rotation(self) -> Rotation:
        return self._rotation

    @property
    def translation(self) -> np.ndarray:
        return self._translation

    @property
    def matrix(self) -> np.ndarray:
        return se3_matrix(self._rotation.quat, self._translation)

    def apply(self, point) -> np.ndarray:
        return self._rotation.apply(point) + self._translation

    def inverse(self) -> Pose:
        return pose_inverse(self)

    def __matmul__(self, other: Pose) -> Pose:
        if not isinstance(other, Pose):
            return NotImplemented
        return pose_compose(self, other)

    def __repr__(self) -> str:
        return f"Pose(rotation={self._rotation!r}, translation={self._translation.tolist()})"


def so3_exp(phi) -> Rotation:
    """Rodrigues rotation about ``phi / |phi|`` by angle ``|phi|``."""
    return Rotation(exp_so3(_as_vec3(phi, "phi")))


def so3_log(rotation: Rotation) -> np.ndarray:
    return log_so3(rotation.quat)


def se3_exp(xi) -> Pose:
    """Exponential map of a :class:`Twist` (or 6-vector ordered rho, phi)."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    q, p = exp_se3(xi.vector)
    return Pose(Rotation(q), p)


def se3_log(pose: Pose) -> Twist:
    """Inverse of :func:`se3_exp` for rotation angles below pi - 1e-6."""
    return Twist.from_vector(log_se3(pose.rotation.quat, pose.translation))


def pose_compose(a: Pose, b: Pose) -> Pose:
    q, p = compose_arrays(a.rotation.quat, a.translation, b.rotation.quat, b.translation)
    return Pose(Rotation(q), p)


def pose_inverse(pose: Pose) -> Pose:
    q, p = inverse_arrays(pose.rotation.quat, pose.translation)
    return Pose(Rotation(q), p)


def rotation_distance(a: Rotation, b: Rotation) -> float:
    """Angle of ``a^-1 b`` in radians."""
    return float(quat_angle(quat_multiply(quat_conjugate(a.quat), b.quat)))


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """(rotation angle, translation norm) of the discrepancy between two poses."""
    return rotation_distance(a.rotation, b.rotation), float(np.linalg.norm(a.translation - b.translation))
