"""Pinhole camera, quaternion/SE(3) algebra and pose-induced motion flow.

Conventions: camera frame is x right, y down, z forward. Pixel ``(u, v)`` is
``(column, row)`` and integer pixel coordinates denote pixel centres. A pose
``T_a_to_b`` maps coordinates expressed in frame ``a`` into frame ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

LOG_ANGLE_LIMIT = np.pi - 1e-6
_SERIES_ANGLE = 0.05  # below this, Jacobian coefficients use their Taylor series


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, factor):
        """Intrinsics for an image resampled by ``factor`` (e.g. 0.5 halves it)."""
        w = max(1, int(round(self.width * factor)))
        h = max(1, int(round(self.height * factor)))
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                min(self.cx * factor, w - 1), min(self.cy * factor, h - 1), w, h)

    def to_line(self):
        return f"{self.fx!r} {self.fy!r} {self.cx!r} {self.cy!r} {self.width} {self.height}"

    @classmethod
    def from_line(cls, line):
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"expected 6 intrinsics values, got {len(parts)}")
        fx, fy, cx, cy = (float(p) for p in parts[:4])
        return cls(fx, fy, cx, cy, int(parts[4]), int(parts[5]))


def _canonical_quat(q):
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion must be non-zero and finite")
    q = q / n
    if q[0] < 0:
        q = -q
    return q


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R x + t`` with R stored as a unit quaternion (w, x, y, z)."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _canonical_quat(self.q))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), t)

    @classmethod
    def from_matrix(cls, R, t=None):
        return cls(matrix_to_quat(R), np.zeros(3) if t is None else t)

    @classmethod
    def from_axis_angle(cls, axis, angle, t=None):
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        q = np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])
        return cls(q, np.zeros(3) if t is None else t)

    @property
    def R(self):
        return quat_to_matrix(self.q)

    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def to_line(self):
        return " ".join(repr(float(v)) for v in np.concatenate([self.q, self.t]))

    @classmethod
    def from_line(cls, line):
        vals = [float(v) for v in line.split()]
        if len(vals) != 7:
            raise ValueError(f"expected 7 pose values, got {len(vals)}")
        return cls(np.array(vals[:4]), np.array(vals[4:]))

    def __repr__(self):
        return f"Pose(q={self.q.tolist()}, t={self.t.tolist()})"


@dataclass(frozen=True, eq=False)
class Twist:
    """Element of se(3): rotation vector ``omega`` (rad) and translation generator ``v`` (m)."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=np.float64).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64).reshape(3))

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))

    def __mul__(self, s):
        return Twist(self.omega * s, self.v * s)

    __rmul__ = __mul__

    def as_vector(self):
        return np.concatenate([self.omega, self.v])


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("all-zero quaternion has no rotation")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Shepperd's method; returns the canonical (w >= 0) unit quaternion."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return _canonical_quat(q)


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def apply_pose(p: Pose, x):
    """Apply ``p`` to a point (3,) or an array of points (N, 3)."""
    x = np.asarray(x, dtype=np.float64)
    return x @ p.R.T + p.t


def pose_compose(b_from_a: Pose, c_from_b: Pose) -> Pose:
    """Return ``c_from_a``: first apply ``b_from_a``, then ``c_from_b``."""
    q = quat_multiply(c_from_b.q, b_from_a.q)
    t = c_from_b.R @ b_from_a.t + c_from_b.t
    return Pose(q, t)


def pose_inverse(p: Pose) -> Pose:
    q_inv = p.q * np.array([1.0, -1.0, -1.0, -1.0])
    return Pose(q_inv, -(p.R.T @ p.t))


def rotation_angle(p: Pose) -> float:
    """Geodesic rotation angle of ``p`` in radians, in [0, pi]."""
    return float(2.0 * np.arctan2(np.linalg.norm(p.q[1:]), abs(p.q[0])))


def skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _left_jacobian(omega):
    th = np.linalg.norm(omega)
    W = skew(omega)
    t2 = th * th
    if th < _SERIES_ANGLE:
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        a = 2.0 * np.sin(th / 2.0) ** 2 / t2
        b = (th - np.sin(th)) / (t2 * th)
    return np.eye(3) + a * W + b * (W @ W)


def _left_jacobian_inv(omega):
    th = np.linalg.norm(omega)
    W = skew(omega)
    if th < _SERIES_ANGLE:
        t2 = th * th
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        c = (1.0 - th * np.sin(th) / (2.0 * (1.0 - np.cos(th)))) / th ** 2
    return np.eye(3) - 0.5 * W + c * (W @ W)


def se3_exp(tw: Twist) -> Pose:
    omega = tw.omega
    th = np.linalg.norm(omega)
    if th < 1e-4:
        s = 0.5 - th * th / 48.0
    else:
        s = np.sin(th / 2.0) / th
    q = np.concatenate([[np.cos(th / 2.0)], s * omega])
    return Pose(q, _left_jacobian(omega) @ tw.v)


def se3_log(p: Pose) -> Twist:
    """Principal-branch logarithm. Rotations of pi - 1e-6 rad or more are rejected."""
    q = p.q
    vec_norm = np.linalg.norm(q[1:])
    th = 2.0 * np.arctan2(vec_norm, q[0])
    if th >= LOG_ANGLE_LIMIT:
        raise DomainError(f"se3_log undefined near pi: rotation angle {th:.9f} rad")
    if vec_norm < 1e-12:
        omega = 2.0 * q[1:] / q[0]
    else:
        omega = th * q[1:] / vec_norm
    return Twist(omega, _left_jacobian_inv(omega) @ p.t)


def project(x, k: CameraIntrinsics):
    """Pinhole projection of points (N, 3) or a single point (3,).

    Returns ``(uv, depth, valid)``; points with z <= 0 are culled
    (``valid`` False, ``uv`` NaN).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    z = x[:, 2]
    valid = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(valid, k.fx * x[:, 0] / z + k.cx, np.nan)
        v = np.where(valid, k.fy * x[:, 1] / z + k.cy, np.nan)
    uv = np.stack([u, v], axis=1)
    if single:
        return uv[0], float(z[0]), bool(valid[0])
    return uv, z.copy(), valid


def unproject(u, v, d, k: CameraIntrinsics):
    """Inverse pinhole model.

    Accepts scalars or arrays. Returns ``(points, valid)`` where ``points``
    holds only entries with ``d > 0`` and ``valid`` marks them; the skipped
    count is ``(~valid).sum()``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    u, v, d = np.broadcast_arrays(u, v, d)
    valid = d > 0
    du, dv, dd = u[valid], v[valid], d[valid]
    pts = np.stack([(du - k.cx) * dd / k.fx, (dv - k.cy) * dd / k.fy, dd], axis=-1)
    return pts, valid


def pixel_grid(width, height):
    """Pixel-centre coordinates ``(u, v)`` as two (H, W) arrays."""
    v, u = np.mgrid[0:height, 0:width]
    return u.astype(np.float64), v.astype(np.float64)


def motion_flow_from_pose(p: Pose, x):
    """3D motion flow ``u = R x + t - x`` for a point (3,) or points (N, 3)."""
    x = np.asarray(x, dtype=np.float64)
    return apply_pose(p, x) - x
