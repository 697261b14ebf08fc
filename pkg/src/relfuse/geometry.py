"""Quaternion and unit-vector helpers shared by all modules.

Conventions: quaternions are (w, x, y, z), Hamilton product, and represent
camera-from-canonical rotations. The object up axis is +z; yaw rotations are
about +z.
"""

import numpy as np

UP_AXIS = np.array([0.0, 0.0, 1.0])


def normalize(v, eps=1e-12):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < eps:
        raise ValueError("degenerate direction")
    return v / n


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q):
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def yaw_quaternion(angle):
    """Rotation by `angle` radians about the up (+z) axis."""
    h = 0.5 * angle
    return np.array([np.cos(h), 0.0, 0.0, np.sin(h)])


def quat_geodesic(a, b):
    """Geodesic angle in radians between two unit quaternions.

    Computed from the chordal distance min(|a-b|, |a+b|) = 2 sin(theta/4),
    which is well conditioned near zero (unlike arccos of the dot product).
    """
    a = quat_normalize(a)
    b = quat_normalize(b)
    d = min(np.linalg.norm(a - b), np.linalg.norm(a + b))
    return 4.0 * np.arcsin(min(1.0, 0.5 * d))


def rotate_vector(q, v):
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def frame_transform(R, v):
    """Express camera-frame vector `v` in the frame whose rotation is `R`.

    `R` is camera-from-canonical, so this applies its inverse (transpose).
    """
    R = np.asarray(R, dtype=float)
    return R.T @ np.asarray(v, dtype=float)
