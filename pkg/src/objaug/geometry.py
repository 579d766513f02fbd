"""Small rotation helpers shared by the pipeline phases.

All functions broadcast over leading dimensions: vectors are ``(..., 3)``
and rotation matrices ``(..., 3, 3)``.
"""
import numpy as np
from scipy.spatial.transform import Rotation


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotation_about(axis, angle):
    """Rodrigues rotation matrix for a right-handed turn of ``angle`` about ``axis``.

    ``axis`` is normalised here; ``angle`` broadcasts against the axis batch.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=float)[..., None, None]
    K = skew(axis)
    eye = np.eye(3)
    return eye + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_x(angle):
    """Rotation about the first coordinate axis (the tilt used for object placement)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def log_so3(R):
    """Rotation vector (axis * angle) of ``R``."""
    R = np.asarray(R, dtype=float)
    flat = R.reshape(-1, 3, 3)
    out = Rotation.from_matrix(flat).as_rotvec()
    return out.reshape(R.shape[:-2] + (3,))


def exp_so3(v):
    v = np.asarray(v, dtype=float)
    out = Rotation.from_rotvec(v.reshape(-1, 3)).as_matrix()
    return out.reshape(v.shape[:-1] + (3, 3))


def rotation_angle(R):
    return np.linalg.norm(log_so3(R), axis=-1)


def matrix_to_quat_wxyz(R):
    """Unit quaternions (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    xyzw = Rotation.from_matrix(R).as_quat(canonical=True)
    return np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=1)


def quat_wxyz_to_matrix(q):
    q = np.asarray(q, dtype=float).reshape(-1, 4)
    return Rotation.from_quat(np.concatenate([q[:, 1:], q[:, :1]], axis=1)).as_matrix()


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    eye = np.broadcast_to(np.eye(3), R.shape)
    ortho = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max() < tol
    return bool(ortho and np.all(np.linalg.det(R) > 0))


def random_rotations(rng, n):
    """``n`` uniformly distributed rotation matrices drawn from ``rng``."""
    return Rotation.random(n, random_state=rng).as_matrix()
