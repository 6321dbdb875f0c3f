"""Small linear algebra helpers shared across the stack."""

import numpy as np

from .errors import OrientationSingularity

# Damped least squares kicks in when the singular value spread exceeds this
# conditioning ratio; the damping is scaled off the largest singular value so
# the inverse stays bounded near singular configurations.
DLS_RATIO = 1e-3
DLS_DAMPING = 1e-3

_SINGULARITY_TOL = 1e-8


def skew(v):
    """Cross-product matrix: skew(v) @ u == np.cross(v, u)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.asarray((np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi)
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.shape else float(w)


def damped_pinv(mat, ratio=DLS_RATIO, damping=DLS_DAMPING):
    """Moore-Penrose pseudo-inverse with conditional singular value damping.

    Plain pseudo-inverse when the matrix is well conditioned; once
    sigma_min/sigma_max drops below ``ratio`` every singular value is
    regularized as s/(s^2 + lambda^2) with lambda = damping * sigma_max.
    A zero matrix maps to a zero pseudo-inverse.
    """
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    smax = s[0] if s.size else 0.0
    if smax <= 0.0:
        return np.zeros((mat.shape[1], mat.shape[0]))
    if s[-1] / smax < ratio:
        lam = damping * smax
        sinv = s / (s * s + lam * lam)
    else:
        sinv = 1.0 / s
    return (vt.T * sinv) @ u.T


def rotation_from_zyz(phi):
    """Rotation matrix from ZYZ Euler angles (phi1 about z, phi2 about the
    rotated y, phi3 about the rotated z)."""
    return rot_z(phi[0]) @ rot_y(phi[1]) @ rot_z(phi[2])


def zyz_from_rotation(rot, strict=False):
    """ZYZ Euler angles of a rotation matrix, middle angle in [0, pi].

    At sin(phi2) = 0 the first and last angle are indistinguishable; the
    relaxed form folds the whole z-rotation into phi1, while ``strict``
    raises OrientationSingularity (used wherever angle rates are needed).
    """
    sy = np.hypot(rot[0, 2], rot[1, 2])
    if sy < _SINGULARITY_TOL:
        if strict:
            raise OrientationSingularity(
                f"ZYZ representation singular (|sin(phi2)| = {sy:.2e})")
        if rot[2, 2] > 0.0:
            return np.array([np.arctan2(rot[1, 0], rot[0, 0]), 0.0, 0.0])
        return np.array([np.arctan2(-rot[1, 0], -rot[0, 0]), np.pi, 0.0])
    phi1 = np.arctan2(rot[1, 2], rot[0, 2])
    phi2 = np.arctan2(sy, rot[2, 2])
    phi3 = np.arctan2(rot[2, 1], -rot[2, 0])
    return np.array([phi1, phi2, phi3])


def euler_rate_matrix(phi):
    """E(phi) mapping ZYZ angle rates to angular velocity, omega = E phidot."""
    c1, s1 = np.cos(phi[0]), np.sin(phi[0])
    c2, s2 = np.cos(phi[1]), np.sin(phi[1])
    return np.array([
        [0.0, -s1, c1 * s2],
        [0.0, c1, s1 * s2],
        [1.0, 0.0, c2],
    ])


def euler_rate_matrix_dot(phi, phidot):
    """Time derivative of euler_rate_matrix along phidot."""
    c1, s1 = np.cos(phi[0]), np.sin(phi[0])
    c2, s2 = np.cos(phi[1]), np.sin(phi[1])
    d1 = np.array([
        [0.0, -c1, -s1 * s2],
        [0.0, -s1, c1 * s2],
        [0.0, 0.0, 0.0],
    ])
    d2 = np.array([
        [0.0, 0.0, c1 * c2],
        [0.0, 0.0, s1 * c2],
        [0.0, 0.0, -s2],
    ])
    return d1 * phidot[0] + d2 * phidot[1]
