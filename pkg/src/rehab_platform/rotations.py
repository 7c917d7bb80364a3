"""Rotation matrices, skew matrices and Euler-rate maps.

Two Euler conventions are used in this package:

* ``zyz``: ``Rz(a) @ Ry(b) @ Rz(c)``.  The platform pose is expressed in this
  convention because the mechanism's constraint relations take their closed
  form (``c = -a``) in it.  ``b`` is then the platform tilt and ``a`` the
  azimuth of the tilt axis.
* ``zyx``: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.  The dynamics model uses it
  for its task-space orientation, stored in the order (roll, pitch, yaw); it
  is regular at the level home pose (singular only at pitch = +-pi/2).
"""

import numpy as np


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def zyz_matrix(a, b, c):
    return rot_z(a) @ rot_y(b) @ rot_z(c)


def zyx_matrix(yaw, pitch, roll):
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rpy_matrix(roll, pitch, yaw):
    return zyx_matrix(yaw, pitch, roll)


def skew(v):
    """Return S(v) such that ``S(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m):
    """Vector of the skew-symmetric part of ``m``."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def zyx_from_matrix(r):
    """Recover (yaw, pitch, roll) with pitch in [-pi/2, pi/2]."""
    pitch = -np.arcsin(np.clip(r[2, 0], -1.0, 1.0))
    yaw = np.arctan2(r[1, 0], r[0, 0])
    roll = np.arctan2(r[2, 1], r[2, 2])
    return np.array([yaw, pitch, roll])


def rpy_from_matrix(r):
    """(roll, pitch, yaw) of ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    return zyx_from_matrix(r)[::-1].copy()


def zyz_spatial_rate_matrix(a, b):
    """Map ZYZ rates (a', b', c') to the base-frame angular velocity."""
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    return np.array([
        [0.0, -sa, ca * sb],
        [0.0, ca, sa * sb],
        [1.0, 0.0, cb],
    ])


def zyz_spatial_rate_matrix_dot(a, b, a_dot, b_dot):
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    return np.array([
        [0.0, -ca * a_dot, -sa * sb * a_dot + ca * cb * b_dot],
        [0.0, -sa * a_dot, ca * sb * a_dot + sa * cb * b_dot],
        [0.0, 0.0, -sb * b_dot],
    ])


def so3_exp(w):
    """Rodrigues formula for the rotation vector ``w``."""
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return (np.eye(3) + np.sin(theta) / theta * k
            + (1.0 - np.cos(theta)) / theta**2 * k @ k)


def so3_left_jacobian(w):
    """Left Jacobian of SO(3): ``dR = skew(J @ dw) @ R`` for ``R = exp(w)``."""
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-5:
        c1 = 0.5 - theta**2 / 24.0
        c2 = 1.0 / 6.0 - theta**2 / 120.0
    else:
        c1 = (1.0 - np.cos(theta)) / theta**2
        c2 = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + c1 * k + c2 * k @ k
