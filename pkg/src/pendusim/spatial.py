"""Minimal 3-D rotation math for the roll/pitch/yaw attitude parametrization.

Convention (fixed project-wide): extrinsic X-Y-Z, i.e. roll alpha about world
x, then pitch beta about world y, then yaw gamma about world z, composing to
R = Rz(gamma) @ Ry(beta) @ Rx(alpha).
"""

import numpy as np

# Pitch guard: the Euler-rate map loses rank at |beta| = pi/2.
BETA_GUARD = np.pi / 2 - 1e-6


class GimbalLockError(ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map to be invertible."""


def skew(v):
    """Cross-product matrix: skew(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rot_rpy(alpha, beta, gamma):
    """Rotation matrix Rz(gamma) @ Ry(beta) @ Rx(alpha)."""
    sa, ca = np.sin(alpha), np.cos(alpha)
    sb, cb = np.sin(beta), np.cos(beta)
    sg, cg = np.sin(gamma), np.cos(gamma)
    return np.array([
        [cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa],
        [sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa],
        [-sb, cb * sa, cb * ca],
    ])


def euler_rate_map(alpha, beta, gamma=0.0):
    """Matrix E mapping (d/dt)(alpha, beta, gamma) to world angular velocity.

    Columns are the world-frame axes the successive elemental rotations act
    about: [Rz Ry ex | Rz ey | ez].  For the Z-Y-X composition this map does
    not depend on roll; `alpha` is accepted so callers can pass the attitude
    symmetrically and so the gimbal guard lives in one place.

    Raises GimbalLockError when |beta| >= pi/2 - 1e-6 (E becomes singular).
    """
    del alpha
    if abs(beta) >= BETA_GUARD:
        raise GimbalLockError(f"pitch {beta:.6f} rad is within 1e-6 of +-pi/2")
    sb, cb = np.sin(beta), np.cos(beta)
    sg, cg = np.sin(gamma), np.cos(gamma)
    return np.array([
        [cb * cg, -sg, 0.0],
        [cb * sg, cg, 0.0],
        [-sb, 0.0, 1.0],
    ])


def rotation_about(axis, angle):
    """Rodrigues rotation about a unit axis."""
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
