"""SO(3) primitives: hat map, exponential, logarithm, projection.

Rotations are plain 3x3 numpy arrays (never quaternions). The exponential
switches to a series expansion below 1e-6 rad so tiny increments keep full
precision; the logarithm uses the atan2 form, which stays accurate for both
tiny angles and angles approaching pi.
"""

import numpy as np

from .errors import AngleNearPi

# Series switchover for exp; below this angle sin/cos ratios lose digits.
SMALL_ANGLE = 1e-6
# trace(R) at or below this means the angle is too close to pi to log safely.
TRACE_NEAR_PI = -1.0 + 1e-6


def skew(v):
    """Hat map: 3-vector to the antisymmetric matrix with S @ x = v x x."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def exp_so3(r):
    """Rodrigues exponential of a rotation vector.

    Exact for any angle; for theta < 1e-6 the sin/cos coefficients are
    replaced by their series (1 - theta^2/6, 1/2 - theta^2/24).
    """
    r = np.asarray(r, dtype=float)
    th2 = r @ r
    S = skew(r)
    if th2 < SMALL_ANGLE * SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * S + b * (S @ S)


def log_so3(R):
    """Rotation vector of R; raises AngleNearPi when trace(R) <= -1 + 1e-6.

    Uses theta = atan2(||antisym part||, (trace-1)/2), accurate down to
    angles of order machine epsilon.
    """
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr <= TRACE_NEAR_PI:
        raise AngleNearPi(f"trace {tr:.9f} too close to -1")
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = np.sqrt(v @ v)          # |sin(theta)|
    c = 0.5 * (tr - 1.0)        # cos(theta)
    if s < 1e-12:
        # Angle ~ 0 (near-pi already rejected): v = sin(th)*axis ~ th*axis.
        return v
    return v * (np.arctan2(s, c) / s)


def small_rot_approx(r):
    """First-order rotation approximation I + r^. Not orthogonal; O(|r|^2) off."""
    return np.eye(3) + skew(r)


def project_to_so3(M):
    """Nearest rotation in Frobenius norm via polar decomposition."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


def check_rotation(R, tol=1e-9):
    """Raise ValueError unless R is orthonormal with det +1 within tol."""
    R = np.asarray(R)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"R^T R deviates from identity by {err:.3e}")
    d = np.linalg.det(R)
    if abs(d - 1.0) > tol:
        raise ValueError(f"det(R) = {d:.12f}, expected +1")


def exp_many(rs):
    """Vectorized exp_so3 over an (N, 3) array, returns (N, 3, 3).

    Same formulas and the same 1e-6 series switchover as the scalar path.
    """
    rs = np.asarray(rs, dtype=float)
    n = rs.shape[0]
    th2 = np.einsum("ij,ij->i", rs, rs)
    small = th2 < SMALL_ANGLE * SMALL_ANGLE
    th2_safe = np.where(small, 1.0, th2)  # placeholder under the mask
    th = np.sqrt(th2_safe)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(th) / th)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(th)) / th2_safe)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -rs[:, 2]
    S[:, 0, 2] = rs[:, 1]
    S[:, 1, 0] = rs[:, 2]
    S[:, 1, 2] = -rs[:, 0]
    S[:, 2, 0] = -rs[:, 1]
    S[:, 2, 1] = rs[:, 0]
    return np.eye(3) + a[:, None, None] * S + b[:, None, None] * (S @ S)


def log_many(Rs):
    """Vectorized log_so3 over (N, 3, 3); raises AngleNearPi if any R is near pi."""
    Rs = np.asarray(Rs, dtype=float)
    tr = np.trace(Rs, axis1=1, axis2=2)
    if np.any(tr <= TRACE_NEAR_PI):
        raise AngleNearPi("at least one rotation too close to pi")
    v = 0.5 * np.stack([
        Rs[:, 2, 1] - Rs[:, 1, 2],
        Rs[:, 0, 2] - Rs[:, 2, 0],
        Rs[:, 1, 0] - Rs[:, 0, 1],
    ], axis=1)
    s = np.linalg.norm(v, axis=1)
    c = 0.5 * (tr - 1.0)
    scale = np.ones_like(s)
    ok = s >= 1e-12
    scale[ok] = np.arctan2(s[ok], c[ok]) / s[ok]
    return v * scale[:, None]
