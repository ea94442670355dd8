"""Closed-form gyro bias solvers plus a Gauss-Newton reference.

All take a relative rotation R_ij (usually from vision) and the raw gyro
window spanning the same interval, and return the constant bias that best
reconciles the two. The three closed forms trade accuracy for speed by
pushing progressively more structure into a commutativity assumption; the
Gauss-Newton solver iterates on the exact preintegration model and serves
as the accuracy baseline.

Small-rotation regime is a precondition: both R_ij and the raw preintegrated
product must stay under pi/2 total angle, otherwise the closed forms are
meaningless and the call fails fast.
"""

import numpy as np

from .errors import NoConvergence, WindowEmpty
from .imu import ImuWindow, preintegrate_rotation
from .so3 import exp_so3, log_so3

MAX_ANGLE = np.pi / 2
GN_MAX_ITERS = 20
GN_STEP_TOL = 1e-10
GN_DIFF_STEP = 1e-6


def _checked_logs(R_ij, w: ImuWindow):
    """Common preamble: angle preconditions, raw product, its log, and L."""
    if len(w) == 0:
        raise WindowEmpty("bias solve needs samples")
    P = preintegrate_rotation(w, np.zeros(3))
    log_P = log_so3(P)          # log_so3 rejects near-pi outright
    log_R = log_so3(R_ij)
    if np.linalg.norm(log_P) >= MAX_ANGLE or np.linalg.norm(log_R) >= MAX_ANGLE:
        raise ValueError("rotation outside the small-rotation regime (>= pi/2)")
    return P, log_P, log_R


def solve_bias_commutative(R_ij, w: ImuWindow):
    """Single-log solution treating the whole window as one rotation.

    b = -Log(P^T R_ij) / (L dt) with P the raw (zero-bias) preintegrated
    product. Cheapest; its error grows with the product of total rotation
    angles of rate and bias.
    """
    P, _, _ = _checked_logs(R_ij, w)
    L = len(w)
    return -log_so3(P.T @ R_ij) / (L * w.dt)


def solve_bias_average(R_ij, w: ImuWindow):
    """Per-step solution around the preintegrated mean rate.

    The mean rate comes from the log of the raw product; the bias is the
    per-step mismatch between one mean-rate step and one L-th of R_ij.
    """
    P, log_P, log_R = _checked_logs(R_ij, w)
    L = len(w)
    w_bar = log_P / (L * w.dt)
    step = exp_so3(w_bar * w.dt).T @ exp_so3(log_R / L)
    return -log_so3(step) / w.dt


def solve_bias_arithmetic(R_ij, w: ImuWindow):
    """Like solve_bias_average but with the arithmetic mean of readings.

    Skips the preintegrated product entirely, which makes it the fastest
    variant. The product's angle precondition is enforced through a bound:
    a product of rotations turns at most the sum of the step angles, so
    dt * sum ||w_k|| < pi/2 clears it without integrating; only when that
    bound is inconclusive is the product formed and checked exactly.
    """
    if len(w) == 0:
        raise WindowEmpty("bias solve needs samples")
    log_R = log_so3(R_ij)
    if np.linalg.norm(log_R) >= MAX_ANGLE:
        raise ValueError("rotation outside the small-rotation regime (>= pi/2)")
    if np.linalg.norm(w.gyro, axis=1).sum() * w.dt >= MAX_ANGLE:
        P = preintegrate_rotation(w, np.zeros(3))
        if np.linalg.norm(log_so3(P)) >= MAX_ANGLE:
            raise ValueError(
                "rotation outside the small-rotation regime (>= pi/2)")
    L = len(w)
    w_bar = w.gyro.mean(axis=0)
    step = exp_so3(w_bar * w.dt).T @ exp_so3(log_R / L)
    return -log_so3(step) / w.dt


def solve_bias_gauss_newton(R_ij, w: ImuWindow, b0=None):
    """Iterative baseline on the exact model.

    Minimizes || Log(preintegrate_rotation(w, b)^T R_ij) ||^2 with a
    central-difference Jacobian (step 1e-6). Converges when the update norm
    drops below 1e-10, up to 20 iterations, else raises NoConvergence.
    """
    if len(w) == 0:
        raise WindowEmpty("bias solve needs samples")
    b = np.zeros(3) if b0 is None else np.asarray(b0, dtype=float).copy()

    def residual(bias):
        return log_so3(preintegrate_rotation(w, bias).T @ R_ij)

    for _ in range(GN_MAX_ITERS):
        r = residual(b)
        J = np.empty((3, 3))
        for a in range(3):
            e = np.zeros(3)
            e[a] = GN_DIFF_STEP
            J[:, a] = (residual(b + e) - residual(b - e)) / (2 * GN_DIFF_STEP)
        try:
            step = np.linalg.solve(J.T @ J, -J.T @ r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"normal equations singular: {exc}") from exc
        b += step
        if np.linalg.norm(step) < GN_STEP_TOL:
            return b
    raise NoConvergence(f"no convergence in {GN_MAX_ITERS} iterations")


SOLVERS = {
    "commutative": solve_bias_commutative,
    "average": solve_bias_average,
    "arithmetic": solve_bias_arithmetic,
    "gauss_newton": solve_bias_gauss_newton,
}
