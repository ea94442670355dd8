"""IMU windows and Euler preintegration.

A window holds raw gyro/accel samples on a nominally uniform time grid.
Preintegration is deterministic forward Euler with biases held constant
over the window; rotation products re-orthonormalize every 100 factors to
stop float drift from compounding.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import WindowEmpty
from .so3 import exp_so3, project_to_so3

# Re-project the running rotation product after this many factors.
REORTHO_EVERY = 100
# Sample gaps may deviate from the nominal dt by at most this fraction.
GAP_TOL = 0.10


@dataclass(frozen=True)
class ImuSample:
    """One inertial sample: time [s], gyro [rad/s], accel [m/s^2]."""
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class ImuWindow:
    """Contiguous block of IMU samples with nominal spacing dt.

    t is strictly increasing with every gap within 10% of dt, so the span
    covered is len(t) * dt up to that slack. t0_ns optionally records the
    absolute timestamp of t[0] for alignment with external files.
    """
    t: np.ndarray        # (L,) seconds, relative time base
    gyro: np.ndarray     # (L, 3) rad/s
    accel: np.ndarray    # (L, 3) m/s^2
    dt: float
    t0_ns: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.t.ndim != 1 or len(self.t) == 0:
            raise WindowEmpty("window needs at least one sample")
        L = len(self.t)
        if self.gyro.shape != (L, 3) or self.accel.shape != (L, 3):
            raise ValueError("gyro/accel must be (L, 3) matching t")
        if not (np.isfinite(self.t).all() and np.isfinite(self.gyro).all()
                and np.isfinite(self.accel).all()):
            raise ValueError("non-finite sample values")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        gaps = np.diff(self.t)
        if np.any(gaps <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if gaps.size and np.abs(gaps - self.dt).max() > GAP_TOL * self.dt:
            raise ValueError("sample gap deviates more than 10% from dt")

    def __len__(self):
        return len(self.t)

    @property
    def samples(self):
        return [ImuSample(self.t[k], self.gyro[k], self.accel[k])
                for k in range(len(self.t))]

    @classmethod
    def from_samples(cls, samples, dt, t0_ns=None):
        if not samples:
            raise WindowEmpty("window needs at least one sample")
        return cls(
            t=np.array([s.t for s in samples], dtype=float),
            gyro=np.array([s.gyro for s in samples], dtype=float),
            accel=np.array([s.accel for s in samples], dtype=float),
            dt=float(dt), t0_ns=t0_ns,
        )

    def subwindow(self, i0, i1):
        """Samples [i0, i1) as a new window on the same time base."""
        if i1 <= i0:
            raise WindowEmpty(f"empty slice [{i0}, {i1})")
        return ImuWindow(self.t[i0:i1], self.gyro[i0:i1], self.accel[i0:i1],
                         self.dt, self.t0_ns)

    def rebased(self):
        """Same samples with the time origin moved to the first sample."""
        return ImuWindow(self.t - self.t[0], self.gyro, self.accel,
                         self.dt, self.t0_ns)


@dataclass(frozen=True)
class PreintState:
    """Euler-preintegrated motion over a window.

    R is the body rotation from window start to end, v_end the world
    velocity at the end (given the entry velocity), dp the world-frame
    translation accumulated over the window.
    """
    R: np.ndarray
    v_end: np.ndarray
    dp: np.ndarray


def preintegrate_rotation(w: ImuWindow, bg) -> np.ndarray:
    """Product of per-sample exponentials Exp((gyro_k - bg) dt)."""
    bg = np.asarray(bg, dtype=float)
    R = np.eye(3)
    for k in range(len(w)):
        R = R @ exp_so3((w.gyro[k] - bg) * w.dt)
        if (k + 1) % REORTHO_EVERY == 0:
            R = project_to_so3(R)
    return R


def preintegrate_state(w: ImuWindow, bg, ba, g, R0, v0) -> PreintState:
    """Forward-Euler strapdown integration over the window.

    Per sample: the position gains v dt + g dt^2/2 + R_k (a_k - ba) dt^2/2,
    then velocity gains g dt + R_k (a_k - ba) dt, then the attitude turns by
    Exp((w_k - bg) dt). R_k is the world attitude at the sample, R0 at entry.
    """
    bg = np.asarray(bg, dtype=float)
    ba = np.asarray(ba, dtype=float)
    g = np.asarray(g, dtype=float)
    dt = w.dt
    R_rel = np.eye(3)
    v = np.asarray(v0, dtype=float).copy()
    p = np.zeros(3)
    for k in range(len(w)):
        a_w = (R0 @ R_rel) @ (w.accel[k] - ba)
        p += v * dt + 0.5 * g * dt * dt + 0.5 * a_w * dt * dt
        v += g * dt + a_w * dt
        R_rel = R_rel @ exp_so3((w.gyro[k] - bg) * dt)
        if (k + 1) % REORTHO_EVERY == 0:
            R_rel = project_to_so3(R_rel)
    return PreintState(R=R_rel, v_end=v, dp=p)


def compute_s_gamma(w: ImuWindow, bg, t_end):
    """Double integrals of rotated specific force (s) and rotation (Gamma).

    s     = sum_k (t_end - t_k - dt/2) R_k a_k dt
    Gamma = sum_k (t_end - t_k - dt/2) R_k dt

    with R_k the running gyro rotation product at sample k (identity at the
    first sample) and a_k the raw accelerometer reading; bias correction is
    deferred to the Gamma term of the linear constraint. The half-step pulls
    the quadrature onto the Euler double sum of preintegrate_state, so the
    two sides of the displacement constraint cancel exactly on Euler
    trajectories rather than to O(dt).

    t_end must be at or beyond the last sample; the natural choice is one
    dt past it, covering [t[0], t_end) with L full steps.
    """
    bg = np.asarray(bg, dtype=float)
    dt = w.dt
    if t_end < w.t[-1]:
        raise ValueError("t_end precedes the last sample")
    s = np.zeros(3)
    G = np.zeros((3, 3))
    R = np.eye(3)
    for k in range(len(w)):
        wk = (t_end - w.t[k] - 0.5 * dt) * dt
        s += wk * (R @ w.accel[k])
        G += wk * R
        R = R @ exp_so3((w.gyro[k] - bg) * dt)
        if (k + 1) % REORTHO_EVERY == 0:
            R = project_to_so3(R)
    return s, G
