"""Synthetic scenario generation with analytic ground truth.

Trajectories are closed-form (no numerical integration), so every sampled
quantity (attitude, velocity, body rate, specific force) is exact at its
timestamp, and the ground truth handed to tests is beyond suspicion.
Attitude profiles are built from axis-angle factors whose body rates have
closed forms: for R(t) = R0 Exp(u1 s1(t)) Exp(u2 s2(t)) the body rate is
Exp(u2 s2)^T u1 s1' + u2 s2'.

IMU channels follow the increment reading model used by integrating
strapdown front ends: the sample stamped t_k carries the average rate over
[t_k, t_k + dt],

    gyro_k  = Log(R(t_k)^T R(t_k + dt)) / dt + bg + noise
    accel_k = R(t_k)^T ((v(t_k + dt) - v(t_k)) / dt - g) + ba + noise

i.e. the angle increment and the start-frame-resolved velocity increment,
each divided by dt. Products of Exp(gyro_k dt) then telescope to the exact
relative attitude and sums of R_k accel_k dt to the exact velocity change,
so discrete preintegration of clean samples reproduces the continuous
trajectory to machine precision and downstream tolerances measure algorithm
error, not generator discretization. For constant-rate motions the reading
equals the instantaneous rate.

All randomness flows from one generator seeded by the config, in a fixed
draw order, so a seed pins the scenario bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, FeatureTrack, project, MIN_DEPTH
from .errors import ConfigInvalid
from .imu import ImuWindow
from .so3 import exp_so3, log_so3, skew

MOTIONS = ("static", "pure_rotation", "constant_velocity", "sinusoidal")

# Landmarks are seeded this many pixels inside the frame-0 image border so
# moderate motion keeps most of them in view.
SEED_MARGIN_PX = 120.0


def _int_two_exp(w1, w2, t):
    """Closed form of the time integral of Exp(w1 tau) Exp(w2 tau) on [0, t].

    Every entry of the integrand is a trig polynomial in the two rotation
    rates, so product-to-sum identities give elementary antiderivatives.
    Degenerate rates (either norm zero, or equal norms) use their limits.
    """
    a = np.linalg.norm(w1)
    b = np.linalg.norm(w2)
    W1 = skew(w1 / a) if a > 0.0 else np.zeros((3, 3))
    W2 = skew(w2 / b) if b > 0.0 else np.zeros((3, 3))
    A = (np.eye(3), W1, W1 @ W1)
    B = (np.eye(3), W2, W2 @ W2)

    def S(w):
        return (1.0 - np.cos(w * t)) / w

    def C(w):
        return np.sin(w * t) / w

    def SS(p, q):
        if abs(p - q) < 1e-12:
            return 0.5 * t - np.sin(2 * p * t) / (4 * p)
        return 0.5 * (np.sin((p - q) * t) / (p - q) - np.sin((p + q) * t) / (p + q))

    def SC(p, q):
        if abs(p - q) < 1e-12:
            return (1.0 - np.cos(2 * p * t)) / (4 * p)
        return 0.5 * ((1 - np.cos((p + q) * t)) / (p + q)
                      + (1 - np.cos((p - q) * t)) / (p - q))

    def CC(p, q):
        if abs(p - q) < 1e-12:
            return 0.5 * t + np.sin(2 * p * t) / (4 * p)
        return 0.5 * (np.sin((p + q) * t) / (p + q) + np.sin((p - q) * t) / (p - q))

    coef = np.zeros((3, 3))
    if a == 0.0 and b == 0.0:
        coef[0, 0] = t
    elif a == 0.0:
        coef[0] = [t, S(b), t - C(b)]
    elif b == 0.0:
        coef[:, 0] = [t, S(a), t - C(a)]
    else:
        coef[0] = [t, S(b), t - C(b)]
        coef[1] = [S(a), SS(a, b), S(a) - SC(a, b)]
        coef[2] = [t - C(a), S(b) - SC(b, a), t - C(a) - C(b) + CC(a, b)]
    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            out += coef[i, j] * (A[i] @ B[j])
    return out


@dataclass
class ScenarioConfig:
    """Knobs for one synthetic run. Vector fields accept any 3-sequence."""
    motion: str = "sinusoidal"
    duration: float = 4.0
    imu_rate: float = 200.0
    cam_rate: float = 20.0
    seed: int = 0
    gravity: np.ndarray = (0.0, 0.0, -9.81)
    true_bg: np.ndarray = (0.02, -0.01, 0.03)
    true_ba: np.ndarray = (0.05, -0.02, 0.08)
    gyro_noise_sigma: float = 0.0      # rad/s per sample
    accel_noise_sigma: float = 0.0     # m/s^2 per sample
    pixel_noise_sigma: float = 0.0     # px per coordinate
    rot_perturb_sigma: float = 0.0     # rad, for vision-rotation emulation
    # motion parameters (used per motion type)
    lin_velocity: np.ndarray = (0.3, 0.1, 0.05)  # body-frame velocity (constant_velocity)
    body_rate: np.ndarray = (0.1, -0.15, 0.2)    # first attitude factor rate, rad/s
    cv_wobble: np.ndarray = (0.75, 0.6, -0.15)   # second attitude factor rate (constant_velocity)
    trans_amp: np.ndarray = (0.3, 0.2, 0.15)
    trans_freq: np.ndarray = (0.45, 0.35, 0.55)
    rot_amp: tuple = (0.12, 0.08)
    rot_freq: tuple = (0.5, 0.8)
    rot0: np.ndarray = (0.0, 0.0, 0.0)  # initial attitude, axis-angle
    # scene and camera
    n_landmarks: int = 60
    depth_range: tuple = (3.0, 8.0)
    landmark_placement: str = "root_frustum"   # or "along_path"
    fx: float = 458.0
    fy: float = 457.0
    cx: float = 376.0
    cy: float = 240.0
    width: int = 752
    height: int = 480

    def __post_init__(self):
        for name in ("gravity", "true_bg", "true_ba", "lin_velocity",
                     "body_rate", "cv_wobble", "trans_amp", "trans_freq", "rot0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.motion not in MOTIONS:
            raise ConfigInvalid(f"unknown motion {self.motion!r}")
        if self.duration <= 0.0:
            raise ConfigInvalid("duration must be positive")
        if self.imu_rate <= 0.0 or self.cam_rate <= 0.0:
            raise ConfigInvalid("rates must be positive")
        stride = self.imu_rate / self.cam_rate
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise ConfigInvalid("imu_rate must be an integer multiple of cam_rate")
        if not (0.0 < self.depth_range[0] < self.depth_range[1]):
            raise ConfigInvalid("depth_range must be increasing and positive")
        if self.n_landmarks < 1:
            raise ConfigInvalid("need at least one landmark")
        if self.landmark_placement not in ("root_frustum", "along_path"):
            raise ConfigInvalid(
                f"unknown landmark placement {self.landmark_placement!r}")

    def intrinsics(self):
        return Intrinsics(self.fx, self.fy, self.cx, self.cy)


@dataclass(frozen=True)
class ScenarioTruth:
    """Exact states at frame times, world frame unless suffixed _body0."""
    R: np.ndarray          # (M, 3, 3) body-to-world
    p: np.ndarray          # (M, 3)
    v: np.ndarray          # (M, 3)
    bg: np.ndarray
    ba: np.ndarray
    g_world: np.ndarray
    depths: dict           # (frame_idx, landmark_id) -> metric distance

    def R_rel(self, i, j):
        """Rotation taking frame-j body coordinates to frame-i body."""
        return self.R[i].T @ self.R[j]

    def g_body(self, i):
        return self.R[i].T @ self.g_world

    def v_body(self, i):
        return self.R[i].T @ self.v[i]


@dataclass(frozen=True)
class Scenario:
    cfg: ScenarioConfig
    imu: ImuWindow               # measurements as configured (possibly noisy)
    imu_clean: ImuWindow         # same readings with zero measurement noise
    frame_ts: np.ndarray         # (M,) seconds on the IMU time base
    frame_sample_idx: np.ndarray  # (M,) index of each frame's IMU sample
    tracks: list
    K: Intrinsics
    truth: ScenarioTruth
    landmarks: np.ndarray        # (N, 3) world points


class _Motion:
    """Closed-form trajectory for one config.

    constant_velocity holds the body-frame velocity fixed (a vehicle moving
    at constant speed while turning) under a two-factor constant-rate
    attitude R0 Exp(body_rate t) Exp(cv_wobble t). The changing rotation
    axis gives the trajectory nonzero, direction-varying acceleration, so
    gravity, accelerometer bias, and metric scale are all observable; its
    position is the closed-form integral of the rotation applied to the
    body velocity. A motion with constant world velocity (or any constant
    rotation axis) leaves exact gauge freedoms in the initialization
    problem: scale trades against accelerometer bias, and a gravity shift
    along the axis trades against a matching bias shift.
    """

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.R0 = exp_so3(cfg.rot0)
        self.p0 = np.zeros(3)
        # fixed rotation oscillation axes per scenario, drawn first
        u1 = rng.normal(size=3)
        self.u1 = u1 / np.linalg.norm(u1)
        u2 = rng.normal(size=3)
        u2 -= (u2 @ self.u1) * self.u1
        self.u2 = u2 / np.linalg.norm(u2)

    def pos(self, t):
        c = self.cfg
        if c.motion in ("static", "pure_rotation"):
            return self.p0 + np.zeros(3) * t
        if c.motion == "constant_velocity":
            return self.p0 + self.R0 @ (_int_two_exp(c.body_rate, c.cv_wobble, t)
                                        @ c.lin_velocity)
        w = 2 * np.pi * c.trans_freq
        return self.p0 + c.trans_amp * np.sin(w * t)

    def vel(self, t):
        c = self.cfg
        if c.motion in ("static", "pure_rotation"):
            return np.zeros(3)
        if c.motion == "constant_velocity":
            return self.rot(t) @ c.lin_velocity
        w = 2 * np.pi * c.trans_freq
        return c.trans_amp * w * np.cos(w * t)

    def acc(self, t):
        c = self.cfg
        if c.motion == "constant_velocity":
            return self.rot(t) @ np.cross(self.body_rate(t), c.lin_velocity)
        if c.motion == "sinusoidal":
            w = 2 * np.pi * c.trans_freq
            return -c.trans_amp * w * w * np.sin(w * t)
        return np.zeros(3)

    def rot(self, t):
        c = self.cfg
        if c.motion == "static":
            return self.R0
        if c.motion == "pure_rotation":
            return self.R0 @ exp_so3(c.body_rate * t)
        if c.motion == "constant_velocity":
            return self.R0 @ exp_so3(c.body_rate * t) @ exp_so3(c.cv_wobble * t)
        A1, A2 = c.rot_amp
        f1, f2 = c.rot_freq
        s1 = A1 * np.sin(2 * np.pi * f1 * t)
        s2 = A2 * np.sin(2 * np.pi * f2 * t)
        return self.R0 @ exp_so3(self.u1 * s1) @ exp_so3(self.u2 * s2)

    def body_rate(self, t):
        c = self.cfg
        if c.motion == "static":
            return np.zeros(3)
        if c.motion == "pure_rotation":
            return c.body_rate.copy()
        if c.motion == "constant_velocity":
            return exp_so3(c.cv_wobble * t).T @ c.body_rate + c.cv_wobble
        A1, A2 = c.rot_amp
        f1, f2 = c.rot_freq
        w1, w2 = 2 * np.pi * f1, 2 * np.pi * f2
        s2 = A2 * np.sin(w2 * t)
        ds1 = A1 * w1 * np.cos(w1 * t)
        ds2 = A2 * w2 * np.cos(w2 * t)
        return exp_so3(self.u2 * s2).T @ (self.u1 * ds1) + self.u2 * ds2


def generate(cfg: ScenarioConfig) -> Scenario:
    """Build one deterministic scenario from the config."""
    rng = np.random.default_rng(cfg.seed)
    motion = _Motion(cfg, rng)
    K = cfg.intrinsics()

    dt = 1.0 / cfg.imu_rate
    n_imu = int(round(cfg.duration * cfg.imu_rate))
    if n_imu < 1:
        raise ConfigInvalid("duration too short for one IMU sample")
    t_imu = np.arange(n_imu) / cfg.imu_rate
    stride = int(round(cfg.imu_rate / cfg.cam_rate))
    frame_sample_idx = np.arange(0, n_imu, stride)
    frame_ts = t_imu[frame_sample_idx]
    M = len(frame_ts)

    # exact inertial increment readings, then additive noise
    gyro = np.empty((n_imu, 3))
    accel = np.empty((n_imu, 3))
    for k, tk in enumerate(t_imu):
        Rk = motion.rot(tk)
        gyro[k] = log_so3(Rk.T @ motion.rot(tk + dt)) / dt + cfg.true_bg
        dv = (motion.vel(tk + dt) - motion.vel(tk)) / dt
        accel[k] = Rk.T @ (dv - cfg.gravity) + cfg.true_ba
    imu_clean = ImuWindow(t=t_imu, gyro=gyro, accel=accel, dt=dt)
    if cfg.gyro_noise_sigma > 0.0:
        gyro = gyro + rng.normal(scale=cfg.gyro_noise_sigma, size=(n_imu, 3))
    if cfg.accel_noise_sigma > 0.0:
        accel = accel + rng.normal(scale=cfg.accel_noise_sigma, size=(n_imu, 3))
    noisy = cfg.gyro_noise_sigma > 0.0 or cfg.accel_noise_sigma > 0.0
    imu = ImuWindow(t=t_imu, gyro=gyro, accel=accel, dt=dt) if noisy else imu_clean

    # frame-time truth
    R_f = np.stack([motion.rot(tf) for tf in frame_ts])
    p_f = np.stack([motion.pos(tf) for tf in frame_ts])
    v_f = np.stack([motion.vel(tf) for tf in frame_ts])

    # landmarks seeded in a camera frustum: frame 0 for short windows, or a
    # random frame each ("along_path") so every segment of a long sequence
    # keeps co-visible features, the way a tracker keeps acquiring them
    lo = np.array([SEED_MARGIN_PX, SEED_MARGIN_PX])
    hi = np.array([cfg.width - SEED_MARGIN_PX, cfg.height - SEED_MARGIN_PX])
    landmarks = np.empty((cfg.n_landmarks, 3))
    for n in range(cfg.n_landmarks):
        f = int(rng.integers(M)) if cfg.landmark_placement == "along_path" else 0
        px = rng.uniform(lo, hi)
        depth = rng.uniform(*cfg.depth_range)
        ray = np.array([(px[0] - cfg.cx) / cfg.fx, (px[1] - cfg.cy) / cfg.fy, 1.0])
        mu = ray / np.linalg.norm(ray)
        landmarks[n] = p_f[f] + R_f[f] @ (depth * mu)

    # projections and truth depths
    tracks = []
    depths = {}
    for n in range(cfg.n_landmarks):
        obs = {}
        for j in range(M):
            q = R_f[j].T @ (landmarks[n] - p_f[j])
            if q[2] <= MIN_DEPTH:
                continue
            z = project(q, K)
            if cfg.pixel_noise_sigma > 0.0:
                z = z + rng.normal(scale=cfg.pixel_noise_sigma, size=2)
            if 0.0 <= z[0] <= cfg.width and 0.0 <= z[1] <= cfg.height:
                obs[j] = z
                depths[(j, n)] = float(np.linalg.norm(q))
        if len(obs) >= 2:
            tracks.append(FeatureTrack(id=n, obs=obs))
        else:
            for key in [k for k in depths if k[1] == n]:
                del depths[key]

    truth = ScenarioTruth(R=R_f, p=p_f, v=v_f, bg=cfg.true_bg.copy(),
                          ba=cfg.true_ba.copy(), g_world=cfg.gravity.copy(),
                          depths=depths)
    return Scenario(cfg=cfg, imu=imu, imu_clean=imu_clean, frame_ts=frame_ts,
                    frame_sample_idx=frame_sample_idx, tracks=tracks, K=K,
                    truth=truth, landmarks=landmarks)


def perturb_rotation(R, sigma, rng):
    """Left-multiply R by Exp(eta), eta ~ N(0, sigma^2 I3).

    rng may be a Generator or an integer seed. sigma = 0 returns R itself.
    """
    if sigma == 0.0:
        return np.array(R, copy=True)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return exp_so3(rng.normal(scale=sigma, size=3)) @ R


def bias_bench_case(seed, L=10, dt=0.005, rate_max=0.52, bias_sigma=0.02):
    """One gyro-solver benchmark case: varying-rate window, exact truth.

    The rate profile is R(t) = Exp(w0 t) Exp(u A sin(2 pi f t)), whose body
    rate and end rotation are both closed-form, so R_ij is the continuous
    truth rather than a discrete product. Returns (window, true_bg, R_ij).

    Unlike generate(), the gyro here reads the instantaneous rate at t_k,
    not the interval-average increment. The bench exists to compare the
    bias solvers' approximation quality, and sample-and-hold readings
    against a continuous-truth reference rotation are what give each solver
    a nonzero, method-dependent floor to measure.
    """
    rng = np.random.default_rng(seed)
    w0 = rng.normal(size=3)
    w0 *= rng.uniform(0.3, 1.0) * rate_max / np.linalg.norm(w0)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    A = rng.uniform(0.005, 0.02)
    f = rng.uniform(0.5, 2.0)
    bg = rng.normal(scale=bias_sigma, size=3)
    t = np.arange(L) * dt
    om = 2 * np.pi * f
    gyro = np.stack([
        exp_so3(u * A * np.sin(om * tk)).T @ w0 + u * A * om * np.cos(om * tk)
        for tk in t]) + bg
    T = L * dt
    R_ij = exp_so3(w0 * T) @ exp_so3(u * A * np.sin(om * T))
    w = ImuWindow(t=t, gyro=gyro, accel=np.zeros((L, 3)), dt=dt)
    return w, bg, R_ij
