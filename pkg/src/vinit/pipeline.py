"""End-to-end initialization: rotation/bias bootstrap, observability-gated
frame accumulation, and the closed-form state solve.

One attempt works on a window rooted at its first frame: the gyroscope
bias is estimated once from the first two frames, the window then grows
frame by frame under the two-stage observability gate, and on trigger the
full linear system is rebuilt with the frozen bias and solved. Helpers at
the bottom schedule independent attempts over a long sequence.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .camera import backproject
from .errors import InitError, NeverObservable, NoValidFeatures, ZeroVector
from .gyro_bias import (
    solve_bias_arithmetic, solve_bias_average, solve_bias_commutative,
    solve_bias_gauss_newton,
)
from .imu import REORTHO_EVERY, ImuWindow, compute_s_gamma, preintegrate_rotation
from .linear_system import BA_SIGN, FramePreint, build_system, solve_states
from .so3 import exp_so3, project_to_so3
from .observability import (
    SCHUR_PINV_CUTOFF, ObsConfig, ObsTrace, full_obs_test, mean_parallax,
    spectral_ratio_test, translation_obs_test,
)

BIAS_SOLVERS = {
    "commutative": solve_bias_commutative,
    "average": solve_bias_average,
    "arithmetic": solve_bias_arithmetic,
    "gauss_newton": solve_bias_gauss_newton,
}


def frame_preints(imu: ImuWindow, frame_ts, bg, frames):
    """IMU integrals from the root frame to each listed frame index.

    frame_ts holds per-frame times on the IMU window's time base; samples
    in [frame_ts[0], frame_ts[j]) feed frame j's integrals. The half-step
    slack in searchsorted absorbs float jitter in nominally aligned stamps.
    """
    half = 0.5 * imu.dt
    i0 = int(np.searchsorted(imu.t, frame_ts[0] - half))
    out = []
    for j in frames:
        i1 = int(np.searchsorted(imu.t, frame_ts[j] - half))
        w = imu.subwindow(i0, i1)
        s, G = compute_s_gamma(w, bg, frame_ts[j])
        R = preintegrate_rotation(w, bg)
        out.append(FramePreint(frame_index=int(j),
                               t_rel=float(frame_ts[j] - frame_ts[0]),
                               s=s, Gamma=G, R_ij=R))
    return out


def gravity_direction_error(g_est, g_true):
    """Angle in degrees between two gravity vectors; rejects near-zero input."""
    g_est = np.asarray(g_est, dtype=float)
    g_true = np.asarray(g_true, dtype=float)
    ne = np.linalg.norm(g_est)
    nt = np.linalg.norm(g_true)
    if ne < 1e-12 or nt < 1e-12:
        raise ZeroVector("gravity direction undefined for zero vector")
    c = np.clip((g_est @ g_true) / (ne * nt), -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


class _PreintStream:
    """One pass over an attempt's IMU samples, emitting per-frame integrals.

    The per-sample weight (t_end - t_k - dt/2) dt splits into
    t_end * [dt] - [(t_k + dt/2) dt], so running prefix sums of the rotated
    readings give every frame's s and Gamma without revisiting samples —
    the growing window costs O(samples) total instead of O(frames *
    samples). Matches compute_s_gamma up to the reassociated summation.
    """

    def __init__(self, imu: ImuWindow, bg, t_root):
        self.imu = imu
        self.bg = np.asarray(bg, dtype=float)
        self.half = 0.5 * imu.dt
        self.k = int(np.searchsorted(imu.t, t_root - self.half))
        self.t_root = float(t_root)
        self.count = 0
        self.R = np.eye(3)
        self.A = np.zeros(3)        # sum R_k a_k dt
        self.B = np.zeros(3)        # sum R_k a_k (t_k + dt/2) dt
        self.C = np.zeros((3, 3))   # sum R_k dt
        self.D = np.zeros((3, 3))   # sum R_k (t_k + dt/2) dt

    def advance(self, frame_index, t_frame):
        """Consume samples in [last, t_frame) and return that frame's preint."""
        imu = self.imu
        dt = imu.dt
        end = int(np.searchsorted(imu.t, t_frame - self.half))
        while self.k < end:
            k = self.k
            ra = self.R @ imu.accel[k]
            mid = (imu.t[k] + 0.5 * dt) * dt
            self.A += ra * dt
            self.B += ra * mid
            self.C += self.R * dt
            self.D += self.R * mid
            self.R = self.R @ exp_so3((imu.gyro[k] - self.bg) * dt)
            self.count += 1
            if self.count % REORTHO_EVERY == 0:
                self.R = project_to_so3(self.R)
            self.k = k + 1
        s = t_frame * self.A - self.B
        G = t_frame * self.C - self.D
        return FramePreint(frame_index=int(frame_index),
                           t_rel=float(t_frame - self.t_root),
                           s=s, Gamma=G, R_ij=self.R.copy())


class _FeatAcc:
    """Running pieces of one feature's depth block and its theta coupling."""
    __slots__ = ("rr", "rc", "cc", "tl_root", "tl_cols")

    def __init__(self):
        self.rr = 0.0
        self.rc = []
        self.cc = []
        self.tl_root = np.zeros(9)
        self.tl_cols = []


class _StageTwoAccum:
    """Reduced Hessian of the growing window, maintained frame by frame.

    Two structural facts make the update cheap: all tracks visible in a
    frame share that frame's 9-column theta block, and a feature's depth
    columns only meet rows of its own observations, so the depth block
    stays a per-feature arrowhead (root-depth column against later-frame
    columns). Produces the same matrix as building the full system and
    marginalizing depths, up to floating-point summation order.
    """

    def __init__(self, tracks, K):
        self.K = K
        self.rooted = [t for t in tracks if 0 in t.obs]
        self.mu_root = {t.id: backproject(t.obs[0], K) for t in self.rooted}
        self.h_theta = np.zeros((9, 9))
        self.feats = {}

    def add_frame(self, pr: FramePreint):
        """Fold one preintegrated frame's constraint rows in."""
        t = pr.t_rel
        theta = np.zeros((3, 9))
        theta[:, 0:3] = -0.5 * t * t * np.eye(3)
        theta[:, 3:6] = -t * np.eye(3)
        theta[:, 6:9] = BA_SIGN * pr.Gamma
        n_vis = 0
        for trk in self.rooted:
            z = trk.obs.get(pr.frame_index)
            if z is None:
                continue
            n_vis += 1
            mu0 = self.mu_root[trk.id]
            cj = -(pr.R_ij @ backproject(z, self.K))
            fa = self.feats.setdefault(trk.id, _FeatAcc())
            fa.rr += float(mu0 @ mu0)
            fa.rc.append(float(mu0 @ cj))
            fa.cc.append(float(cj @ cj))
            fa.tl_root += theta.T @ mu0
            fa.tl_cols.append(theta.T @ cj)
        if n_vis:
            self.h_theta += n_vis * (theta.T @ theta)
        return n_vis

    def h_star(self):
        """Current 9x9 depth-marginalized Hessian."""
        max_diag = 0.0
        for fa in self.feats.values():
            max_diag = max(max_diag, fa.rr, max(fa.cc, default=0.0))
        cut = SCHUR_PINV_CUTOFF * max_diag
        out = self.h_theta.copy()
        for fa in self.feats.values():
            k = len(fa.cc)
            h_ll = np.zeros((1 + k, 1 + k))
            h_ll[0, 0] = fa.rr
            if k:
                h_ll[0, 1:] = fa.rc
                h_ll[1:, 0] = fa.rc
                idx = np.arange(1, k + 1)
                h_ll[idx, idx] = fa.cc
            h_tl = np.column_stack([fa.tl_root] + fa.tl_cols)
            vals, vecs = np.linalg.eigh(h_ll)
            keep = vals > cut
            if not np.any(keep):
                continue
            inv_vals = np.zeros_like(vals)
            inv_vals[keep] = 1.0 / vals[keep]
            out -= h_tl @ ((vecs * inv_vals) @ vecs.T) @ h_tl.T
        return 0.5 * (out + out.T)


class RotationSource:
    """Per-frame body orientations standing in for the vision front end.

    Holds one rotation per frame in a common (arbitrary) reference; only
    relative rotations between frames are ever consumed. Perturbation
    happens once at construction so repeated queries are deterministic.
    """

    def __init__(self, rotations):
        self.R = np.asarray(rotations, dtype=float)
        if self.R.ndim != 3 or self.R.shape[1:] != (3, 3):
            raise ValueError("rotations must be (M, 3, 3)")

    @classmethod
    def provided(cls, rotations):
        return cls(rotations)

    @classmethod
    def ground_truth_perturbed(cls, rotations, sigma, rng):
        """Each frame's true orientation left-perturbed by N(0, sigma^2) rad."""
        from .synth import perturb_rotation
        R = np.asarray(rotations, dtype=float)
        if sigma > 0.0:
            R = np.stack([perturb_rotation(Rj, sigma, rng) for Rj in R])
        return cls(R)

    def relative(self, i, j):
        """Rotation taking frame-j body coordinates to frame-i body."""
        return self.R[i].T @ self.R[j]


@dataclass
class InitAttemptResult:
    """Everything one successful attempt produced."""
    init: object                 # InitState
    bg: np.ndarray
    R_ij: np.ndarray             # first-pair relative rotation used for bias
    trace: ObsTrace
    window_s: float
    trigger_ts: float            # time of the triggering frame, IMU time base
    timings: dict                # stage name -> microseconds
    gravity_dir_err: float | None = None
    vel_err: float | None = None
    bg_err: float | None = None
    ba_err: float | None = None


def run_initialization(imu: ImuWindow, tracks, K, frame_ts, rotation_source,
                       cfg: ObsConfig = None, bias_method="arithmetic",
                       truth=None):
    """One initialization attempt rooted at frame 0 of the given window.

    Estimates the first-pair rotation and gyro bias from frames 0-1, then
    grows the window one frame at a time: each frame runs the parallax
    test, and once that passes, the spectral test on the depth-
    marginalized Hessian. After cfg.consecutive_passes spectral passes the
    system is rebuilt with the frozen bias and solved.

    truth, when given, must expose g_body(i), v_body(i), bg, ba (frame
    indices on this window); error metrics stay None without it.

    Raises NeverObservable (carrying the trace) when the frames run out
    before the gate passes.
    """
    if cfg is None:
        cfg = ObsConfig()
    if bias_method not in BIAS_SOLVERS:
        raise ValueError(f"unknown bias method {bias_method!r}")
    if len(frame_ts) < 2:
        raise ValueError("need at least two frames")

    timings = {"rotation_bias": 0.0, "stage1": 0.0, "stage2": 0.0, "solve": 0.0}
    t0 = time.perf_counter_ns()
    R_01 = rotation_source.relative(0, 1)
    half = 0.5 * imu.dt
    w01 = imu.subwindow(int(np.searchsorted(imu.t, frame_ts[0] - half)),
                        int(np.searchsorted(imu.t, frame_ts[1] - half)))
    bg = BIAS_SOLVERS[bias_method](R_01, w01)
    timings["rotation_bias"] = (time.perf_counter_ns() - t0) / 1e3

    trace = ObsTrace()
    prev_rho = None
    streak = 0
    trigger = None
    stream = _PreintStream(imu, bg, frame_ts[0])
    preints = []
    accum = _StageTwoAccum(tracks, K) if cfg.sigma_weights is None else None
    for j in range(1, len(frame_ts)):
        t1 = time.perf_counter_ns()
        try:
            par = mean_parallax(tracks, j, rotation_source.relative(0, j), K)
        except NoValidFeatures:
            # momentary loss of co-visibility with the root: no parallax
            # evidence this frame, keep scanning
            timings["stage1"] += (time.perf_counter_ns() - t1) / 1e3
            continue
        trace.parallax.append((j, par))
        stage1_ok = translation_obs_test(par, cfg)
        timings["stage1"] += (time.perf_counter_ns() - t1) / 1e3
        if not stage1_ok:
            continue
        if trace.trigger_frame_stage1 is None:
            trace.trigger_frame_stage1 = j

        t2 = time.perf_counter_ns()
        while len(preints) < j:
            f = len(preints) + 1
            pr = stream.advance(f, frame_ts[f])
            preints.append(pr)
            if accum is not None:
                accum.add_frame(pr)
        if accum is not None:
            ok, rho = spectral_ratio_test(accum.h_star(), prev_rho, cfg)
        else:
            # per-row weights need the explicit system; slow path
            usable = [t for t in tracks
                      if 0 in t.obs and any(f in t.obs for f in range(1, j + 1))]
            ok, rho = full_obs_test(build_system(usable, preints, K),
                                    prev_rho, cfg)
        d_rho = abs(rho - prev_rho) / prev_rho if prev_rho is not None else None
        trace.rho.append((j, rho, d_rho))
        prev_rho = rho
        timings["stage2"] += (time.perf_counter_ns() - t2) / 1e3
        streak = streak + 1 if ok else 0
        if streak >= cfg.consecutive_passes:
            trace.trigger_frame_stage2 = j
            trigger = j
            break
    if trigger is None:
        raise NeverObservable(trace)

    t3 = time.perf_counter_ns()
    usable = [t for t in tracks
              if 0 in t.obs and any(f in t.obs for f in range(1, trigger + 1))]
    sys = build_system(usable, preints, K)
    st = solve_states(sys)
    timings["solve"] = (time.perf_counter_ns() - t3) / 1e3

    res = InitAttemptResult(
        init=st, bg=bg, R_ij=R_01, trace=trace,
        window_s=float(frame_ts[trigger] - frame_ts[0]),
        trigger_ts=float(frame_ts[trigger]), timings=timings)
    if truth is not None:
        res.gravity_dir_err = gravity_direction_error(st.g, truth.g_body(0))
        res.vel_err = float(np.linalg.norm(st.v - truth.v_body(0)))
        res.bg_err = float(np.linalg.norm(bg - truth.bg))
        res.ba_err = float(np.linalg.norm(st.ba - truth.ba))
    return res


def attempt_roots(frame_ts, every_s=0.5):
    """Frame indices at which to root successive attempts, one per every_s."""
    roots = []
    next_t = frame_ts[0]
    for i, t in enumerate(frame_ts):
        if t >= next_t - 1e-9:
            roots.append(i)
            next_t = t + every_s
    return [r for r in roots if r + 1 < len(frame_ts)]


class _ShiftedTruth:
    """Truth view of a window rooted at global frame r."""

    def __init__(self, truth, r):
        self._t = truth
        self._r = r
        self.bg = truth.bg
        self.ba = truth.ba

    def g_body(self, i):
        return self._t.g_body(self._r + i)

    def v_body(self, i):
        return self._t.v_body(self._r + i)


def run_attempts(imu, tracks, K, frame_ts, rotations, roots,
                 cfg: ObsConfig = None, bias_method="arithmetic",
                 truth=None, sigma_rot=0.0, seed=0):
    """Independent attempts rooted at the given frame indices.

    rotations: (M, 3, 3) per-frame orientations (ground truth or a vision
    estimate); each attempt sees them perturbed by sigma_rot (radians)
    under a root-specific deterministic substream of seed.

    Returns a list of (root_index, InitAttemptResult | InitError).
    """
    from .camera import FeatureTrack
    out = []
    for r in roots:
        local_ts = frame_ts[r:]
        local_tracks = [
            FeatureTrack(id=t.id,
                         obs={j - r: z for j, z in t.obs.items() if j >= r})
            for t in tracks]
        local_tracks = [t for t in local_tracks if len(t.obs) >= 2 and 0 in t.obs]
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        src = RotationSource.ground_truth_perturbed(rotations[r:], sigma_rot, rng)
        local_truth = _ShiftedTruth(truth, r) if truth is not None else None
        try:
            res = run_initialization(imu, local_tracks, K, local_ts, src,
                                     cfg=cfg, bias_method=bias_method,
                                     truth=local_truth)
        except InitError as err:
            res = err
        out.append((r, res))
    return out


def median_runtime_us(fn, reps=100):
    """Median wall-clock microseconds of fn() over warm repetitions."""
    fn()
    samples = np.empty(reps)
    for i in range(reps):
        a = time.perf_counter_ns()
        fn()
        samples[i] = (time.perf_counter_ns() - a) / 1e3
    return float(np.median(samples))
