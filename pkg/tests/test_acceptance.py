"""Acceptance suite: ten numbered criteria, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines stream.
Each criterion prints its measured numbers next to the verdict so a failure
is diagnosable from the log alone.
"""

import itertools
import json
import subprocess
import sys
import time

import numpy as np

from vinit.camera import FeatureTrack, Intrinsics
from vinit.cli import bias_sweep, bias_timings
from vinit.errors import InitError, NeverObservable
from vinit.gyro_bias import (
    solve_bias_arithmetic, solve_bias_average, solve_bias_commutative,
)
from vinit.imu import ImuWindow
from vinit.linear_system import FramePreint, build_system, solve_states
from vinit.observability import ObsConfig, mean_parallax, reduced_hessian
from vinit.pipeline import (
    BIAS_SOLVERS, RotationSource, attempt_roots, frame_preints,
    gravity_direction_error, median_runtime_us, run_attempts,
    run_initialization,
)
from vinit.so3 import exp_many, exp_so3, log_many, log_so3
from vinit.synth import ScenarioConfig, generate


def report(n, ok, detail):
    line = f"criterion {n:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


# the constant-velocity motion used by the gating criteria: instantaneous
# rate of fixed magnitude ~62 deg/s whose axis itself spins fast, so the
# spectral ratio settles within a second while features stay co-visible
CONING = dict(
    motion="constant_velocity",
    body_rate=(0.4 - 12.0, -0.6 - 9.6, 0.8 + 2.4),
    cv_wobble=(12.0, 9.6, -2.4),
    lin_velocity=(0.3, 0.1, 0.05),
)


def test_criterion_01_lie_round_trip():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    dirs = rng.normal(size=(100_000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = dirs * rng.uniform(0.0, 3.0, size=(100_000, 1))
    back = log_many(exp_many(r))
    worst = float(np.max(np.linalg.norm(back - r, axis=1)))
    elapsed = time.perf_counter() - t0
    # batch and scalar paths must agree on a subsample
    idx = rng.integers(0, len(r), size=500)
    scalar_gap = max(
        max(np.max(np.abs(exp_so3(r[i]) - exp_many(r[i:i + 1])[0])),
            np.max(np.abs(log_so3(exp_so3(r[i])) - back[i])))
        for i in idx)
    report(1, worst <= 1e-9 and elapsed < 5.0 and scalar_gap <= 1e-12,
           f"1e5 round trips worst {worst:.2e} (<=1e-9), {elapsed:.2f} s (<5), "
           f"scalar/batch gap {scalar_gap:.1e}")


def test_criterion_02_commutation_bound():
    rng = np.random.default_rng(2)
    dirs = rng.normal(size=(10_000, 2, 3))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    ab = dirs * rng.uniform(0.0, 0.05, size=(10_000, 2, 1))
    a, b = ab[:, 0], ab[:, 1]
    lhs = np.linalg.norm(exp_many(a + b) - exp_many(a) @ exp_many(b),
                         axis=(1, 2))
    bound = 2.0 * np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    violations = int(np.sum(lhs > bound))
    margin = float(np.max(lhs - bound))
    report(2, violations == 0,
           f"1e4 pairs, {violations} violations of |Exp(a+b)-Exp(a)Exp(b)|_F "
           f"<= 2|a||b| (worst lhs-bound {margin:.2e})")


def test_criterion_03_constant_rate_exactness():
    rng = np.random.default_rng(3)
    L, dt = 10, 0.005
    t = np.arange(L) * dt
    worst = {"average": 0.0, "arithmetic": 0.0, "commutative": 0.0}
    for _ in range(100):
        axis = rng.normal(size=3)
        c = axis / np.linalg.norm(axis) * rng.uniform(0.0, np.radians(30.0))
        bias = rng.normal(scale=0.02, size=3)
        w = ImuWindow(t=t, gyro=np.tile(c + bias, (L, 1)),
                      accel=np.zeros((L, 3)), dt=dt)
        R_ij = exp_so3(c * (L * dt))
        for name in worst:
            err = float(np.linalg.norm(BIAS_SOLVERS[name](R_ij, w) - bias))
            worst[name] = max(worst[name], err)
    ok = (worst["average"] <= 1e-9 and worst["arithmetic"] <= 1e-9
          and worst["commutative"] <= 1e-3)
    report(3, ok,
           f"constant rate <=30 deg/s, worst errors: avg {worst['average']:.2e} "
           f"arith {worst['arithmetic']:.2e} (<=1e-9), "
           f"commutative {worst['commutative']:.2e} (<=1e-3)")


def test_criterion_04_noise_convergence():
    t0 = time.perf_counter()
    sweep = bias_sweep(500, sigmas_deg=(0.0, 0.006, 0.03, 0.06), seed=0)
    elapsed = time.perf_counter() - t0
    at_06 = sweep[0.06]
    spread = (max(at_06.values()) - min(at_06.values())) / min(at_06.values())
    gaps_ok = True
    for m in ("commutative", "average", "arithmetic"):
        gaps = [abs(sweep[s][m] - sweep[s]["gauss_newton"])
                / sweep[s]["gauss_newton"]
                for s in (0.0, 0.006, 0.03, 0.06)]
        if not all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:])):
            gaps_ok = False
    report(4, spread <= 0.05 and gaps_ok and elapsed < 120.0,
           f"sigma=0.06 deg 500-trial mean spread {spread:.2%} (<=5%), "
           f"relative closed-form-vs-baseline gaps monotone decreasing: "
           f"{gaps_ok}, {elapsed:.1f} s (<120)")


def _fixed_window_solve(sc, bias_method="gauss_newton"):
    """First-pair bias, then one solve over every frame of the scenario."""
    W = len(sc.frame_ts) - 1
    half = 0.5 * sc.imu.dt
    i0 = int(np.searchsorted(sc.imu.t, sc.frame_ts[0] - half))
    i1 = int(np.searchsorted(sc.imu.t, sc.frame_ts[1] - half))
    bg = BIAS_SOLVERS[bias_method](sc.truth.R_rel(0, 1),
                                   sc.imu.subwindow(i0, i1))
    pre = frame_preints(sc.imu, sc.frame_ts, bg, range(1, W + 1))
    usable = [t for t in sc.tracks
              if 0 in t.obs and any(j in t.obs for j in range(1, W + 1))]
    return solve_states(build_system(usable, pre, sc.K))


def test_criterion_05_full_state_recovery_clean():
    sc = generate(ScenarioConfig(motion="constant_velocity", duration=4.0,
                                 seed=0, imu_rate=1000.0, cam_rate=20.0,
                                 n_landmarks=60))
    st = _fixed_window_solve(sc)
    g_err = gravity_direction_error(st.g, sc.truth.g_body(0))
    v_err = float(np.linalg.norm(st.v - sc.truth.v_body(0)))
    ba_err = float(np.linalg.norm(st.ba - sc.truth.ba))
    d_rel = max(abs(d - sc.truth.depths[k]) / sc.truth.depths[k]
                for k, d in st.depths.items())
    g_norm = float(np.linalg.norm(st.g))
    ok = (g_err <= 0.01 and v_err <= 1e-6 and ba_err <= 1e-6
          and d_rel <= 1e-6 and 9.80 <= g_norm <= 9.82)
    report(5, ok,
           f"dt=1e-3 clean cv: gravity {g_err:.1e} deg (<=0.01), "
           f"v {v_err:.1e} (<=1e-6), ba {ba_err:.1e} (<=1e-6), "
           f"depth rel {d_rel:.1e} (<=1e-6), |g| {g_norm:.4f}")


def test_criterion_06_noisy_rmse():
    ges, ves = [], []
    for seed in range(100):
        sc = generate(ScenarioConfig(
            motion="sinusoidal", duration=3.0, seed=6000 + seed,
            imu_rate=200.0, cam_rate=10.0, n_landmarks=25,
            rot_amp=(0.4, 0.3), trans_amp=(0.6, 0.4, 0.3),
            pixel_noise_sigma=0.5, gyro_noise_sigma=2e-3,
            accel_noise_sigma=2e-2))
        st = _fixed_window_solve(sc)
        ges.append(gravity_direction_error(st.g, sc.truth.g_body(0)))
        ves.append(float(np.linalg.norm(st.v - sc.truth.v_body(0))))
    g_rmse = float(np.sqrt(np.mean(np.square(ges))))
    v_rmse = float(np.sqrt(np.mean(np.square(ves))))
    report(6, g_rmse <= 2.0 and v_rmse <= 0.2,
           f"100 noisy trials (0.5 px, gyro 2e-3, accel 2e-2): gravity RMSE "
           f"{g_rmse:.3f} deg (<=2), velocity RMSE {v_rmse:.3f} m/s (<=0.2)")


def test_criterion_07_schur_equivalence_exhaustive():
    rng = np.random.default_rng(7)
    K = Intrinsics(458.0, 457.0, 376.0, 240.0)
    cfg = ObsConfig()

    def rand_px():
        return np.array([rng.uniform(60.0, 690.0), rng.uniform(60.0, 420.0)])

    worst = 0.0
    count = 0
    for n_later in (1, 2):
        subsets = [s for k in range(1, n_later + 1)
                   for s in itertools.combinations(range(1, n_later + 1), k)]
        for n_feat in range(1, 6):
            for pattern in itertools.product(subsets, repeat=n_feat):
                tracks = [
                    FeatureTrack(id=i, obs={0: rand_px(),
                                            **{j: rand_px() for j in pat}})
                    for i, pat in enumerate(pattern)]
                pre = [FramePreint(frame_index=j, t_rel=0.05 * j,
                                   s=rng.normal(size=3),
                                   Gamma=0.05 * j * np.eye(3)
                                   + 0.01 * rng.normal(size=(3, 3)),
                                   R_ij=exp_so3(0.1 * rng.normal(size=3)))
                       for j in range(1, n_later + 1)]
                sys_ = build_system(tracks, pre, K)
                fast = reduced_hessian(sys_, cfg)
                H = sys_.Xi.T @ sys_.Xi
                oracle = H[:9, :9] - H[:9, 9:] @ np.linalg.pinv(
                    H[9:, 9:], hermitian=True) @ H[9:, :9]
                rel = (np.linalg.norm(fast - oracle, ord="fro")
                       / max(np.linalg.norm(oracle, ord="fro"), 1e-300))
                worst = max(worst, rel)
                count += 1
    report(7, worst <= 1e-8,
           f"{count} exhaustive patterns (<=5 features, <=3 frames): worst "
           f"relative gap vs dense marginal {worst:.2e} (<=1e-8)")


def test_criterion_08_observability_gating():
    never = 0
    for seed in range(100):
        sc = generate(ScenarioConfig(motion="pure_rotation", duration=1.5,
                                     seed=8000 + seed, imu_rate=200.0,
                                     cam_rate=20.0, n_landmarks=40))
        src = RotationSource.provided(sc.truth.R)
        try:
            run_initialization(sc.imu, sc.tracks, sc.K, sc.frame_ts, src)
        except NeverObservable:
            never += 1
        except InitError:
            pass

    sc = generate(ScenarioConfig(**CONING, duration=60.0, seed=0,
                                 imu_rate=200.0, cam_rate=20.0,
                                 n_landmarks=400,
                                 landmark_placement="along_path"))
    roots = attempt_roots(sc.frame_ts, every_s=0.5)
    out = run_attempts(sc.imu, sc.tracks, sc.K, sc.frame_ts, sc.truth.R,
                       roots, truth=sc.truth)
    windows = [r.window_s for _, r in out if not isinstance(r, Exception)]
    mean_w = float(np.mean(windows))
    ok = (never == 100 and len(roots) >= 100 and len(windows) >= 100
          and 0.2 <= mean_w <= 1.0)
    report(8, ok,
           f"pure rotation NeverObservable {never}/100; cv 60 s: "
           f"{len(windows)}/{len(roots)} attempts triggered, mean window "
           f"{mean_w:.3f} s (in [0.2, 1.0])")


def test_criterion_09_relative_runtimes():
    times = bias_timings(reps=200, seed=0, L=50)
    solver_ratio = times["gauss_newton"] / times["arithmetic"]

    sc = generate(ScenarioConfig(**CONING, duration=1.0, seed=0,
                                 imu_rate=200.0, cam_rate=20.0,
                                 n_landmarks=50))
    M = 10
    pre = frame_preints(sc.imu, sc.frame_ts, sc.truth.bg, range(1, M + 1))
    usable = [t for t in sc.tracks
              if 0 in t.obs and any(j in t.obs for j in range(1, M + 1))]
    R_0M = sc.truth.R_rel(0, M)
    cfg = ObsConfig()

    def stage1():
        mean_parallax(usable, M, R_0M, sc.K)

    def stage2():
        h = reduced_hessian(build_system(usable, pre, sc.K), cfg)
        np.linalg.svd(h, compute_uv=False)

    t1 = median_runtime_us(stage1, reps=100)
    t2 = median_runtime_us(stage2, reps=100)
    stage_ratio = t2 / t1
    report(9, solver_ratio >= 50.0 and stage_ratio >= 3.0,
           f"arithmetic {times['arithmetic']:.0f} us vs GN "
           f"{times['gauss_newton']:.0f} us = {solver_ratio:.0f}x (>=50); "
           f"stage-1 {t1:.0f} us vs stage-2 {t2:.0f} us at M=10,N=50 = "
           f"{stage_ratio:.1f}x (>=3)")


def test_criterion_10_determinism(tmp_path):
    args = ["synth-run", "--motion", "constant_velocity", "--duration", "2.5",
            "--landmarks", "40", "--body-rate", "-11.6", "-10.2", "3.2",
            "--cv-wobble", "12.0", "9.6", "-2.4", "--seed", "5"]
    outs = []
    for d in ("a", "b"):
        proc = subprocess.run(
            [sys.executable, "-m", "vinit.cli", *args,
             "--out", str(tmp_path / d)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((tmp_path / d / "results.jsonl").read_bytes())
    identical = outs[0] == outs[1]
    has_timings = any("timings_us" in json.loads(line)
                      for line in outs[0].splitlines())
    report(10, identical and not has_timings,
           f"two synth-run invocations, same seed: results byte-identical "
           f"{identical}, timings kept out of results file {not has_timings}")
