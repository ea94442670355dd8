"""Command-line tool: scenario runs, the bias-solver benchmark, and
observability traces.

`synth-run` writes the generated scenario to EuRoC-style files, then loads
them back and runs attempts from the files, so its results are exactly
what `euroc-run` produces on the same inputs. Results files are
deterministic for a given seed; timing measurements go to a separate
sibling file so the main results stay byte-stable.

Exit codes: 0 success, 1 input/config error, 2 algorithm error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import dataio
from .errors import (
    ConfigInvalid, EmptyFile, InitError, NeverObservable, NoNearbyTimestamp,
    NonMonotonicTime, ParseError, SchemaError,
)
from .observability import ObsConfig
from .pipeline import (
    BIAS_SOLVERS, attempt_roots, median_runtime_us, run_attempts,
)
from .synth import ScenarioConfig, bias_bench_case, generate, perturb_rotation

INPUT_ERRORS = (ParseError, SchemaError, NonMonotonicTime, EmptyFile,
                NoNearbyTimestamp, ConfigInvalid, OSError, ValueError)

BENCH_SIGMAS_DEG = (0.0, 0.006, 0.03, 0.06)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1 (input error)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _obs_config(args):
    return ObsConfig(parallax_th=args.parallax_th, rho_change_th=args.rho_th)


def _attempt_records(imu, t0_ns, tracks, K, frame_ns, truth, args):
    """Shared attempt loop over loaded data; returns result records."""
    frame_ts = (np.asarray(frame_ns, dtype=np.int64) - t0_ns) / 1e9
    roots = attempt_roots(frame_ts, args.every)
    out = run_attempts(imu, tracks, K, frame_ts, truth.R, roots,
                       cfg=_obs_config(args), bias_method=args.bias_method,
                       truth=truth, sigma_rot=np.radians(args.sigma_rot_deg),
                       seed=args.seed)
    records = []
    for i, (root, res) in enumerate(out):
        rec = {"attempt": i, "root_frame": int(root)}
        if isinstance(res, Exception):
            rec["status"] = ("never_observable"
                             if isinstance(res, NeverObservable)
                             else type(res).__name__)
        else:
            trig = root + res.trace.trigger_frame_stage2
            rec.update({
                "status": "ok",
                "trigger_ts": int(frame_ns[trig]),
                "window_s": res.window_s,
                "bg": res.bg,
                "g": res.init.g,
                "v": res.init.v,
                "ba": res.init.ba,
                "gravity_dir_err_deg": res.gravity_dir_err,
                "vel_err": res.vel_err,
                "ba_err": res.ba_err,
                "timings_us": {k: round(v, 1)
                               for k, v in res.timings.items()},
            })
        records.append(rec)
    return records


def _run_from_files(imu_path, tracks_path, gt_path, out_path, args):
    imu, t0_ns = dataio.load_imu_csv(imu_path)
    tracks, K, frame_ns = dataio.load_tracks_json(tracks_path)
    truth = dataio.load_groundtruth_csv(gt_path).at_frames(frame_ns)
    records = _attempt_records(imu, t0_ns, tracks, K, frame_ns, truth, args)
    res_path, tim_path = dataio.write_results(out_path, records)
    n_ok = sum(1 for r in records if r["status"] == "ok")
    print(f"{len(records)} attempts, {n_ok} initialized -> {res_path}")
    return 0


def cmd_synth_run(args):
    cfg = ScenarioConfig(motion=args.motion, duration=args.duration,
                         seed=args.seed, imu_rate=args.imu_rate,
                         cam_rate=args.cam_rate, n_landmarks=args.landmarks,
                         landmark_placement=args.placement,
                         body_rate=args.body_rate, cv_wobble=args.cv_wobble,
                         lin_velocity=args.lin_velocity)
    sc = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    imu_p, tracks_p, gt_p = dataio.export_scenario(sc, args.out)
    return _run_from_files(imu_p, tracks_p, gt_p,
                           os.path.join(args.out, "results.jsonl"), args)


def cmd_euroc_run(args):
    return _run_from_files(args.imu, args.tracks, args.gt, args.out, args)


def bias_sweep(trials, sigmas_deg=BENCH_SIGMAS_DEG, seed=0):
    """Per-sigma, per-method mean gyro-bias error over synthetic cases.

    Case k at noise sigma uses the rotation R_ij left-perturbed by an
    Exp(eta) with eta ~ N(0, sigma^2): the solver sees a noisy relative
    rotation, as a vision front end would hand it. Common random numbers
    across methods: every method sees the same cases.
    """
    sweep = {}
    for sig_deg in sigmas_deg:
        sig = np.radians(sig_deg)
        errs = {m: np.empty(trials) for m in BIAS_SOLVERS}
        for k in range(trials):
            w, bg, R_ij = bias_bench_case(seed + k)
            rng = np.random.default_rng(np.random.SeedSequence((seed, 1000 + k)))
            R_noisy = perturb_rotation(R_ij, sig, rng)
            for m, fn in BIAS_SOLVERS.items():
                errs[m][k] = np.linalg.norm(fn(R_noisy, w) - bg)
        sweep[sig_deg] = {m: float(e.mean()) for m, e in errs.items()}
    return sweep


def bias_timings(reps=200, seed=0, L=50):
    """Median warm runtime (microseconds) of each solver on one window.

    Defaults to a longer window than the accuracy benchmark: on short
    windows interpreter dispatch dominates every solver and hides the
    algorithmic gap the numbers are meant to show.
    """
    w, _, R_ij = bias_bench_case(seed, L=L)
    return {m: median_runtime_us(lambda fn=fn: fn(R_ij, w), reps=reps)
            for m, fn in BIAS_SOLVERS.items()}


def cmd_bias_bench(args):
    sigmas = BENCH_SIGMAS_DEG if args.sigma_rot_deg is None \
        else (args.sigma_rot_deg,)
    sweep = bias_sweep(args.trials, sigmas, seed=args.seed)
    times = bias_timings(seed=args.seed)
    for sig_deg, by_method in sweep.items():
        print(f"sigma_rot = {sig_deg} deg")
        for m, e in by_method.items():
            print(f"  {m:<14} mean |bg_err| = {e:.6e} rad/s")
        lo, hi = min(by_method.values()), max(by_method.values())
        spread = (hi - lo) / hi if hi > 0 else 0.0
        print(f"  spread (max-min)/max = {spread:.2%}")
    print("median runtime (us):")
    for m, t in times.items():
        print(f"  {m:<14} {t:.1f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(json.dumps({"errors": sweep}, sort_keys=True) + "\n")
        with open(args.out + ".timings", "w") as fh:
            fh.write(json.dumps({"runtime_us": times}, sort_keys=True) + "\n")
    return 0


def cmd_obs_trace(args):
    from .pipeline import RotationSource, run_initialization
    cfg = ScenarioConfig(motion=args.motion, duration=args.duration,
                         seed=args.seed, imu_rate=args.imu_rate,
                         cam_rate=args.cam_rate, n_landmarks=args.landmarks)
    sc = generate(cfg)
    src = RotationSource.provided(sc.truth.R)
    try:
        res = run_initialization(sc.imu, sc.tracks, sc.K, sc.frame_ts, src,
                                 cfg=_obs_config(args),
                                 bias_method=args.bias_method)
        trace = res.trace
        outcome = f"triggered at frame {trace.trigger_frame_stage2}"
    except NeverObservable as err:
        trace = err.trace
        outcome = "never observable"
    rho_by_frame = {j: (r, d) for j, r, d in trace.rho}
    with open(args.out, "w") as fh:
        fh.write("frame,parallax_px,rho,rho_rel_change\n")
        for j, par in trace.parallax:
            rho, d = rho_by_frame.get(j, (None, None))
            fh.write(f"{j},{par!r},{'' if rho is None else repr(rho)},"
                     f"{'' if d is None else repr(d)}\n")
    print(f"{outcome}; trace -> {args.out}")
    return 0


def _add_obs_flags(p):
    p.add_argument("--parallax-th", type=float, default=2.0,
                   help="stage-1 mean parallax threshold, px")
    p.add_argument("--rho-th", type=float, default=0.05,
                   help="stage-2 relative spectral-ratio change threshold")
    p.add_argument("--bias-method", default="arithmetic",
                   choices=sorted(BIAS_SOLVERS))
    p.add_argument("--seed", type=int, default=0)


def _add_scenario_flags(p):
    p.add_argument("--motion", default="constant_velocity",
                   choices=("constant_velocity", "sinusoidal", "pure_rotation"))
    p.add_argument("--duration", type=float, default=4.0, help="seconds")
    p.add_argument("--imu-rate", type=float, default=200.0)
    p.add_argument("--cam-rate", type=float, default=20.0)
    p.add_argument("--landmarks", type=int, default=120)


def make_parser():
    ap = _Parser(prog="vinit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-run", parents=[], help="generate a scenario, "
                       "export it, and run initialization attempts from the files")
    _add_scenario_flags(p)
    _add_obs_flags(p)
    p.add_argument("--placement", default="along_path",
                   choices=("root_frustum", "along_path"))
    p.add_argument("--body-rate", type=float, nargs=3,
                   default=(0.1, -0.15, 0.2), metavar=("WX", "WY", "WZ"))
    p.add_argument("--cv-wobble", type=float, nargs=3,
                   default=(0.75, 0.6, -0.15), metavar=("WX", "WY", "WZ"))
    p.add_argument("--lin-velocity", type=float, nargs=3,
                   default=(0.3, 0.1, 0.05), metavar=("VX", "VY", "VZ"))
    p.add_argument("--sigma-rot-deg", type=float, default=0.0,
                   help="rotation-source noise per frame, degrees")
    p.add_argument("--every", type=float, default=0.5,
                   help="attempt spacing, seconds")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth_run)

    p = sub.add_parser("euroc-run", help="run attempts on EuRoC-style files")
    p.add_argument("--imu", required=True, help="IMU CSV path")
    p.add_argument("--tracks", required=True, help="tracks JSONL path")
    p.add_argument("--gt", required=True, help="ground-truth CSV path")
    _add_obs_flags(p)
    p.add_argument("--sigma-rot-deg", type=float, default=0.0)
    p.add_argument("--every", type=float, default=0.5)
    p.add_argument("--out", required=True, help="results file path")
    p.set_defaults(fn=cmd_euroc_run)

    p = sub.add_parser("bias-bench", help="gyro-bias solver error/runtime "
                       "benchmark over a rotation-noise sweep")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--sigma-rot-deg", type=float, default=None,
                   help="single noise level; default sweeps 0/0.006/0.03/0.06")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(fn=cmd_bias_bench)

    p = sub.add_parser("obs-trace", help="emit per-frame parallax/rho CSV "
                       "for one attempt")
    _add_scenario_flags(p)
    _add_obs_flags(p)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(fn=cmd_obs_trace)
    return ap


def main(argv=None):
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except SystemExit as se:
        return se.code if se.code is not None else 0
    except INPUT_ERRORS as err:
        print(f"vinit: input error: {err}", file=sys.stderr)
        return 1
    except InitError as err:
        print(f"vinit: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
