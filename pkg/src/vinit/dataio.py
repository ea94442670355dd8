"""File formats: EuRoC-style CSVs, the line-delimited track format, and
the results writer.

Time handling: files carry integer nanosecond stamps; in memory everything
runs on seconds relative to the first IMU sample (nanosecond magnitudes
would burn float precision). The first IMU stamp is returned alongside so
frame and ground-truth stamps can be put on the same base.
"""

import json

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRot

from .camera import FeatureTrack, Intrinsics
from .errors import (
    EmptyFile, NoNearbyTimestamp, NonMonotonicTime, ParseError, SchemaError,
)
from .imu import ImuWindow

GT_MAX_GAP_NS = 10_000_000  # 10 ms nearest-neighbor tolerance


def _data_rows(path):
    """Yield (line_number, fields) for non-comment, non-blank CSV rows."""
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield i, line.split(",")


def load_imu_csv(path):
    """Parse `timestamp_ns,wx,wy,wz,ax,ay,az` rows into an ImuWindow.

    Returns (window, t0_ns). Timestamps become seconds relative to the
    first sample; dt is the median stamp gap. Strictly increasing stamps
    are required.
    """
    ts = []
    gyro = []
    accel = []
    for i, f in _data_rows(path):
        if len(f) != 7:
            raise ParseError(i, f"expected 7 fields, got {len(f)} at line {i}")
        try:
            stamp = int(f[0])
            vals = [float(x) for x in f[1:]]
        except ValueError:
            raise ParseError(i, f"unparseable IMU row at line {i}")
        if ts and stamp <= ts[-1]:
            raise NonMonotonicTime(i)
        ts.append(stamp)
        gyro.append(vals[0:3])
        accel.append(vals[3:6])
    if not ts:
        raise EmptyFile(f"no IMU rows in {path}")
    ts = np.asarray(ts, dtype=np.int64)
    t = (ts - ts[0]) / 1e9
    if len(ts) > 1:
        dt = float(np.median(np.diff(ts)) / 1e9)
    else:
        dt = 0.0
    return ImuWindow(t=t, gyro=np.asarray(gyro), accel=np.asarray(accel),
                     dt=dt), int(ts[0])


def load_tracks_json(path):
    """Parse the line-delimited track file.

    First record is the header {"v":1, fx, fy, cx, cy, frame_ts_ns:[...]},
    every following record one track {"id":…, "obs":{"<frame>":[u,v],…}}.
    Returns (tracks, Intrinsics, frame_ts_ns array). Structural validation
    only; root-frame presence is the linear system's concern.
    """
    header = None
    tracks = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError(i, f"invalid JSON at line {i}")
            if header is None:
                if rec.get("v") != 1:
                    raise SchemaError(f"unsupported track file version {rec.get('v')!r}")
                missing = [k for k in ("fx", "fy", "cx", "cy", "frame_ts_ns")
                           if k not in rec]
                if missing:
                    raise SchemaError(f"header lacks {missing}")
                header = rec
                continue
            if "id" not in rec or "obs" not in rec or not isinstance(rec["obs"], dict):
                raise SchemaError(f"track record at line {i} lacks id/obs")
            obs = {}
            for key, uv in rec["obs"].items():
                try:
                    frame = int(key)
                except ValueError:
                    raise SchemaError(f"non-integer frame key {key!r} at line {i}")
                if not isinstance(uv, (list, tuple)) or len(uv) != 2:
                    raise SchemaError(f"observation at line {i} is not [u, v]")
                obs[frame] = np.array([float(uv[0]), float(uv[1])])
            tracks.append(FeatureTrack(id=int(rec["id"]), obs=obs))
    if header is None:
        raise EmptyFile(f"no header record in {path}")
    K = Intrinsics(float(header["fx"]), float(header["fy"]),
                   float(header["cx"]), float(header["cy"]))
    return tracks, K, np.asarray(header["frame_ts_ns"], dtype=np.int64)


class FrameTruth:
    """Ground truth resampled at frame times, in the interface the
    initialization evaluator expects (body-frame gravity/velocity)."""

    def __init__(self, R, v, bg, ba, g_world):
        self.R = R
        self.v = v
        self.bg = np.asarray(bg, dtype=float)
        self.ba = np.asarray(ba, dtype=float)
        self.g_world = np.asarray(g_world, dtype=float)

    def g_body(self, i):
        return self.R[i].T @ self.g_world

    def v_body(self, i):
        return self.R[i].T @ self.v[i]


class GroundTruth:
    """EuRoC ground-truth table with nearest-timestamp lookup."""

    def __init__(self, ts_ns, p, R, v, bg, ba):
        self.ts_ns = ts_ns
        self.p = p
        self.R = R
        self.v = v
        self.bg = bg
        self.ba = ba

    def lookup(self, ts_ns):
        """State nearest to ts_ns; NoNearbyTimestamp beyond 10 ms."""
        i = int(np.searchsorted(self.ts_ns, ts_ns))
        best, gap = None, None
        for c in (i - 1, i):
            if 0 <= c < len(self.ts_ns):
                g = abs(int(self.ts_ns[c]) - int(ts_ns))
                if gap is None or g < gap:
                    best, gap = c, g
        if best is None or gap > GT_MAX_GAP_NS:
            raise NoNearbyTimestamp(
                f"no ground truth within 10 ms of {ts_ns}")
        return (self.p[best], self.R[best], self.v[best],
                self.bg[best], self.ba[best])

    def at_frames(self, frame_ts_ns, g_world=(0.0, 0.0, -9.81)):
        """FrameTruth at the given stamps; biases from the first frame."""
        Rs, vs = [], []
        bg = ba = None
        for ts in frame_ts_ns:
            _, R, v, bg_i, ba_i = self.lookup(int(ts))
            Rs.append(R)
            vs.append(v)
            if bg is None:
                bg, ba = bg_i, ba_i
        return FrameTruth(np.stack(Rs), np.stack(vs), bg, ba, g_world)


def load_groundtruth_csv(path):
    """Parse EuRoC state_groundtruth_estimate0 rows (17 columns).

    Columns: timestamp_ns, p(3), q_wxyz(4), v(3), bg(3), ba(3). The
    quaternion is normalized before conversion.
    """
    ts, ps, Rs, vs, bgs, bas = [], [], [], [], [], []
    for i, f in _data_rows(path):
        if len(f) != 17:
            raise ParseError(i, f"expected 17 fields, got {len(f)} at line {i}")
        try:
            stamp = int(f[0])
            vals = np.array([float(x) for x in f[1:]])
        except ValueError:
            raise ParseError(i, f"unparseable ground-truth row at line {i}")
        if ts and stamp <= ts[-1]:
            raise NonMonotonicTime(i)
        q = vals[3:7]
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ParseError(i, f"zero quaternion at line {i}")
        q = q / n
        # scipy uses xyzw order
        R = _ScipyRot.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        ts.append(stamp)
        ps.append(vals[0:3])
        Rs.append(R)
        vs.append(vals[7:10])
        bgs.append(vals[10:13])
        bas.append(vals[13:16])
    if not ts:
        raise EmptyFile(f"no ground-truth rows in {path}")
    return GroundTruth(np.asarray(ts, dtype=np.int64), np.asarray(ps),
                       np.asarray(Rs), np.asarray(vs), np.asarray(bgs),
                       np.asarray(bas))


# ------------------------------------------------------------------ export

# EuRoC-magnitude epoch so exported stamps exercise the ns->relative-s path
EXPORT_T0_NS = 1_403_636_580_000_000_000


def _to_ns(t_seconds, t0_ns=EXPORT_T0_NS):
    return (np.round(np.asarray(t_seconds) * 1e9).astype(np.int64) + t0_ns)


def export_scenario(sc, out_dir, t0_ns=EXPORT_T0_NS):
    """Write a Scenario as imu.csv, tracks.jsonl, and gt.csv.

    Frame and IMU stamps land on the same nanosecond base, so loading the
    files reproduces the in-memory time values exactly (stamps are integer
    nanoseconds of sample times that are exact multiples of the IMU step).
    Returns the three paths.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    imu_path = os.path.join(out_dir, "imu.csv")
    tracks_path = os.path.join(out_dir, "tracks.jsonl")
    gt_path = os.path.join(out_dir, "gt.csv")

    imu_ns = _to_ns(sc.imu.t, t0_ns)
    with open(imu_path, "w") as fh:
        fh.write("#timestamp [ns],w_x,w_y,w_z,a_x,a_y,a_z\n")
        for k in range(len(sc.imu.t)):
            vals = [float(x) for x in (*sc.imu.gyro[k], *sc.imu.accel[k])]
            fh.write(f"{imu_ns[k]}," + ",".join(repr(x) for x in vals) + "\n")

    frame_ns = _to_ns(sc.frame_ts, t0_ns)
    with open(tracks_path, "w") as fh:
        header = {"v": 1, "fx": sc.K.fx, "fy": sc.K.fy,
                  "cx": sc.K.cx, "cy": sc.K.cy,
                  "frame_ts_ns": [int(x) for x in frame_ns]}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for trk in sc.tracks:
            rec = {"id": trk.id,
                   "obs": {str(j): [float(z[0]), float(z[1])]
                           for j, z in sorted(trk.obs.items())}}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    with open(gt_path, "w") as fh:
        fh.write("#timestamp,p_x,p_y,p_z,q_w,q_x,q_y,q_z,"
                 "v_x,v_y,v_z,bw_x,bw_y,bw_z,ba_x,ba_y,ba_z\n")
        tr = sc.truth
        for j in range(len(sc.frame_ts)):
            q = _ScipyRot.from_matrix(tr.R[j]).as_quat()  # xyzw
            row = ([int(frame_ns[j])]
                   + [repr(float(x)) for x in tr.p[j]]
                   + [repr(float(q[3])), repr(float(q[0])),
                      repr(float(q[1])), repr(float(q[2]))]
                   + [repr(float(x)) for x in tr.v[j]]
                   + [repr(float(x)) for x in tr.bg]
                   + [repr(float(x)) for x in tr.ba])
            fh.write(",".join(str(x) for x in row) + "\n")
    return imu_path, tracks_path, gt_path


# ------------------------------------------------------------------ results

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [float(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def write_results(path, records, timings_path=None):
    """Write attempt records as JSON lines, timings to a sibling file.

    Records must not contain a "timings_us" key themselves; pass the
    per-attempt timings under that key in each record dict and they are
    split out here so the main file stays byte-deterministic.
    """
    if timings_path is None:
        timings_path = path + ".timings"
    with open(path, "w") as fh, open(timings_path, "w") as th:
        for rec in records:
            rec = {k: _jsonable(v) for k, v in rec.items()}
            tim = rec.pop("timings_us", None)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if tim is not None:
                th.write(json.dumps(
                    {"attempt": rec.get("attempt"), "timings_us": tim},
                    sort_keys=True) + "\n")
    return path, timings_path
