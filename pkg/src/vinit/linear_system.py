"""Global linear system for gravity, velocity, accel bias, and depths.

One displacement constraint per (feature, later frame) pair, all expressed
in the body frame of the root (first) camera:

    -1/2 g t^2 - v t + Gamma_j ba + lam_0 mu_0 - lam_j mu_j = s_j

where t is the elapsed time to frame j, s_j and Gamma_j the IMU double
integrals, mu_0 the unit bearing in the root frame, and mu_j the frame-j
unit bearing rotated into the root frame by the preintegrated gyro
rotation. g and v are the root-body-frame gravity and velocity. The
accel-bias block enters with a plus sign: the double integrals carry raw
accelerometer readings, so the bias correction -Gamma_j ba moves to the
right side and flips when brought across. The sign is pinned by a
ground-truth residual test; flipping it breaks the cancellation against
s_j exactly (see tests).

Unknown order: [g(3), v(3), ba(3), depths frame-major]. Depth columns span
the full (frame, feature) grid including the root frame; pairs with no
observation are structurally absent (all-zero column, excluded from the
solve and from rank accounting).
"""

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, backproject
from .errors import NoCommonRoot, RankDeficient, TrackTooShort

# Singular values below this fraction of the largest are treated as zero.
SVD_CUTOFF = 1e-10

# Flip-guard: the accelerometer-bias block enters with +Gamma.
BA_SIGN = +1.0


@dataclass(frozen=True)
class FramePreint:
    """IMU integrals from the root frame to one later frame.

    R_ij rotates frame-j body coordinates into the root body frame and is
    used to express frame-j bearings there.
    """
    frame_index: int
    t_rel: float
    s: np.ndarray          # (3,)
    Gamma: np.ndarray      # (3, 3)
    R_ij: np.ndarray       # (3, 3)


@dataclass(frozen=True)
class LinearSystem:
    Xi: np.ndarray                   # (rows, 9 + n_frames * n_features)
    s_stack: np.ndarray              # (rows,)
    depth_index: dict                # (frame_index, feature_id) -> column
    present: np.ndarray              # (cols,) bool, structural presence
    frame_indices: tuple             # root first, then preint frames
    feature_ids: tuple
    row_feature: np.ndarray = None   # (rows,) owning feature id per row


@dataclass(frozen=True)
class InitState:
    """Solved initial state, root body frame."""
    g: np.ndarray
    v: np.ndarray
    ba: np.ndarray
    depths: dict                     # (frame_index, feature_id) -> metric depth

    def diagnostic_flags(self, g_low=9.6, g_high=10.0):
        """Soft sanity checks; violations are reported, never fatal."""
        flags = []
        gn = float(np.linalg.norm(self.g))
        if not (g_low <= gn <= g_high):
            flags.append(f"gravity norm {gn:.3f} outside [{g_low}, {g_high}]")
        neg = sum(1 for d in self.depths.values() if d <= 0.0)
        if neg:
            flags.append(f"{neg} non-positive depths")
        return flags


def build_system(tracks, preints, K: Intrinsics) -> LinearSystem:
    """Stack displacement constraints for all tracks and preint frames.

    Every track must be observed in the root frame (index taken from the
    caller's convention, frame 0) and at least once more. Rows appear for
    each (preint frame j, track) pair with an observation in j; a fully
    observed grid yields 3 (M-1) N rows for M frames and N features.
    """
    if not preints:
        raise ValueError("need at least one preintegrated frame")
    root = 0
    order = sorted(preints, key=lambda pr: pr.frame_index)
    frame_indices = (root,) + tuple(pr.frame_index for pr in order)
    if len(set(frame_indices)) != len(frame_indices):
        raise ValueError("duplicate frame indices in preints")

    for trk in tracks:
        if len(trk.obs) < 2:
            raise TrackTooShort(f"track {trk.id} has {len(trk.obs)} observation(s)")
        if root not in trk.obs:
            raise NoCommonRoot(f"track {trk.id} not observed in the root frame")

    feature_ids = tuple(trk.id for trk in tracks)
    n_feat = len(feature_ids)
    n_frames = len(frame_indices)
    n_cols = 9 + n_frames * n_feat
    depth_index = {}
    for fi, frame in enumerate(frame_indices):
        for ni, fid in enumerate(feature_ids):
            depth_index[(frame, fid)] = 9 + fi * n_feat + ni

    present = np.zeros(n_cols, dtype=bool)
    present[:9] = True
    mu_root = {trk.id: backproject(trk.obs[root], K) for trk in tracks}
    for trk in tracks:
        present[depth_index[(root, trk.id)]] = True

    pairs = [(pr, trk) for pr in order for trk in tracks
             if pr.frame_index in trk.obs]
    if not pairs:
        raise ValueError("no (frame, track) constraint produced any row")

    Xi = np.zeros((3 * len(pairs), n_cols))
    rhs = np.empty(3 * len(pairs))
    row_feature = np.empty(3 * len(pairs), dtype=np.int64)
    eye = np.eye(3)
    r = 0
    for pr, trk in pairs:
        t = pr.t_rel
        blk = slice(r, r + 3)
        Xi[blk, 0:3] = -0.5 * t * t * eye
        Xi[blk, 3:6] = -t * eye
        Xi[blk, 6:9] = BA_SIGN * pr.Gamma
        Xi[blk, depth_index[(root, trk.id)]] = mu_root[trk.id]
        mu_j = pr.R_ij @ backproject(trk.obs[pr.frame_index], K)
        Xi[blk, depth_index[(pr.frame_index, trk.id)]] = -mu_j
        present[depth_index[(pr.frame_index, trk.id)]] = True
        rhs[blk] = pr.s
        row_feature[blk] = trk.id
        r += 3
    return LinearSystem(Xi=Xi, s_stack=rhs,
                        depth_index=depth_index, present=present,
                        frame_indices=frame_indices, feature_ids=feature_ids,
                        row_feature=row_feature)


def _unpack(sys: LinearSystem, x_full):
    depths = {key: float(x_full[col]) for key, col in sys.depth_index.items()
              if sys.present[col]}
    return InitState(g=x_full[0:3].copy(), v=x_full[3:6].copy(),
                     ba=x_full[6:9].copy(), depths=depths)


def solve_states(sys: LinearSystem) -> InitState:
    """Least-squares solve by SVD pseudoinverse over the present columns.

    Raises RankDeficient when the present-column rank falls short of the
    present-column count (cutoff 1e-10 of the largest singular value);
    this is the failure mode the observability gate exists to prevent.
    """
    cols = np.flatnonzero(sys.present)
    A = sys.Xi[:, cols]
    if A.shape[0] < len(cols):
        raise RankDeficient(len(cols) - A.shape[0],
                            f"{A.shape[0]} rows for {len(cols)} unknowns")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    keep = S > SVD_CUTOFF * S[0]
    rank = int(keep.sum())
    if rank < len(cols):
        raise RankDeficient(len(cols) - rank)
    x = Vt.T @ ((U.T @ sys.s_stack) / S)
    x_full = np.zeros(sys.Xi.shape[1])
    x_full[cols] = x
    return _unpack(sys, x_full)


def solve_states_homogeneous(sys: LinearSystem) -> InitState:
    """Alternative solve via the null space of the augmented system.

    Takes the right-singular vector of the smallest singular value of
    [Xi | -s] and de-homogenizes by the last component. Agrees with
    solve_states on consistent systems; kept selectable for comparison.
    """
    cols = np.flatnonzero(sys.present)
    A = np.hstack([sys.Xi[:, cols], -sys.s_stack[:, None]])
    _, S, Vt = np.linalg.svd(A, full_matrices=False)
    null = Vt[-1]
    if abs(null[-1]) < 1e-12:
        raise RankDeficient(1, "homogeneous solution has zero scale component")
    x = null[:-1] / null[-1]
    # rank check mirrors solve_states: the data part must be full rank
    S_data = np.linalg.svd(sys.Xi[:, cols], compute_uv=False)
    rank = int((S_data > SVD_CUTOFF * S_data[0]).sum())
    if rank < len(cols):
        raise RankDeficient(len(cols) - rank)
    x_full = np.zeros(sys.Xi.shape[1])
    x_full[cols] = x
    return _unpack(sys, x_full)
