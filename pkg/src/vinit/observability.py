"""Two-stage initialization trigger.

Stage 1 (cheap, per frame): mean rotation-compensated parallax against the
root frame — a proxy for whether translation is observable at all.
Stage 2 (expensive, after stage 1 passes): spectrum of the 9x9 depth-
marginalized Hessian of the linear system. The singular-value ratio
rho = sigma_max / sigma_min is tracked frame to frame; when its relative
change settles below a threshold, the whole state is declared observable
and the solve is triggered.

The depth block H_ll of H = Xi^T W Xi decomposes per feature: a feature's
root-depth column meets only its own later-frame columns (arrowhead
blocks), and features never couple to each other. The Schur complement is
therefore accumulated feature by feature against small dense blocks
instead of forming the full depth-by-depth matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import predict_rotation_only
from .errors import BehindCamera, ConfigInvalid, NoValidFeatures

# Depth-block pseudoinverse drops eigenvalues below this times the largest
# diagonal entry of H_ll; the rho computation drops singular values below
# this times sigma_max.
SCHUR_PINV_CUTOFF = 1e-12
RHO_SV_CUTOFF = 1e-12


@dataclass
class ObsConfig:
    """Thresholds and weights for the two observability tests.

    parallax_th: pixels of mean rotation-compensated parallax required
        before the translation test passes (strict inequality).
    rho_change_th: relative change of the singular-value ratio below which
        the full test passes.
    sigma_weights: optional per-row noise variances (the diagonal of the
        residual covariance); rows are weighted by their inverse. None
        means identity.
    consecutive_passes: how many consecutive full-test passes the pipeline
        requires before triggering; 1 reproduces the plain test.
    """
    parallax_th: float = 2.0
    rho_change_th: float = 0.05
    sigma_weights: np.ndarray | None = None
    consecutive_passes: int = 1

    def __post_init__(self):
        if self.parallax_th <= 0.0:
            raise ConfigInvalid("parallax_th must be positive")
        if not (0.0 < self.rho_change_th < 1.0):
            raise ConfigInvalid("rho_change_th must lie in (0, 1)")
        if self.consecutive_passes < 1:
            raise ConfigInvalid("consecutive_passes must be >= 1")
        if self.sigma_weights is not None:
            w = np.asarray(self.sigma_weights, dtype=float)
            if w.ndim != 1 or np.any(w <= 0.0) or not np.all(np.isfinite(w)):
                raise ConfigInvalid("sigma_weights must be positive and finite")
            self.sigma_weights = w


@dataclass
class ObsTrace:
    """Per-frame record of both tests over one initialization attempt."""
    parallax: list = field(default_factory=list)   # (frame, mean px)
    rho: list = field(default_factory=list)        # (frame, rho, rel change or None)
    trigger_frame_stage1: int | None = None
    trigger_frame_stage2: int | None = None


def mean_parallax(tracks, frame_j, R_ij, K):
    """Mean pixel distance between observed and rotation-only-predicted z_j.

    Averages over features observed in both the root frame 0 and frame_j.
    Features whose rotated ray leaves the front of the camera are skipped.
    Raises NoValidFeatures if nothing remains.
    """
    dists = []
    skipped = 0
    for trk in tracks:
        if 0 not in trk.obs or frame_j not in trk.obs:
            continue
        try:
            z_pred = predict_rotation_only(trk.obs[0], K, R_ij)
        except BehindCamera:
            skipped += 1
            continue
        dists.append(np.linalg.norm(trk.obs[frame_j] - z_pred))
    if not dists:
        raise NoValidFeatures(
            f"no feature usable for parallax at frame {frame_j}"
            f" ({skipped} behind camera)")
    return float(np.mean(dists))


def translation_obs_test(parallax, cfg: ObsConfig):
    """Stage-1 gate: strictly more mean parallax than the threshold."""
    return parallax > cfg.parallax_th


def _row_weights(sys, cfg: ObsConfig):
    if cfg.sigma_weights is None:
        return np.ones(sys.Xi.shape[0])
    w = cfg.sigma_weights
    if w.shape[0] != sys.Xi.shape[0]:
        raise ConfigInvalid(
            f"sigma_weights has {w.shape[0]} entries for {sys.Xi.shape[0]} rows")
    return 1.0 / w


def reduced_hessian(sys, cfg: ObsConfig):
    """9x9 Schur complement of H = Xi^T W Xi onto the (g, v, ba) block.

    Depths are marginalized per feature. Rank-deficient depth blocks are
    handled by eigenvalue pseudoinverse with a cutoff relative to the
    largest diagonal entry of the full depth block, so degenerate features
    lower the spectrum instead of raising errors.
    """
    w = _row_weights(sys, cfg)
    theta = sys.Xi[:, :9]
    h_theta = theta.T @ (w[:, None] * theta)

    # group depth columns by feature id
    cols_of = {}
    for (frame, fid), col in sys.depth_index.items():
        if sys.present[col]:
            cols_of.setdefault(fid, []).append(col)

    blocks = []
    max_diag = 0.0
    for fid, cols in cols_of.items():
        cols = np.asarray(sorted(cols))
        if sys.row_feature is not None:
            rows = np.flatnonzero(sys.row_feature == fid)
            ln = sys.Xi[np.ix_(rows, cols)]
        else:
            ln = sys.Xi[:, cols]
            rows = np.flatnonzero(np.any(ln != 0.0, axis=1))
            ln = ln[rows]
        wr = w[rows]
        h_ll = ln.T @ (wr[:, None] * ln)
        h_tl = theta[rows].T @ (wr[:, None] * ln)
        blocks.append((h_ll, h_tl))
        if h_ll.shape[0]:
            max_diag = max(max_diag, float(np.max(np.diag(h_ll))))

    h_star = h_theta.copy()
    cut = SCHUR_PINV_CUTOFF * max_diag
    for h_ll, h_tl in blocks:
        vals, vecs = np.linalg.eigh(h_ll)
        keep = vals > cut
        if not np.any(keep):
            continue
        inv_vals = np.zeros_like(vals)
        inv_vals[keep] = 1.0 / vals[keep]
        h_ll_pinv = (vecs * inv_vals) @ vecs.T
        h_star -= h_tl @ h_ll_pinv @ h_tl.T
    return 0.5 * (h_star + h_star.T)


def spectral_ratio_test(h_star, prev_rho, cfg: ObsConfig):
    """Stage-2 decision on an already-reduced Hessian: (pass, rho).

    rho is sigma_max / sigma_min of h_star, sigma_min being the smallest
    singular value above RHO_SV_CUTOFF * sigma_max. The test passes only
    when a previous rho exists and the relative change |rho - prev| / prev
    is below cfg.rho_change_th.
    """
    svals = np.linalg.svd(h_star, compute_uv=False)
    sigma_max = svals[0]
    if sigma_max <= 0.0:
        return False, float("inf")
    nonzero = svals[svals > RHO_SV_CUTOFF * sigma_max]
    rho = float(sigma_max / nonzero[-1])
    ok = prev_rho is not None and abs(rho - prev_rho) / prev_rho < cfg.rho_change_th
    return ok, rho


def full_obs_test(sys, prev_rho, cfg: ObsConfig):
    """Stage-2 gate on a linear system: (pass, rho)."""
    return spectral_ratio_test(reduced_hessian(sys, cfg), prev_rho, cfg)
