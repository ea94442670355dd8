"""Pinhole camera model: backprojection, projection, rotation-only prediction.

Bearings are unit vectors, so a feature's depth unknown is its metric
distance along the ray (not the z coordinate).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera

# Depth along the optical axis at or below this counts as behind the camera.
MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics, pixels."""
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")

    def K(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])


@dataclass
class FeatureTrack:
    """Pixel observations of one landmark, keyed by frame index."""
    id: int
    obs: dict[int, np.ndarray] = field(default_factory=dict)

    def frames(self):
        return sorted(self.obs)


def backproject(z, K: Intrinsics):
    """Unit-norm bearing of pixel z in the camera frame."""
    d = np.array([(z[0] - K.cx) / K.fx, (z[1] - K.cy) / K.fy, 1.0])
    return d / np.linalg.norm(d)


def project(p, K: Intrinsics):
    """Pixel of camera-frame point p; raises BehindCamera for z <= 1e-9."""
    if p[2] <= MIN_DEPTH:
        raise BehindCamera(f"depth {p[2]:.3e} along optical axis")
    return np.array([K.fx * p[0] / p[2] + K.cx, K.fy * p[1] / p[2] + K.cy])


def predict_rotation_only(z_i, K: Intrinsics, R_ij):
    """Pixel in frame j that z_i maps to if the camera only rotated by R_ij.

    R_ij rotates frame-j coordinates into frame i, so a frame-i ray moves to
    frame j through the transpose. Raises BehindCamera when the rotated ray
    leaves the front half-space.
    """
    ray_i = np.array([(z_i[0] - K.cx) / K.fx, (z_i[1] - K.cy) / K.fy, 1.0])
    ray_j = R_ij.T @ ray_i
    return project(ray_j, K)
