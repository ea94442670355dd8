"""Closed-form visual-inertial state initialization.

Recovers gravity, velocity, accelerometer bias and per-feature depths from
short monocular feature tracks plus raw IMU, after a closed-form gyro bias
solve, gated by a two-stage observability test.
"""

__version__ = "0.1.0"
