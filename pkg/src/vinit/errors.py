"""Exception types raised by the initialization library.

Everything derives from InitError so callers can catch the whole family.
Errors that carry context (line numbers, rank deficiency) expose it as
attributes rather than only in the message.
"""


class InitError(Exception):
    """Base class for all library errors."""


class AngleNearPi(InitError):
    """Rotation angle too close to pi for a stable logarithm."""


class WindowEmpty(InitError):
    """An IMU window with no samples was passed where data is required."""


class NoConvergence(InitError):
    """Iterative solver exhausted its iteration budget without converging."""


class BehindCamera(InitError):
    """Point has non-positive depth along the optical axis."""


class TrackTooShort(InitError):
    """Feature track has fewer than two observations."""


class NoCommonRoot(InitError):
    """A track lacks an observation in the root (first) frame."""


class RankDeficient(InitError):
    """Linear system rank is below the number of unknowns.

    Attributes:
        deficiency: number of missing rank units.
    """

    def __init__(self, deficiency: int, msg: str | None = None):
        self.deficiency = deficiency
        super().__init__(msg or f"linear system rank deficient by {deficiency}")


class NoValidFeatures(InitError):
    """No feature survived prediction/visibility filtering."""


class ConfigInvalid(InitError):
    """Scenario or pipeline configuration is inconsistent."""


class ParseError(InitError):
    """A data file row could not be parsed.

    Attributes:
        line: 1-based line number of the offending row.
    """

    def __init__(self, line: int, msg: str | None = None):
        self.line = line
        super().__init__(msg or f"parse error at line {line}")


class NonMonotonicTime(InitError):
    """Timestamps in a data file are not strictly increasing.

    Attributes:
        line: 1-based line number where monotonicity broke.
    """

    def __init__(self, line: int, msg: str | None = None):
        self.line = line
        super().__init__(msg or f"non-monotonic timestamp at line {line}")


class EmptyFile(InitError):
    """Data file contains no records."""


class SchemaError(InitError):
    """Structured input violates the expected schema."""


class NoNearbyTimestamp(InitError):
    """Ground-truth lookup found no record within the allowed gap."""


class ZeroVector(InitError):
    """A direction was requested from a (near-)zero vector."""


class NeverObservable(InitError):
    """The measurement stream ended before the observability gate passed.

    Attributes:
        trace: the per-frame observability trace accumulated before exhaustion.
    """

    def __init__(self, trace=None, msg: str | None = None):
        self.trace = trace
        super().__init__(msg or "stream exhausted before full observability")
