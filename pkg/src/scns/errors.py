"""Exception types shared across the package."""


class ScnsError(Exception):
    """Base class for package-specific errors."""


class InvalidDimension(ScnsError):
    """Grid dimension outside {2, 3}."""


class InvalidResolution(ScnsError):
    """Fewer than 4 cells along some axis, or a non-positive extent."""


class IncompatibleBoundaryConditions(ScnsError):
    """Boundary tags that cannot coexist on one grid or variable."""


class InvalidExponent(ScnsError):
    """Lebesgue exponent below 1."""


class BoundaryMismatch(ScnsError):
    """Operator invoked with a boundary tag the grid does not support."""


class SolverDivergence(ScnsError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class KernelTooNarrow(ScnsError):
    """Mollifier radius below the grid spacing (reported, never raised in
    the default fallback-to-identity path)."""


class NegativeDensity(ScnsError):
    """Cell density below the -1e-14 tolerance band."""


class SingularKinetics(ScnsError):
    """theta = f/chi evaluated at or below zero."""


class ModeCountMismatch(ScnsError):
    """Wiener increment vector length differs from the configured mode count."""


class MarkOutOfRegion(ScnsError):
    """Jump mark norm on the wrong side of the small/large split."""


class CflViolation(ScnsError):
    """Advective CFL bound violated; the step was rejected."""


class ConfigInvalid(ScnsError):
    """Configuration rejected after parsing."""


class ParseError(ScnsError):
    """Malformed config text."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AssumptionViolation(ScnsError):
    """A validated standing assumption failed; carries its tag, e.g. "(A1)"."""

    def __init__(self, tag, message):
        super().__init__(f"{tag}: {message}")
        self.tag = tag


class MissingNoiseRecord(ScnsError):
    """Weak-form residual requested on a window without stored noise draws."""


class WindowTooShort(ScnsError):
    """Trajectory window with fewer than two snapshots."""


class PeriodicDomain(ScnsError):
    """Boundary diagnostic requested on a grid with no boundary."""


class MissingIncrements(ScnsError):
    """Energy audit requested on records lacking martingale increments."""


class InsufficientPaths(ScnsError):
    """Ensemble statistic requested with too few paths."""


class PathFailure(ScnsError):
    """A Monte Carlo path aborted; carries the path index and cause."""

    def __init__(self, path_index, cause):
        super().__init__(f"path {path_index}: {cause!r}")
        self.path_index = path_index
        self.cause = cause


class ChecksumMismatch(ScnsError):
    """Snapshot payload does not match its sidecar checksum."""


class SchemaMismatch(ScnsError):
    """Serialized record or snapshot with unexpected fields or shape."""
