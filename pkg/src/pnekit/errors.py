"""Exception hierarchy shared by all pnekit modules."""


class PnekitError(Exception):
    """Base class for every error raised by pnekit."""


class ConfigError(PnekitError):
    """Malformed data-set, chart, surface or run description."""


class DegenerateMetricError(PnekitError):
    """Metric determinant fell below the degeneracy floor."""


class OutOfChartError(PnekitError):
    """A surface point left the chart it is sampled on."""


class DegenerateSurfaceError(PnekitError):
    """The tangent plane of a surface collapsed."""


class InvalidShellError(PnekitError):
    """Barrier surfaces intersect or are wrongly ordered."""


class UnsupportedTopologyError(PnekitError):
    """Operation needs a closed surface grid."""


class DomainError(PnekitError):
    """Argument outside the domain of a formula (e.g. nonpositive conformal factor)."""


class NonconvergenceError(PnekitError):
    """Iterative solver failed; ``iterate`` holds the best state reached."""

    def __init__(self, message, iterate=None, history=None):
        super().__init__(message)
        self.iterate = iterate
        self.history = list(history or [])


class KreinRutmanViolation(PnekitError):
    """Principal eigenfunction changed sign; signals a discretization defect."""
