"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes, so keeping them in one
module avoids import cycles between the data and algorithm layers.
"""


class LtsegError(Exception):
    """Base class for all toolkit errors."""


class DataError(LtsegError):
    """Malformed manifests, rasters, or other input data."""


class UnreachableTargetError(LtsegError):
    """Requested Gini target cannot be met (too low, or above the (C-1)/C bound)."""


class UndefinedMetricError(LtsegError):
    """A metric has no defined value in the requested scope (e.g. empty split)."""
