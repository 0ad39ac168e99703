"""Exception hierarchy shared by all fbslab modules.

The CLI maps ConfigurationError (and subclasses) to exit status 2 and
NumericError to exit status 3.
"""


class FbsLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FbsLabError):
    """Invalid parameters, specs or preconditions detected before computing."""


class DegenerateModelError(ConfigurationError):
    """Model has zero long-run variance; distributional checks are undefined."""


class DegenerateWeightsError(ConfigurationError):
    """Weight table with zero norm; regularity statistics are undefined."""


class UnsupportedLinkError(ConfigurationError):
    """Operation requires the linear link (no closed form for nonlinear links)."""


class DimensionMismatchError(ConfigurationError):
    """Field region does not match the support required by a convolution."""


class NumericError(FbsLabError):
    """Numerical failure (e.g. covariance factorization) after recovery policy."""
