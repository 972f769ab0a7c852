"""Exception hierarchy shared by the whole package.

The CLI maps these onto exit codes, so every failure a user can trigger
should be raised as one of them rather than a bare ValueError.
"""


class OmsBenchError(Exception):
    """Base class for all errors raised by oms_bench."""


class FormatError(OmsBenchError):
    """Malformed OMSB container bytes (bad magic, truncation, non-finite payload...)."""


class SchemaError(OmsBenchError):
    """Container parsed fine but an expected entry or metadata field is missing/wrong."""


class ValidationError(OmsBenchError):
    """A scenario bundle violates one of its invariants."""


class FitError(OmsBenchError):
    """A monitor could not be fitted (empty class, singular covariance...)."""


class UsageError(OmsBenchError):
    """An operation was called with arguments it cannot accept."""


class ConfigError(OmsBenchError):
    """A benchmark or generator config file is invalid."""
