"""Exception types shared across the package.

The CLI maps these onto exit codes, so anything user-facing should raise
one of these rather than a bare ValueError.
"""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class ShapeError(ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class DataError(ValueError):
    """Corpus ingestion failed (empty input, malformed file, bad vocab)."""


class NumericError(ArithmeticError):
    """A numeric invariant was violated (NaN/Inf where finite values are required)."""
