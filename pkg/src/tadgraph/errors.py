"""Exception types shared across the package.

The CLI maps these onto exit codes: data/format problems exit with 2,
numeric failures with 3.
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes or an invalid axis."""


class ConfigError(ValueError):
    """A configuration value violates a structural requirement."""


class ContractError(ValueError):
    """An argument violates an operation's contract."""


class DataError(ValueError):
    """Input data is inconsistent (e.g. annotation outside the video)."""


class FormatError(DataError):
    """A file does not match its declared on-disk format."""


class NumericError(RuntimeError):
    """A computation produced non-finite values."""
