"""Exception types shared across the package."""


class MorphalError(Exception):
    """Base class for all package errors."""


class ShapeError(MorphalError, ValueError):
    """Array dimensions do not match the operation's contract."""


class InputError(MorphalError, ValueError):
    """Invalid argument values (empty batches, out-of-range ids, ...)."""


class StateError(MorphalError, RuntimeError):
    """Operation called in a state that does not allow it."""


class ConfigError(MorphalError, ValueError):
    """Inconsistent configuration (schedule fractions, bad settings)."""


class DataFormatError(MorphalError, ValueError):
    """Malformed input file (PGM, CSV, checkpoint JSON)."""


class NumericError(MorphalError, ArithmeticError):
    """A public operation produced a non-finite value."""
