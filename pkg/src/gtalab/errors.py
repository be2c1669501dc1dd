"""Exception types raised across the package."""


class GtaLabError(Exception):
    """Base class for all errors raised by gtalab."""


class ShapeError(GtaLabError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(GtaLabError, ValueError):
    """A configuration, preset or hardware profile is invalid."""


class CacheOverflowError(GtaLabError, RuntimeError):
    """A write would exceed the preallocated KV-cache capacity."""


class OracleError(GtaLabError, ArithmeticError):
    """A reference computation produced a non-finite value."""
