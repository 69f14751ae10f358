"""Exception types shared across the package."""


class FunnelhatError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(FunnelhatError, ValueError):
    """Operands have incompatible shapes."""


class ConfigError(FunnelhatError, ValueError):
    """A configuration value is out of range or inconsistent."""


class NumericError(FunnelhatError, ArithmeticError):
    """An operation produced NaN or Inf."""


class FitError(FunnelhatError, ValueError):
    """A regression problem is degenerate (too few points or constant x)."""


class TrainingDivergedError(FunnelhatError, RuntimeError):
    """Training produced a non-finite loss."""
