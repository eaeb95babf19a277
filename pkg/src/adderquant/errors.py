"""Exception hierarchy shared by every module."""


class AdderQuantError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AdderQuantError, ValueError):
    """Invalid configuration value (bit-width, group count, alpha, ...)."""


class ShapeError(AdderQuantError, ValueError):
    """Tensor shapes or layouts are incompatible."""


class CalibrationError(AdderQuantError, ValueError):
    """Calibration could not produce an activation range."""


class ContainerError(AdderQuantError, ValueError):
    """A model container could not be parsed or failed validation."""


class TruncatedContainerError(ContainerError):
    pass


class FormatVersionError(ContainerError):
    pass


class UnknownLayerKindError(ContainerError):
    pass


class InvariantViolation(ContainerError):
    """Loaded data is well-formed but breaks a declared invariant."""
