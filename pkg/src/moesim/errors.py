"""Exception types shared across the package."""


class MoESimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MoESimError, ValueError):
    """Invalid model, tier, cache, or experiment configuration."""


class ShapeError(MoESimError, ValueError):
    """Vector/matrix dimensions do not line up."""


class GateOverflowError(MoESimError, ArithmeticError):
    """Gate produced a non-finite logit or an underflowed routing weight."""


class RoutingError(MoESimError, ValueError):
    """Missing or inconsistent routing decision / trace wiring."""


class OomError(MoESimError):
    """A placement or transfer would exceed the fast tier's capacity."""


class WeightFileError(MoESimError, ValueError):
    """Weight file is malformed or inconsistent with its header."""


class InvariantError(MoESimError):
    """A cross-checked simulation property failed; message names it."""
