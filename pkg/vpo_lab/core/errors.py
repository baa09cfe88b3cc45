"""Exception hierarchy shared by the vpo-lab core modules."""


class VpoLabError(Exception):
    """Base class for every error raised by vpo-lab."""


class ConfigError(VpoLabError, ValueError):
    """Invalid parameter, range or experiment configuration."""


class ShapeError(VpoLabError, ValueError):
    """Array or trajectory dimensions do not match."""


class StateError(VpoLabError, RuntimeError):
    """Operation called in the wrong state (e.g. backward before forward)."""


class FormatError(VpoLabError, ValueError):
    """A checkpoint or record file could not be parsed."""


class NumericGuardError(VpoLabError, ArithmeticError):
    """A guarded quantity fell below its safe threshold."""


class NonFiniteError(VpoLabError, ArithmeticError):
    """A NaN or infinity reached a place where training must abort."""


class NonFiniteGradientError(NonFiniteError):
    """The optimizer received a non-finite gradient entry."""


class NonFiniteLossError(NonFiniteError):
    """A loss evaluated to NaN or infinity."""


class DivergenceError(NonFiniteError):
    """Pretraining loss stopped being finite."""


class DegeneratePolicyError(VpoLabError, RuntimeError):
    """The policy produced no informative preference pair for a whole window."""
