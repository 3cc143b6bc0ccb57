"""Exception types shared across the package."""


class BanditError(Exception):
    """Base class for all package errors."""


class ConfigError(BanditError, ValueError):
    pass


class InvalidHistoryError(BanditError, ValueError):
    def __init__(self, arm, message):
        super().__init__(f"arm {arm}: {message}")
        self.arm = arm


class NumericError(BanditError, ArithmeticError):
    pass


class CapacityError(BanditError, MemoryError):
    def __init__(self, required_bytes, cap_bytes, what="table"):
        super().__init__(
            f"{what} needs ~{required_bytes / 2**20:.1f} MiB, cap is {cap_bytes / 2**20:.1f} MiB"
        )
        self.required_bytes = required_bytes
        self.cap_bytes = cap_bytes


class UnsupportedFamilyError(BanditError, ValueError):
    pass


class UnsupportedDimensionError(BanditError, ValueError):
    pass


class DivergentScalingError(BanditError, ValueError):
    """A hyperparameter sequence has no finite limit under the chosen scaling.

    For Bernoulli rewards only f(n) ~ n gives a finite drift; f(n) = n^b with
    b < 1 makes the drift blow up and b > 1 sends it to zero.
    """


class StabilityError(BanditError, ValueError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class RangeError(BanditError, IndexError):
    pass


class RequiresInitializationError(BanditError, ValueError):
    """Index policy consulted before every arm was pulled once."""


class PolicyError(BanditError):
    def __init__(self, round_index, cause):
        super().__init__(f"round {round_index}: {cause}")
        self.round_index = round_index
        self.cause = cause
