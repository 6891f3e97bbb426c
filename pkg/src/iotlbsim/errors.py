"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimError):
    """A configuration value violates a structural constraint."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ConfigSyntaxError(SimError):
    """The configuration text itself cannot be parsed."""


class UnknownKeyError(SimError):
    """The configuration names a section or key that does not exist."""


class UnknownDevice(SimError):
    """An access was issued by a device that is not registered."""


class CalibrationError(SimError):
    """The latency model is not separable enough to place a threshold."""


class ProgramTooLong(SimError):
    """A monitor program exceeds the instruction limit."""


class MissingOperand(SimError):
    """A monitor instruction references an operand that was not configured."""


class ChannelSetupError(SimError):
    """A covert channel was started without the required setup."""


class LengthMismatch(SimError):
    """Sent and decoded bit sequences differ in length."""


class EmptyInput(SimError):
    """An operation requiring at least one element received none."""
