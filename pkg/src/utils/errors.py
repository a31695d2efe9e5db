"""Exception types raised across the simulator.

Each error subclasses the builtin the rest of the code would otherwise
raise, so callers catching ``ValueError``/``RuntimeError`` keep working.
"""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class DegenerateMessageError(ValueError):
    """A Jones pair with zero total amplitude cannot be encoded as a message."""


class DegenerateStateError(RuntimeError):
    """A DLM state produced zero amplitude on the selected output channel."""


class ConfigurationError(ValueError):
    """Invalid configuration value or file entry."""

    def __init__(self, key: str, message: str, line: int | None = None) -> None:
        self.key = key
        self.line = line
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{location}: {message}")


class TopologyError(RuntimeError):
    """The optical network is miswired or routing reached a dead end."""


class HookOrderError(RuntimeError):
    """The delayed-choice draw happened outside its allowed window."""


class InsufficientDataError(ValueError):
    """Not enough data for an estimator."""


class OutputError(OSError):
    """Writing a result file failed."""
