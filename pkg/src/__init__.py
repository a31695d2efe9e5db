"""Event-by-event simulator of the delayed-choice Mach-Zehnder experiment."""

__version__ = "0.1.0"
