"""Event hooks called by the router at every unit boundary.

``on_enter`` fires when a messenger arrives at a unit (detectors included),
``on_exit`` after the unit has processed it, with the messenger already
moved to its output channel.
"""

from collections.abc import Iterable
from typing import TextIO

from src.models.message import Messenger


class RouteHooks:
    """No-op base class; subclasses override the waypoints they need."""

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        pass

    def on_exit(self, event: int, unit: str, messenger: Messenger) -> None:
        pass


class CompositeHooks(RouteHooks):
    """Fan a waypoint out to several hooks, in list order."""

    def __init__(self, hooks: Iterable[RouteHooks]) -> None:
        self.hooks = list(hooks)

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        for hook in self.hooks:
            hook.on_enter(event, unit, messenger)

    def on_exit(self, event: int, unit: str, messenger: Messenger) -> None:
        for hook in self.hooks:
            hook.on_exit(event, unit, messenger)


def format_trace_line(event: int, unit: str, messenger: Messenger) -> str:
    """``event=n unit=<name> ch=<k> msg=<6 floats>``"""
    msg = " ".join(f"{value:.17g}" for value in messenger.message.as_tuple())
    return f"event={event} unit={unit} ch={messenger.channel} msg={msg}"


def format_point_header(r: float, phi: float) -> str:
    """``# point r=<R> phi_rad=<Phi>``; event indices restart after it."""
    return f"# point r={float(r)!r} phi_rad={float(phi)!r}"


class TraceRecorder(RouteHooks):
    """
    Line-delimited trace of every unit a messenger enters.

    Lines go to ``stream`` when one is given, otherwise they are kept in
    :attr:`lines`. Each phase point opens with a ``# point`` header line.
    """

    def __init__(self, stream: TextIO | None = None) -> None:
        self.stream = stream
        self.lines: list[str] = []

    def _write(self, line: str) -> None:
        if self.stream is None:
            self.lines.append(line)
        else:
            self.stream.write(line + "\n")

    def begin_point(self, r: float, phi: float) -> None:
        self._write(format_point_header(r, phi))

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        self._write(format_trace_line(event, unit, messenger))


class ChannelProbe(RouteHooks):
    """Remembers the exit channel of one unit for the current event."""

    def __init__(self, unit: str) -> None:
        self.unit = unit
        self.last_channel: int | None = None

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        if unit == "source":
            self.last_channel = None

    def on_exit(self, event: int, unit: str, messenger: Messenger) -> None:
        if unit == self.unit:
            self.last_channel = messenger.channel


class OrderRecorder(RouteHooks):
    """Appends ``(event, unit)`` for every unit entered to a shared log."""

    def __init__(self, log: list[tuple[int, str]]) -> None:
        self.log = log

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        self.log.append((event, unit))
