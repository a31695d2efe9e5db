"""Messages carried by photon messengers.

A message is a six-component unit vector
``(cos psi_H, sin psi_H, cos psi_V, sin psi_V, cos xi, sin xi)``: the phases of
the horizontal and vertical polarization components and the polarization
angle. It maps one-to-one to a pair of complex (Jones) amplitudes
``(cos xi * e^{i psi_H}, sin xi * e^{i psi_V})``, which the passive optics and
the test oracles use.

Angles are only ever stored as cosine/sine pairs.
"""

import math
from dataclasses import dataclass, replace

from src.utils.errors import DegenerateMessageError, InvalidArgumentError

UNIT_TOLERANCE = 1e-12


@dataclass(frozen=True, slots=True)
class Message:
    """Six-component message of one messenger."""

    cos_psi_h: float
    sin_psi_h: float
    cos_psi_v: float
    sin_psi_v: float
    cos_xi: float
    sin_xi: float

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        """Return the six components in wire order."""
        return (
            self.cos_psi_h,
            self.sin_psi_h,
            self.cos_psi_v,
            self.sin_psi_v,
            self.cos_xi,
            self.sin_xi,
        )

    def is_valid(self, tol: float = UNIT_TOLERANCE) -> bool:
        """Check that all three component pairs are unit vectors within ``tol``."""
        return (
            abs(self.cos_psi_h**2 + self.sin_psi_h**2 - 1.0) <= tol
            and abs(self.cos_psi_v**2 + self.sin_psi_v**2 - 1.0) <= tol
            and abs(self.cos_xi**2 + self.sin_xi**2 - 1.0) <= tol
        )


@dataclass(frozen=True, slots=True)
class JonesPair:
    """Complex amplitudes of the H and V polarization components."""

    h: complex
    v: complex

    @property
    def norm_squared(self) -> float:
        return abs(self.h) ** 2 + abs(self.v) ** 2


@dataclass(frozen=True, slots=True)
class Messenger:
    """A message in flight: path label (set once, at the input PBS) and channel."""

    message: Message
    path_label: int | None = None
    channel: int = 0

    def with_label(self, label: int) -> "Messenger":
        """Return a copy carrying ``label``; a label can only be assigned once."""
        if self.path_label is not None:
            raise InvalidArgumentError(
                f"path label already set to {self.path_label}, refusing to overwrite"
            )
        if label not in (0, 1):
            raise InvalidArgumentError(f"path label must be 0 or 1, got {label}")
        return replace(self, path_label=label)

    def moved(self, channel: int, message: Message) -> "Messenger":
        """Return a copy on ``channel`` with ``message``; the label is carried over."""
        return Messenger(message=message, path_label=self.path_label, channel=channel)


def make_message(psi_h: float, psi_v: float, xi: float) -> Message:
    """
    Build a message from the two phases and the polarization angle.

    Args:
        psi_h: Phase of the H component (radians)
        psi_v: Phase of the V component (radians)
        xi: Polarization angle (radians)

    Returns:
        Message with the cosines/sines of the three angles

    Raises:
        InvalidArgumentError: If any angle is not finite
    """
    for name, value in (("psi_h", psi_h), ("psi_v", psi_v), ("xi", xi)):
        if not math.isfinite(value):
            raise InvalidArgumentError(f"{name} must be finite, got {value}")
    return Message(
        math.cos(psi_h),
        math.sin(psi_h),
        math.cos(psi_v),
        math.sin(psi_v),
        math.cos(xi),
        math.sin(xi),
    )


def to_jones(m: Message) -> JonesPair:
    """Complex amplitude view of a message."""
    return JonesPair(
        h=m.cos_xi * complex(m.cos_psi_h, m.sin_psi_h),
        v=m.sin_xi * complex(m.cos_psi_v, m.sin_psi_v),
    )


def from_jones(j: JonesPair) -> Message:
    """
    Encode a Jones pair as a message.

    The pair is normalized first. A component with zero amplitude gets the
    phase pair (1, 0): its phase is unobservable, and a fixed convention
    keeps runs deterministic.

    Args:
        j: Jones pair with nonzero total amplitude

    Returns:
        Message whose polarization pair is (|h|, |v|) / norm

    Raises:
        DegenerateMessageError: If both amplitudes are zero
    """
    return encode_amplitudes(j.h, j.v)


def encode_amplitudes(h: complex, v: complex) -> Message:
    """Same as :func:`from_jones` on raw amplitudes (hot path, no wrapper object)."""
    abs_h = abs(h)
    abs_v = abs(v)
    norm = math.hypot(abs_h, abs_v)
    if norm == 0.0:
        raise DegenerateMessageError("both polarization amplitudes are zero")

    if abs_h == 0.0:
        cos_h, sin_h = 1.0, 0.0
    else:
        cos_h, sin_h = h.real / abs_h, h.imag / abs_h
    if abs_v == 0.0:
        cos_v, sin_v = 1.0, 0.0
    else:
        cos_v, sin_v = v.real / abs_v, v.imag / abs_v

    return Message(cos_h, sin_h, cos_v, sin_v, abs_h / norm, abs_v / norm)
