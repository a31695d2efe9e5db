"""Stateless optical components: half-wave plate, EOM and phase shifter.

These units have no input stage. Each acts on the message of the arriving
messenger and leaves the channel unchanged.
"""

import math
from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.models.message import Message, encode_amplitudes
from src.utils.errors import InvalidArgumentError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

_MINUS_I = complex(0.0, -1.0)

# Parameters of the variable beam splitter quoted for the voltage axis
DEFAULT_BETA_DEG = 24.0
DEFAULT_V_PI = 217.0


class EomSetting(BaseModel):
    """Effective reflectivity of the output beam splitter and the EOM switch."""

    model_config = ConfigDict(frozen=True)

    reflectivity: float = Field(..., ge=0.0, le=0.5, description="Effective reflectivity R")
    voltage_on: bool = Field(..., description="Whether a voltage is applied to the EOM")


class PhaseSetting(BaseModel):
    """Phase shift Phi = Phi_1 - Phi_0 between the interferometer arms."""

    model_config = ConfigDict(frozen=True)

    phi: float = Field(..., description="Phase shift (radians)")

    @field_validator("phi")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Reject NaN and infinities."""
        if not math.isfinite(v):
            raise ValueError("phi must be finite")
        return v


def _amplitudes(m: Message) -> tuple[complex, complex]:
    return (
        m.cos_xi * complex(m.cos_psi_h, m.sin_psi_h),
        m.sin_xi * complex(m.cos_psi_v, m.sin_psi_v),
    )


def apply_hwp(m: Message, theta_fast: float) -> Message:
    """
    Half-wave plate with its fast axis at ``theta_fast``.

    Jones matrix ``e^{-i pi/2} [[cos 2t, sin 2t], [sin 2t, -cos 2t]]``; at
    45 degrees H and V are interchanged.
    """
    h, v = _amplitudes(m)
    c = math.cos(2.0 * theta_fast)
    s = math.sin(2.0 * theta_fast)
    return encode_amplitudes(_MINUS_I * (c * h + s * v), _MINUS_I * (s * h - c * v))


def eom_rotation_angle(reflectivity: float) -> float:
    """Polarization rotation of the EOM for reflectivity R: arcsin(sqrt(R))."""
    return math.asin(math.sqrt(reflectivity))


def apply_eom(m: Message, s: EomSetting) -> Message:
    """
    Electro-optic modulator acting as a variable wave plate.

    Without voltage the message passes unchanged (same object). With voltage
    the polarization is rotated by ``arcsin(sqrt(R))``.
    """
    if not s.voltage_on:
        return m
    return rotate_polarization(m, eom_rotation_angle(s.reflectivity))


def rotate_polarization(m: Message, theta: float) -> Message:
    """Rotate the polarization plane by ``theta``."""
    h, v = _amplitudes(m)
    c = math.cos(theta)
    s = math.sin(theta)
    return encode_amplitudes(h * c - v * s, h * s + v * c)


def apply_phase_shift(m: Message, p: PhaseSetting) -> Message:
    """Advance both phases by Phi; the polarization pair is untouched."""
    return shift_phases(m, p.phi)


def shift_phases(m: Message, phi: float) -> Message:
    """Plane rotation of both phase pairs by ``phi``."""
    c = math.cos(phi)
    s = math.sin(phi)
    return Message(
        m.cos_psi_h * c - m.sin_psi_h * s,
        m.sin_psi_h * c + m.cos_psi_h * s,
        m.cos_psi_v * c - m.sin_psi_v * s,
        m.sin_psi_v * c + m.cos_psi_v * s,
        m.cos_xi,
        m.sin_xi,
    )


def _check_voltage_law(beta: float, v_pi: float) -> None:
    if not 0.0 < beta < math.pi / 4:
        raise InvalidArgumentError(f"beta must be in (0, pi/4), got {beta}")
    if v_pi <= 0.0:
        raise InvalidArgumentError(f"v_pi must be positive, got {v_pi}")


def reflectivity_from_voltage(
    v_eom: float,
    beta: float = math.radians(DEFAULT_BETA_DEG),
    v_pi: float = DEFAULT_V_PI,
    clamp: bool = True,
) -> float:
    """
    Effective reflectivity for an EOM voltage.

    ``R = sin^2(2 beta) * sin^2(pi * v_eom / (2 * v_pi))``, clamped to
    [0, 0.5] for simulation use.

    Args:
        v_eom: Applied voltage (V), >= 0
        beta: Wave plate angle (radians), in (0, pi/4)
        v_pi: Half-wave voltage (V), > 0
        clamp: Clamp the result to [0, 0.5]

    Returns:
        Reflectivity R
    """
    if v_eom < 0.0:
        raise InvalidArgumentError(f"v_eom must be >= 0, got {v_eom}")
    _check_voltage_law(beta, v_pi)
    r = math.sin(2.0 * beta) ** 2 * math.sin(math.pi * v_eom / (2.0 * v_pi)) ** 2
    if clamp and r > 0.5:
        logger.warning(f"R={r:.4f} at {v_eom} V clamped to 0.5")
        return 0.5
    return r


def voltage_for_reflectivity(
    reflectivity: float,
    beta: float = math.radians(DEFAULT_BETA_DEG),
    v_pi: float = DEFAULT_V_PI,
) -> float:
    """Smallest voltage giving ``reflectivity`` under :func:`reflectivity_from_voltage`."""
    if not 0.0 <= reflectivity <= 0.5:
        raise InvalidArgumentError(f"reflectivity must be in [0, 0.5], got {reflectivity}")
    _check_voltage_law(beta, v_pi)
    ratio = reflectivity / math.sin(2.0 * beta) ** 2
    if ratio > 1.0:
        raise InvalidArgumentError(
            f"R={reflectivity} is unreachable with beta={math.degrees(beta):.1f} deg"
        )
    return 2.0 * v_pi / math.pi * math.asin(math.sqrt(ratio))


def voltage_grid(
    n: int,
    beta: float = math.radians(DEFAULT_BETA_DEG),
    v_pi: float = DEFAULT_V_PI,
) -> list[float]:
    """``n`` equally spaced voltages from 0 up to the voltage where R reaches 0.5."""
    if n < 2:
        raise InvalidArgumentError(f"voltage grid needs at least 2 points, got {n}")
    v_max = voltage_for_reflectivity(0.5, beta, v_pi)
    return [v_max * i / (n - 1) for i in range(n)]


@dataclass(slots=True)
class HalfWavePlate:
    """Network unit: half-wave plate at a fixed fast-axis angle."""

    name: str
    theta_fast: float

    def process(self, channel: int, message: Message) -> tuple[int, Message]:
        return channel, apply_hwp(message, self.theta_fast)


@dataclass(slots=True)
class ElectroOpticModulator:
    """Network unit: EOM whose switch may change between events."""

    name: str
    reflectivity: float
    voltage_on: bool = False
    _theta: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.reflectivity <= 0.5:
            raise InvalidArgumentError(f"R must be in [0, 0.5], got {self.reflectivity}")
        self._theta = eom_rotation_angle(self.reflectivity)

    @property
    def setting(self) -> EomSetting:
        return EomSetting(reflectivity=self.reflectivity, voltage_on=self.voltage_on)

    def process(self, channel: int, message: Message) -> tuple[int, Message]:
        if not self.voltage_on:
            return channel, message
        return channel, rotate_polarization(message, self._theta)


@dataclass(slots=True)
class PhaseShifter:
    """Network unit: phase shifter on one arm."""

    name: str
    phi: float

    def process(self, channel: int, message: Message) -> tuple[int, Message]:
        return channel, shift_phases(message, self.phi)
