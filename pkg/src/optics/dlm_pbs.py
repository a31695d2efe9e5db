"""Event-by-event polarizing beam splitter built on a deterministic learning machine.

The unit has two input and two output channels (k = 0, 1) and three stages:

* input stage: the arriving message is copied into the registers of its
  channel and the internal vector is updated with
  ``x_i <- alpha * x_i + (1 - alpha) * delta_{i,k}``;
* transformation stage: registers and internal vector are combined into
  four complex amplitudes and multiplied by the PBS matrix
  ``[[1,0,0,0],[0,0,0,i],[0,0,1,0],[0,i,0,0]]``;
* output stage: channel 0 is selected when ``u^2 > r`` for a uniform ``r``,
  where ``u^2`` is the channel-0 share of the output amplitudes, and the
  message is the normalized channel-0 (or channel-1) amplitude pair.

Only the last message per channel is remembered. A Wollaston prism is the
same unit fed through channel 0 only.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from src.models.message import Message, encode_amplitudes
from src.utils.errors import DegenerateStateError, InvalidArgumentError
from src.utils.rng import RngStream

Pair = tuple[float, float]


@dataclass(slots=True)
class DlmPbsState:
    """Registers, internal vector and learning parameter of one DLM-based PBS."""

    y_h: list[Pair]
    y_v: list[Pair]
    y_p: list[Pair]
    x: list[float]
    alpha: float
    events: list[int] = field(default_factory=lambda: [0, 0])

    def snapshot(self) -> dict[str, Any]:
        """Plain-data copy for traces and debug logs."""
        return {
            "x": tuple(self.x),
            "y_h": tuple(self.y_h),
            "y_v": tuple(self.y_v),
            "y_p": tuple(self.y_p),
            "alpha": self.alpha,
            "events": tuple(self.events),
        }


@dataclass(frozen=True, slots=True)
class AmplitudeQuad:
    """Amplitudes (b0_H, b0_V, b1_H, b1_V) of the two output channels."""

    b0_h: complex
    b0_v: complex
    b1_h: complex
    b1_v: complex

    @property
    def channel0_weight(self) -> float:
        """u^2: squared norm of the channel-0 amplitudes."""
        return abs(self.b0_h) ** 2 + abs(self.b0_v) ** 2

    @property
    def channel1_weight(self) -> float:
        """v^2: squared norm of the channel-1 amplitudes."""
        return abs(self.b1_h) ** 2 + abs(self.b1_v) ** 2


def _random_pair(rng: RngStream) -> Pair:
    angle = rng.angle()
    return (math.cos(angle), math.sin(angle))


def init_state(alpha: float, rng: RngStream) -> DlmPbsState:
    """
    Create a DLM state with random registers and ``x = (r, 1 - r)``.

    Args:
        alpha: Learning parameter, 0 < alpha < 1
        rng: Stream used for the initial draws

    Returns:
        Freshly initialized state

    Raises:
        InvalidArgumentError: If alpha is outside (0, 1)
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must be in (0, 1), got {alpha}")
    r = rng.uniform()
    y_h = [_random_pair(rng), _random_pair(rng)]
    y_v = [_random_pair(rng), _random_pair(rng)]
    y_p = [_random_pair(rng), _random_pair(rng)]
    return DlmPbsState(y_h=y_h, y_v=y_v, y_p=y_p, x=[r, 1.0 - r], alpha=alpha)


def update_internal(state: DlmPbsState, k: int) -> DlmPbsState:
    """Apply the learning rule for an event on channel ``k`` (in place)."""
    alpha = state.alpha
    x0 = alpha * state.x[0] + (1.0 - alpha) * (1.0 if k == 0 else 0.0)
    # x1 follows from the sum rule so x0 + x1 = 1 holds to rounding
    state.x[0] = x0
    state.x[1] = 1.0 - x0
    state.events[k] += 1
    return state


def store_registers(state: DlmPbsState, k: int, m: Message) -> DlmPbsState:
    """Overwrite the channel-``k`` registers with ``m`` (in place)."""
    state.y_h[k] = (m.cos_psi_h, m.sin_psi_h)
    state.y_v[k] = (m.cos_psi_v, m.sin_psi_v)
    state.y_p[k] = (m.cos_xi, m.sin_xi)
    return state


def input_amplitudes(state: DlmPbsState) -> tuple[complex, complex, complex, complex]:
    """Input amplitudes (a0_H, a0_V, a1_H, a1_V) built from registers and x."""
    (ch0, sh0), (ch1, sh1) = state.y_h
    (cv0, sv0), (cv1, sv1) = state.y_v
    (cp0, sp0), (cp1, sp1) = state.y_p
    root0 = math.sqrt(state.x[0])
    root1 = math.sqrt(state.x[1])
    return (
        complex(ch0, sh0) * (cp0 * root0),
        complex(cv0, sv0) * (sp0 * root0),
        complex(ch1, sh1) * (cp1 * root1),
        complex(cv1, sv1) * (sp1 * root1),
    )


def transform(state: DlmPbsState) -> AmplitudeQuad:
    """Transformation stage: PBS matrix applied to the input amplitudes."""
    a0_h, a0_v, a1_h, a1_v = input_amplitudes(state)
    return AmplitudeQuad(b0_h=a0_h, b0_v=1j * a1_v, b1_h=a1_h, b1_v=1j * a0_v)


def emit(state: DlmPbsState, rng: RngStream) -> tuple[int, Message]:
    """
    Output stage: pick the output channel and build its message.

    One uniform ``r`` is drawn per call. Channel 0 is chosen when
    ``u^2 > r``. The outgoing message is the chosen channel's amplitude
    pair divided by its norm; a zero H (or V) amplitude gets the phase pair
    (1, 0).

    Args:
        state: DLM state after the input stage
        rng: Output-selection stream

    Returns:
        Tuple of (output channel, outgoing message)

    Raises:
        DegenerateStateError: If the selected channel carries no amplitude
    """
    quad = transform(state)
    u2 = quad.channel0_weight
    v2 = quad.channel1_weight
    if u2 == 0.0 and v2 == 0.0:
        raise DegenerateStateError(f"zero amplitude on both output channels: {state.snapshot()}")

    r = rng.uniform()
    if u2 > r:
        return 0, encode_amplitudes(quad.b0_h, quad.b0_v)
    if v2 == 0.0:
        raise DegenerateStateError(f"channel 1 selected with zero amplitude (u^2={u2}, r={r})")
    return 1, encode_amplitudes(quad.b1_h, quad.b1_v)


def process(state: DlmPbsState, k: int, m: Message, rng: RngStream) -> tuple[int, Message]:
    """Full pipeline for one arriving messenger: store, learn, emit."""
    if k not in (0, 1):
        raise InvalidArgumentError(f"input channel must be 0 or 1, got {k}")
    store_registers(state, k, m)
    update_internal(state, k)
    return emit(state, rng)


def closed_form_internal(x0: Pair, events: Sequence[int], alpha: float) -> Pair:
    """
    Internal vector after ``events`` from the unrolled learning rule.

    ``x_n = alpha^n x_0 + (1 - alpha) * sum_{j=1..n} alpha^(n-j) v_j`` with
    events numbered from 1 and ``v_j`` the unit vector of channel ``events[j-1]``.
    """
    n = len(events)
    decay = alpha**n
    acc0 = 0.0
    acc1 = 0.0
    for j, k in enumerate(events, start=1):
        weight = alpha ** (n - j)
        if k == 0:
            acc0 += weight
        else:
            acc1 += weight
    return (decay * x0[0] + (1.0 - alpha) * acc0, decay * x0[1] + (1.0 - alpha) * acc1)


class DlmBeamSplitter:
    """Network unit wrapping one DLM state and its output-selection stream."""

    def __init__(
        self,
        name: str,
        alpha: float,
        init_rng: RngStream,
        emit_rng: RngStream,
        n_inputs: int = 2,
    ) -> None:
        self.name = name
        self.n_inputs = n_inputs
        self.state = init_state(alpha, init_rng)
        self._emit_rng = emit_rng

    def process(self, channel: int, message: Message) -> tuple[int, Message]:
        if channel >= self.n_inputs:
            raise InvalidArgumentError(
                f"{self.name} has {self.n_inputs} input channel(s), got message on {channel}"
            )
        return process(self.state, channel, message, self._emit_rng)
