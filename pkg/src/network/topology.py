"""Optical network of processing units and the one-messenger-at-a-time router.

Units are connected by wires from ``(unit, output port)`` to
``(unit, input port)``. The router pushes a single messenger from the
source until it reaches a detector (or a beam block); units never see
each other, they only receive a channel and a message.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from src.models.message import Message, Messenger, make_message
from src.models.schemas import ExperimentConfig
from src.network.hooks import RouteHooks
from src.optics.dlm_pbs import DlmBeamSplitter
from src.optics.passive import ElectroOpticModulator, HalfWavePlate, PhaseShifter
from src.utils.errors import InvalidArgumentError, TopologyError
from src.utils.logger import setup_logger
from src.utils.rng import RngFactory

logger = setup_logger(__name__)

# Units after the merge PBS; the delayed choice must be made before any of them
BS_OUTPUT_UNITS = ("pbs_merge", "hwp", "eom", "wollaston")

SOURCE_XI = math.pi / 4
_SOURCE_MESSAGE = make_message(0.0, 0.0, SOURCE_XI)

DETECTOR_INDEX = {"D0": 0, "D1": 1}

_NO_HOOKS = RouteHooks()


class UnitKind(str, Enum):
    """Kinds of network nodes."""

    SOURCE = "source"
    DLM_PBS = "dlm_pbs"
    HWP = "hwp"
    EOM = "eom"
    PHASE_SHIFT = "phase_shift"
    WOLLASTON = "wollaston"
    DETECTOR = "detector"
    BLOCK = "block"

    @property
    def n_outputs(self) -> int:
        if self in (UnitKind.DETECTOR, UnitKind.BLOCK):
            return 0
        if self in (UnitKind.DLM_PBS, UnitKind.WOLLASTON):
            return 2
        return 1


class Unit(Protocol):
    """Anything that maps (input channel, message) to (output channel, message)."""

    def process(self, channel: int, message: Message) -> tuple[int, Message]: ...


@dataclass
class DetectorTally:
    """Counts at one detector, split by path label."""

    n_total: int = 0
    n_by_path: list[int] = field(default_factory=lambda: [0, 0])

    def record(self, path_label: int) -> None:
        self.n_total += 1
        self.n_by_path[path_label] += 1


@dataclass
class UnitNode:
    """
    One node of the network.

    ``unit`` holds the processing object for optical kinds, ``tally`` the
    counter for detectors. ``assigns_label`` marks the unit whose exit
    channel becomes the messenger's path label.
    """

    name: str
    kind: UnitKind
    unit: Unit | None = None
    tally: DetectorTally | None = None
    assigns_label: bool = False


class OpticalNetwork:
    """Units plus wires; routes one messenger at a time."""

    def __init__(self) -> None:
        self.nodes: dict[str, UnitNode] = {}
        self.wires: dict[tuple[str, int], tuple[str, int]] = {}

    def add(self, node: UnitNode) -> UnitNode:
        if node.name in self.nodes:
            raise TopologyError(f"duplicate unit name {node.name!r}")
        if node.kind is UnitKind.DETECTOR and node.tally is None:
            node.tally = DetectorTally()
        self.nodes[node.name] = node
        return node

    def connect(self, src: str, out_port: int, dst: str, in_port: int = 0) -> None:
        """Wire ``src`` output ``out_port`` to ``dst`` input ``in_port``."""
        for name in (src, dst):
            if name not in self.nodes:
                raise TopologyError(f"unknown unit {name!r}")
        if not 0 <= out_port < self.nodes[src].kind.n_outputs:
            raise TopologyError(f"{src} has no output port {out_port}")
        if (src, out_port) in self.wires:
            raise TopologyError(f"{src} output {out_port} is already wired")
        self.wires[(src, out_port)] = (dst, in_port)

    def unit(self, name: str) -> Unit:
        node = self.nodes[name]
        if node.unit is None:
            raise TopologyError(f"{name} has no processing unit")
        return node.unit

    def kind_counts(self) -> Counter[UnitKind]:
        return Counter(node.kind for node in self.nodes.values())

    @property
    def detectors(self) -> dict[str, DetectorTally]:
        return {
            name: node.tally
            for name, node in self.nodes.items()
            if node.kind is UnitKind.DETECTOR and node.tally is not None
        }

    def _source(self) -> str:
        sources = [n.name for n in self.nodes.values() if n.kind is UnitKind.SOURCE]
        if len(sources) != 1:
            raise TopologyError(f"expected exactly one source, found {len(sources)}")
        return sources[0]

    def validate(self) -> None:
        """
        Check the wiring invariants.

        Raises:
            TopologyError: If there is not exactly one source, an output port
                is unwired, the graph has a cycle, or a path does not end at a
                detector or block
        """
        source = self._source()
        for node in self.nodes.values():
            if node.kind is UnitKind.DETECTOR and node.name not in DETECTOR_INDEX:
                raise TopologyError(f"detectors must be named D0 or D1, got {node.name!r}")
            for port in range(node.kind.n_outputs):
                if (node.name, port) not in self.wires:
                    raise TopologyError(f"output port {port} of {node.name} is not wired")

        # Depth-first walk; every branch must end in a sink without revisiting itself
        state: dict[str, int] = {}

        def visit(name: str) -> None:
            mark = state.get(name)
            if mark == 1:
                raise TopologyError(f"cycle through {name}")
            if mark == 2:
                return
            state[name] = 1
            node = self.nodes[name]
            for port in range(node.kind.n_outputs):
                visit(self.wires[(name, port)][0])
            state[name] = 2

        visit(source)
        sinks = [
            n for n in state if self.nodes[n].kind in (UnitKind.DETECTOR, UnitKind.BLOCK)
        ]
        if not sinks:
            raise TopologyError("no detector is reachable from the source")

    def route_one(
        self,
        messenger: Messenger,
        hooks: RouteHooks | None = None,
        event: int = 0,
    ) -> tuple[int, int] | None:
        """
        Route one messenger from the source to a detector.

        Args:
            messenger: Messenger as emitted by the source
            hooks: Waypoint callbacks (``on_enter``/``on_exit`` per unit)
            event: Event index passed to the hooks

        Returns:
            ``(detector index, path label)``, or None when the messenger was
            absorbed by a beam block

        Raises:
            TopologyError: If a unit has no wired continuation or the
                messenger reaches a detector without a path label
        """
        hooks = hooks or _NO_HOOKS
        name = self._source()
        max_hops = len(self.nodes) + 1
        for _ in range(max_hops):
            node = self.nodes[name]
            hooks.on_enter(event, name, messenger)

            if node.kind is UnitKind.DETECTOR:
                if messenger.path_label is None:
                    raise TopologyError(f"messenger reached {name} without a path label")
                assert node.tally is not None
                node.tally.record(messenger.path_label)
                return DETECTOR_INDEX[name], messenger.path_label
            if node.kind is UnitKind.BLOCK:
                return None

            if node.unit is not None:
                out_channel, message = node.unit.process(messenger.channel, messenger.message)
                messenger = messenger.moved(out_channel, message)
            if node.assigns_label:
                messenger = messenger.with_label(messenger.channel)
            hooks.on_exit(event, name, messenger)

            wire = self.wires.get((name, messenger.channel))
            if wire is None:
                raise TopologyError(f"{name} output {messenger.channel} has no continuation")
            name, in_port = wire
            messenger = messenger.moved(in_port, messenger.message)

        raise TopologyError(f"messenger did not reach a detector within {max_hops} hops")


def emit_source(n: int, cfg: ExperimentConfig | None = None) -> Messenger:
    """
    Messenger emitted for event ``n``.

    Always linear polarization at 45 degrees with zero phases, entering the
    input PBS on channel 0 without a path label.
    """
    return Messenger(message=_SOURCE_MESSAGE, path_label=None, channel=0)


def point_rngs(cfg: ExperimentConfig, phi: float) -> RngFactory:
    """Streams of one (R, Phi) point, independent of the grid it belongs to."""
    rngs = RngFactory(cfg.seed).child(f"r={cfg.r!r}").child(f"phi={phi!r}")
    if cfg.mode.blocked_arm is not None:
        rngs = rngs.child(f"mode={cfg.mode.value}")
    return rngs


def build_delayed_choice_network(
    cfg: ExperimentConfig,
    phi: float = 0.0,
    rngs: RngFactory | None = None,
    blocked_arm: int | None = None,
) -> OpticalNetwork:
    """
    Build the delayed-choice interferometer.

    source -> pbs_input; arm 0 -> phase -> pbs_merge input 0; arm 1 ->
    pbs_merge input 1; both merge outputs -> hwp -> eom -> wollaston ->
    {D0, D1}. The path label is set at the pbs_input exit. With
    ``blocked_arm`` the chosen arm ends in a beam block instead.

    Args:
        cfg: Run configuration (R, alpha, HWP angle, seed)
        phi: Phase shift on arm 0 (radians)
        rngs: Stream factory for this point (defaults to :func:`point_rngs`)
        blocked_arm: Arm to block (0 or 1), or None

    Returns:
        Validated network with fresh DLM states
    """
    if blocked_arm not in (None, 0, 1):
        raise InvalidArgumentError(f"blocked_arm must be 0, 1 or None, got {blocked_arm}")
    if not math.isfinite(phi):
        raise InvalidArgumentError(f"phi must be finite, got {phi}")
    rngs = rngs or point_rngs(cfg, phi)

    def dlm(name: str, n_inputs: int = 2) -> DlmBeamSplitter:
        return DlmBeamSplitter(
            name,
            cfg.alpha,
            init_rng=rngs.stream(f"{name}.init"),
            emit_rng=rngs.stream(f"{name}.emit"),
            n_inputs=n_inputs,
        )

    net = OpticalNetwork()
    net.add(UnitNode("source", UnitKind.SOURCE))
    net.add(UnitNode("pbs_input", UnitKind.DLM_PBS, unit=dlm("pbs_input"), assigns_label=True))
    net.add(UnitNode("phase", UnitKind.PHASE_SHIFT, unit=PhaseShifter("phase", phi)))
    net.add(UnitNode("pbs_merge", UnitKind.DLM_PBS, unit=dlm("pbs_merge")))
    net.add(UnitNode("hwp", UnitKind.HWP, unit=HalfWavePlate("hwp", cfg.hwp_angle)))
    net.add(UnitNode("eom", UnitKind.EOM, unit=ElectroOpticModulator("eom", cfg.r)))
    net.add(UnitNode("wollaston", UnitKind.WOLLASTON, unit=dlm("wollaston", n_inputs=1)))
    net.add(UnitNode("D0", UnitKind.DETECTOR))
    net.add(UnitNode("D1", UnitKind.DETECTOR))

    net.connect("source", 0, "pbs_input", 0)
    if blocked_arm is None:
        net.connect("pbs_input", 0, "phase", 0)
        net.connect("pbs_input", 1, "pbs_merge", 1)
    else:
        net.add(UnitNode("block", UnitKind.BLOCK))
        if blocked_arm == 0:
            net.connect("pbs_input", 0, "block", 0)
            net.connect("pbs_input", 1, "pbs_merge", 1)
        else:
            net.connect("pbs_input", 0, "phase", 0)
            net.connect("pbs_input", 1, "block", 0)
    net.connect("phase", 0, "pbs_merge", 0)
    # Rare merge output-1 events rejoin the same beam line
    net.connect("pbs_merge", 0, "hwp", 0)
    net.connect("pbs_merge", 1, "hwp", 0)
    net.connect("hwp", 0, "eom", 0)
    net.connect("eom", 0, "wollaston", 0)
    net.connect("wollaston", 0, "D0", 0)
    net.connect("wollaston", 1, "D1", 0)

    net.validate()
    logger.debug(
        f"Network built: R={cfg.r}, phi={phi:.6f}, alpha={cfg.alpha}, blocked_arm={blocked_arm}"
    )
    return net
