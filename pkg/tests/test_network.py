"""Tests for network wiring, routing and hooks."""

import io
import math
import re

import pytest

from src.models.message import Messenger, make_message, to_jones
from src.models.schemas import ExperimentConfig, Mode
from src.network.hooks import (
    ChannelProbe,
    CompositeHooks,
    OrderRecorder,
    RouteHooks,
    TraceRecorder,
    format_point_header,
    format_trace_line,
)
from src.network.topology import (
    OpticalNetwork,
    UnitKind,
    UnitNode,
    build_delayed_choice_network,
    emit_source,
)
from src.optics.passive import ElectroOpticModulator, HalfWavePlate
from src.utils.errors import InvalidArgumentError, TopologyError


@pytest.fixture
def cfg() -> ExperimentConfig:
    """Closed-configuration config at R = 0.5."""
    return ExperimentConfig(r=0.5, mode=Mode.CLOSED, seed=77, events=1000)


def route_many(net: OpticalNetwork, n: int, hooks: RouteHooks | None = None) -> list:
    return [net.route_one(emit_source(i), hooks, event=i) for i in range(n)]


class TestBuild:
    """Tests for build_delayed_choice_network."""

    def test_component_counts(self, cfg: ExperimentConfig) -> None:
        """Test 2 DLM-PBS, 1 Wollaston, 1 HWP, 1 EOM, 1 phase shifter, 2 detectors."""
        counts = build_delayed_choice_network(cfg).kind_counts()

        assert counts[UnitKind.DLM_PBS] == 2
        assert counts[UnitKind.WOLLASTON] == 1
        assert counts[UnitKind.HWP] == 1
        assert counts[UnitKind.EOM] == 1
        assert counts[UnitKind.PHASE_SHIFT] == 1
        assert counts[UnitKind.DETECTOR] == 2
        assert counts[UnitKind.SOURCE] == 1
        assert counts[UnitKind.BLOCK] == 0

    def test_detectors_named(self, cfg: ExperimentConfig) -> None:
        """Test that the detectors are D0 and D1."""
        assert set(build_delayed_choice_network(cfg).detectors) == {"D0", "D1"}

    def test_builds_are_independent(self, cfg: ExperimentConfig) -> None:
        """Test that two builds start equal but do not share state."""
        a = build_delayed_choice_network(cfg, phi=0.3)
        b = build_delayed_choice_network(cfg, phi=0.3)
        merge_a = a.unit("pbs_merge")
        merge_b = b.unit("pbs_merge")

        assert merge_a is not merge_b
        assert merge_a.state.snapshot() == merge_b.state.snapshot()  # type: ignore[attr-defined]
        route_many(a, 50)
        assert merge_a.state.snapshot() != merge_b.state.snapshot()  # type: ignore[attr-defined]
        assert b.detectors["D0"].n_total == 0

    def test_blocked_arm_adds_block(self, cfg: ExperimentConfig) -> None:
        """Test that a blocked network carries one beam block."""
        net = build_delayed_choice_network(cfg, blocked_arm=1)
        assert net.kind_counts()[UnitKind.BLOCK] == 1
        assert net.wires[("pbs_input", 1)] == ("block", 0)

    def test_bad_blocked_arm(self, cfg: ExperimentConfig) -> None:
        """Test that only arms 0 and 1 can be blocked."""
        with pytest.raises(InvalidArgumentError):
            build_delayed_choice_network(cfg, blocked_arm=2)


class TestValidation:
    """Tests for OpticalNetwork.validate."""

    def test_unwired_output_rejected(self) -> None:
        """Test that a dangling output port fails validation."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("hwp", UnitKind.HWP, unit=HalfWavePlate("hwp", 0.0)))
        net.add(UnitNode("D0", UnitKind.DETECTOR))
        net.connect("source", 0, "hwp", 0)

        with pytest.raises(TopologyError, match="not wired"):
            net.validate()

    def test_missing_continuation_while_routing(self) -> None:
        """Test that routing into a dead end raises TopologyError."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("hwp", UnitKind.HWP, unit=HalfWavePlate("hwp", 0.0)))
        net.connect("source", 0, "hwp", 0)

        with pytest.raises(TopologyError, match="continuation"):
            net.route_one(emit_source(0))

    def test_cycle_rejected(self) -> None:
        """Test that a loop between units fails validation."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("hwp", UnitKind.HWP, unit=HalfWavePlate("hwp", 0.0)))
        net.add(UnitNode("eom", UnitKind.EOM, unit=ElectroOpticModulator("eom", 0.1)))
        net.connect("source", 0, "hwp", 0)
        net.connect("hwp", 0, "eom", 0)
        net.connect("eom", 0, "hwp", 0)

        with pytest.raises(TopologyError, match="cycle"):
            net.validate()

    def test_two_sources_rejected(self) -> None:
        """Test that exactly one source is required."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("source2", UnitKind.SOURCE))
        with pytest.raises(TopologyError, match="exactly one source"):
            net.validate()

    def test_duplicate_and_double_wiring(self) -> None:
        """Test that names are unique and an output is wired once."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("D0", UnitKind.DETECTOR))
        net.add(UnitNode("D1", UnitKind.DETECTOR))
        with pytest.raises(TopologyError, match="duplicate"):
            net.add(UnitNode("D0", UnitKind.DETECTOR))
        net.connect("source", 0, "D0", 0)
        with pytest.raises(TopologyError, match="already wired"):
            net.connect("source", 0, "D1", 0)

    def test_detector_needs_label(self) -> None:
        """Test that an unlabelled messenger cannot be counted."""
        net = OpticalNetwork()
        net.add(UnitNode("source", UnitKind.SOURCE))
        net.add(UnitNode("D0", UnitKind.DETECTOR))
        net.connect("source", 0, "D0", 0)
        net.validate()

        with pytest.raises(TopologyError, match="path label"):
            net.route_one(emit_source(0))


class TestEmitSource:
    """Tests for emit_source."""

    def test_equal_amplitudes(self) -> None:
        """Test the Jones pair (sqrt2/2, sqrt2/2)."""
        j = to_jones(emit_source(0).message)
        assert j.h == pytest.approx(math.sqrt(2) / 2)
        assert j.v == pytest.approx(math.sqrt(2) / 2)

    def test_n_independent(self) -> None:
        """Test that every event gets the same messenger on channel 0, unlabelled."""
        first = emit_source(0)
        later = emit_source(12345)
        assert first == later
        assert first.channel == 0
        assert first.path_label is None

    def test_input_split_even(self, cfg: ExperimentConfig) -> None:
        """Test 50/50 exit frequencies at the input PBS (3 sigma plus transient)."""
        net = build_delayed_choice_network(cfg)
        probe = ChannelProbe("pbs_input")
        n = 10_000
        ones = 0
        for i in range(n):
            net.route_one(emit_source(i), probe, event=i)
            ones += probe.last_channel or 0
        assert abs(ones / n - 0.5) <= 0.015 + 0.005


class TestRouting:
    """Tests for route_one."""

    def test_conservation(self, cfg: ExperimentConfig) -> None:
        """Test that exactly one detector fires per messenger."""
        net = build_delayed_choice_network(cfg)
        results = route_many(net, 2000)
        tallies = net.detectors

        assert all(r is not None for r in results)
        assert tallies["D0"].n_total + tallies["D1"].n_total == 2000
        for tally in tallies.values():
            assert tally.n_total == sum(tally.n_by_path)

    def test_label_is_input_exit_channel(self, cfg: ExperimentConfig) -> None:
        """Test that the label at the detector equals the pbs_input exit channel."""
        net = build_delayed_choice_network(cfg, phi=1.0)
        probe = ChannelProbe("pbs_input")
        for i in range(1000):
            result = net.route_one(emit_source(i), probe, event=i)
            assert result is not None
            assert result[1] == probe.last_channel

    def test_unit_order(self, cfg: ExperimentConfig) -> None:
        """Test that units are entered in topology order for both arms."""
        net = build_delayed_choice_network(cfg)
        log: list[tuple[int, str]] = []
        results = route_many(net, 200, OrderRecorder(log))

        bs_output = ["pbs_merge", "hwp", "eom", "wollaston"]
        for event, result in enumerate(results):
            assert result is not None
            detector, label = result
            units = [unit for e, unit in log if e == event]
            arm = ["phase"] if label == 0 else []
            assert units == ["source", "pbs_input", *arm, *bs_output, f"D{detector}"]

    def test_blocked_arm_absorbs(self, cfg: ExperimentConfig) -> None:
        """Test that messengers on the blocked arm are absorbed and never counted."""
        net = build_delayed_choice_network(cfg, blocked_arm=0)
        probe = ChannelProbe("pbs_input")
        detected = 0
        for i in range(1000):
            result = net.route_one(emit_source(i), probe, event=i)
            if probe.last_channel == 0:
                assert result is None
            else:
                assert result is not None
                assert result[1] == 1
                detected += 1
        tallies = net.detectors
        assert tallies["D0"].n_total + tallies["D1"].n_total == detected
        assert tallies["D0"].n_by_path[0] == tallies["D1"].n_by_path[0] == 0


class TestHooks:
    """Tests for the hook classes."""

    def test_trace_line_format(self, cfg: ExperimentConfig) -> None:
        """Test ``event=n unit=<name> ch=<k> msg=<6 floats>`` lines."""
        net = build_delayed_choice_network(cfg)
        trace = TraceRecorder()
        route_many(net, 3, trace)

        pattern = re.compile(r"^event=\d+ unit=\w+ ch=[01] msg=(\S+ ){5}\S+$")
        assert trace.lines[0].startswith("event=0 unit=source ch=0 msg=")
        assert all(pattern.match(line) for line in trace.lines)
        assert sum(1 for line in trace.lines if " unit=D" in line) == 3

    def test_trace_to_stream(self) -> None:
        """Test that a stream-backed recorder writes newline-terminated lines."""
        stream = io.StringIO()
        messenger = Messenger(make_message(0.0, 0.0, 0.0))
        TraceRecorder(stream).on_enter(4, "hwp", messenger)

        assert stream.getvalue() == format_trace_line(4, "hwp", messenger) + "\n"
        assert stream.getvalue().startswith("event=4 unit=hwp ch=0 msg=1 0 1 0 1 0")

    def test_point_header(self) -> None:
        """Test that each phase point opens a section naming R and Phi."""
        trace = TraceRecorder()
        messenger = Messenger(make_message(0.0, 0.0, 0.0))
        trace.begin_point(0.43, 1.5)
        trace.on_enter(0, "source", messenger)
        trace.begin_point(0.43, 3.0)
        trace.on_enter(0, "source", messenger)

        assert trace.lines[0] == format_point_header(0.43, 1.5) == "# point r=0.43 phi_rad=1.5"
        assert trace.lines[2] == "# point r=0.43 phi_rad=3.0"
        assert trace.lines[1] == trace.lines[3]

    def test_composite_order(self) -> None:
        """Test that composite hooks call their members in list order."""
        calls: list[str] = []

        class Named(RouteHooks):
            def __init__(self, name: str) -> None:
                self.name = name

            def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
                calls.append(f"{self.name}:{unit}")

        composite = CompositeHooks([Named("a"), Named("b")])
        composite.on_enter(0, "source", emit_source(0))
        assert calls == ["a:source", "b:source"]
