"""Tests for experiment runs and the per-event dataset.

Counting tolerances use binomial noise plus a fixed allowance for the DLM
learning transient (random initial registers relax over ~1/(1 - alpha)
events and are kept in the counts).
"""

import math

import numpy as np
import pandas as pd
import pytest
from pytest_mock import MockerFixture

from src.analysis.duality import oracle_intensity, v_theory
from src.analysis.fringes import fit_visibility, fringe_deviation
from src.experiment.dataset import (
    GAMMA_COLUMNS,
    EventRecord,
    GammaDataset,
    count_rows,
    single_channel_fraction,
)
from src.experiment.runner import (
    EomController,
    run_delayed_choice,
    run_distinguishability,
    run_duality_scan,
    run_phase_sweep,
    run_point,
)
from src.models.message import Messenger, make_message
from src.models.schemas import EomSchedule, ExperimentConfig, GammaMeta, Mode, phase_grid
from src.optics.passive import ElectroOpticModulator
from src.utils.errors import DegenerateStateError, HookOrderError, InvalidArgumentError
from src.utils.rng import RngStream

TRANSIENT = 0.015
GRID_12 = tuple(phase_grid(0.0, 2.0 * math.pi, 12))


def sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


@pytest.fixture(scope="module")
def closed_sweep() -> pd.DataFrame:
    """Closed sweep at R = 0.5, 12 phases, N = 10^4."""
    cfg = ExperimentConfig(r=0.5, mode=Mode.CLOSED, phi_grid=GRID_12, events=10_000, seed=101)
    return run_phase_sweep(cfg, n_jobs=1).counts


@pytest.fixture(scope="module")
def delayed_gamma() -> tuple[GammaDataset, list[tuple[int, str]]]:
    """Delayed-choice point with the full unit/draw order log."""
    cfg = ExperimentConfig(r=0.43, mode=Mode.DELAYED_CHOICE, events=10_000, seed=202)
    log: list[tuple[int, str]] = []
    return run_delayed_choice(cfg, 0.7, order_log=log), log


class TestRunPoint:
    """Tests for run_point."""

    def test_open_mode_flat(self) -> None:
        """Test N0/N = 0.5 for the open configuration at any phase."""
        cfg = ExperimentConfig(r=0.3, mode=Mode.OPEN, events=10_000, seed=303)
        for phi in (0.0, math.pi / 2, math.pi, 4.0):
            (row,) = run_point(cfg, phi).rows
            assert row.config.value == "open"
            assert row.n == 10_000
            assert abs(row.n_d0 / row.n - 0.5) <= 0.015 + 0.01
            assert abs(row.n_d1 / row.n - 0.5) <= 0.015 + 0.01

    def test_closed_sweep_full_visibility(self, closed_sweep: pd.DataFrame) -> None:
        """Test V = 1.00 +/- 0.02 at R = 0.5."""
        fit = fit_visibility(closed_sweep)
        assert fit.v_hat == pytest.approx(1.0, abs=0.02)

    def test_closed_sweep_follows_oracle(self, closed_sweep: pd.DataFrame) -> None:
        """Test every point against the Malus curve with a fitted phase origin."""
        fit = fit_visibility(closed_sweep)
        deviation = fringe_deviation(closed_sweep, fit, v_theory(0.5))
        for (_, row), dev in zip(closed_sweep.iterrows(), deviation, strict=True):
            i0, _ = oracle_intensity(row["phi_rad"], 0.5, fit.phase_offset)
            assert abs(dev) <= 5.0 * sigma(i0, int(row["n"])) + TRANSIENT

    def test_path_subcounts_equal(self, closed_sweep: pd.DataFrame) -> None:
        """Test that path-0 and path-1 events at D0 are equal at every phase."""
        for _, row in closed_sweep.iterrows():
            diff = abs(row["n_d0_path0"] - row["n_d0_path1"])
            assert diff <= 5.0 * math.sqrt(max(row["n_d0"], 1)) + 0.005 * row["n"]

    def test_each_path_shows_fringe(self, closed_sweep: pd.DataFrame) -> None:
        """Test that the path-0 and path-1 sub-series each interfere."""
        for column in ("n_d0_path0", "n_d0_path1"):
            assert fit_visibility(closed_sweep, column=column).v_hat >= 0.95

    def test_count_invariants(self, closed_sweep: pd.DataFrame) -> None:
        """Test N0 + N1 = N and the path splits in every row."""
        assert (closed_sweep["n_d0"] + closed_sweep["n_d1"] == closed_sweep["n"]).all()
        split0 = closed_sweep["n_d0_path0"] + closed_sweep["n_d0_path1"]
        assert (split0 == closed_sweep["n_d0"]).all()
        assert list(closed_sweep["phi_rad"]) == list(GRID_12)

    def test_reproducible(self) -> None:
        """Test that the same config gives identical datasets and rows."""
        cfg = ExperimentConfig(r=0.2, events=2000, seed=404)
        first = run_point(cfg, 1.3)
        second = run_point(cfg, 1.3)

        pd.testing.assert_frame_equal(first.gamma.frame, second.gamma.frame)
        assert first.rows == second.rows

    def test_seed_changes_events(self) -> None:
        """Test that another seed gives another event stream."""
        a = run_point(ExperimentConfig(events=500, seed=1), 0.0).gamma.frame
        b = run_point(ExperimentConfig(events=500, seed=2), 0.0).gamma.frame
        assert not a.equals(b)

    def test_merge_single_channel(self) -> None:
        """Test that >= 99% of events leave the merge PBS through one channel."""
        cfg = ExperimentConfig(r=0.5, mode=Mode.CLOSED, events=10_000, seed=505)
        gamma = run_point(cfg, 2.0).gamma
        assert single_channel_fraction(gamma, warmup_fraction=0.1) >= 0.99

    @pytest.mark.parametrize("warmup", [0.0, 0.3, 0.9])
    def test_merge_share_uses_configured_warmup(self, warmup: float) -> None:
        """Test that the point's merge-PBS share skips the configured warm-up."""
        cfg = ExperimentConfig(
            r=0.43, mode=Mode.CLOSED, events=400, seed=506, warmup_fraction=warmup
        )
        result = run_point(cfg, 1.0)
        assert result.merge_single_channel == single_channel_fraction(result.gamma, warmup)


class TestDelayedChoice:
    """Tests for run_delayed_choice and the EOM controller."""

    def test_draw_order_every_event(
        self, delayed_gamma: tuple[GammaDataset, list[tuple[int, str]]]
    ) -> None:
        """Test that A_n is drawn after pbs_input and before any BS_output unit."""
        gamma, log = delayed_gamma
        per_event: dict[int, list[str]] = {}
        for event, unit in log:
            per_event.setdefault(event, []).append(unit)

        assert len(per_event) == len(gamma) == 10_000
        for units in per_event.values():
            assert units[:3] == ["source", "pbs_input", "draw"]
            assert units.count("draw") == 1
            tail = [u for u in units[3:] if u != "phase"]
            assert tail[:4] == ["pbs_merge", "hwp", "eom", "wollaston"]
            assert tail[4] in ("D0", "D1")

    def test_choice_frequency(
        self, delayed_gamma: tuple[GammaDataset, list[tuple[int, str]]]
    ) -> None:
        """Test that the fraction with A_n = 1 is 0.5 +/- 0.015."""
        gamma, _ = delayed_gamma
        assert abs(gamma.frame["a"].mean() - 0.5) <= 0.015

    def test_choice_independent_of_path(
        self, delayed_gamma: tuple[GammaDataset, list[tuple[int, str]]]
    ) -> None:
        """Test |corr(A_n, y_n)| <= 3 / sqrt(N)."""
        gamma, _ = delayed_gamma
        corr = np.corrcoef(gamma.frame["a"], gamma.frame["y"])[0, 1]
        assert abs(corr) <= 3.0 / math.sqrt(len(gamma))

    def test_every_event_fully_recorded(
        self, delayed_gamma: tuple[GammaDataset, list[tuple[int, str]]]
    ) -> None:
        """Test that x, y and A are set for every event."""
        gamma, _ = delayed_gamma
        assert list(gamma.frame.columns) == GAMMA_COLUMNS
        for column in ("x", "y", "a", "merge_ch"):
            assert set(gamma.frame[column].unique()) <= {0, 1}
        assert list(gamma.frame["n"]) == list(range(10_000))

    def test_partition_open_flat_closed_fringe(self) -> None:
        """Test open rows flat and closed rows interfering in one delayed-choice sweep."""
        cfg = ExperimentConfig(
            r=0.5,
            mode=Mode.DELAYED_CHOICE,
            phi_grid=tuple(phase_grid(0.0, 2.0 * math.pi, 8)),
            events=10_000,
            seed=606,
        )
        counts = run_phase_sweep(cfg, n_jobs=1).counts
        open_rows = counts[counts["config"] == "open"]
        closed_rows = counts[counts["config"] == "closed"]

        assert len(open_rows) == len(closed_rows) == 8
        assert ((open_rows["n"].to_numpy() + closed_rows["n"].to_numpy()) == 10_000).all()
        assert fit_visibility(closed_rows).v_hat >= 0.95
        assert fit_visibility(open_rows).v_hat <= 0.08
        for _, row in open_rows.iterrows():
            assert abs(row["n_d0"] / row["n"] - 0.5) <= 0.03

    def test_alternating_schedule(self) -> None:
        """Test A_n = n mod 2 with the alternating schedule."""
        cfg = ExperimentConfig(events=200, seed=7, eom_schedule=EomSchedule.ALTERNATING)
        gamma = run_delayed_choice(cfg, 0.0)
        assert (gamma.frame["a"] == gamma.frame["n"] % 2).all()

    def test_requires_delayed_mode(self) -> None:
        """Test that other modes are rejected."""
        with pytest.raises(InvalidArgumentError):
            run_delayed_choice(ExperimentConfig(mode=Mode.CLOSED, events=10), 0.0)

    def test_entry_before_draw_raises(self) -> None:
        """Test HookOrderError when a BS_output unit is entered before the draw."""
        controller = EomController(
            ElectroOpticModulator("eom", 0.5),
            Mode.DELAYED_CHOICE,
            EomSchedule.RANDOM,
            RngStream(1, ("choice",)),
        )
        messenger = Messenger(make_message(0.0, 0.0, 0.0), path_label=0)
        with pytest.raises(HookOrderError, match="before"):
            controller.on_enter(0, "pbs_merge", messenger)

    def test_double_draw_raises(self) -> None:
        """Test HookOrderError when the input PBS is left twice in one event."""
        eom = ElectroOpticModulator("eom", 0.5)
        controller = EomController(
            eom, Mode.CLOSED, EomSchedule.RANDOM, RngStream(1, ("choice",))
        )
        messenger = Messenger(make_message(0.0, 0.0, 0.0), path_label=1)
        controller.on_exit(3, "pbs_input", messenger)
        assert eom.voltage_on is True
        with pytest.raises(HookOrderError, match="twice"):
            controller.on_exit(3, "pbs_input", messenger)


class TestDistinguishabilityRuns:
    """Tests for run_distinguishability."""

    def test_rows_and_event_counts(self) -> None:
        """Test one closed row per blocked arm with N detected events each."""
        cfg = ExperimentConfig(r=0.2, events=1000, seed=9)
        rows = run_distinguishability(cfg)

        assert list(rows["mode"]) == ["blocked_arm0", "blocked_arm1"]
        assert (rows["config"] == "closed").all()
        assert (rows["n"] == 1000).all()
        assert rows.iloc[0]["n_d0_path0"] == rows.iloc[0]["n_d1_path0"] == 0
        assert rows.iloc[1]["n_d0_path1"] == rows.iloc[1]["n_d1_path1"] == 0

    def test_zero_r_sorts_by_arm(self) -> None:
        """Test full sorting at R = 0: arm 1 reaches D0 and arm 0 reaches D1."""
        rows = run_distinguishability(ExperimentConfig(r=0.0, events=10_000, seed=11))
        only_arm1 = rows[rows["mode"] == "blocked_arm0"].iloc[0]
        only_arm0 = rows[rows["mode"] == "blocked_arm1"].iloc[0]

        assert only_arm1["n_d0"] / only_arm1["n"] >= 0.99
        assert only_arm0["n_d1"] / only_arm0["n"] >= 0.99

    def test_half_r_no_sorting(self) -> None:
        """Test 50/50 detector frequencies for each blocked arm at R = 0.5."""
        rows = run_distinguishability(ExperimentConfig(r=0.5, events=10_000, seed=12))
        for _, row in rows.iterrows():
            assert abs(row["n_d0"] / row["n"] - 0.5) <= 0.015 + 0.01

    def test_attempt_guard(self, mocker: MockerFixture) -> None:
        """Test that a blocked run stops when too few events are detected."""
        mocker.patch("src.experiment.runner.MAX_ATTEMPTS_PER_EVENT", 0)
        cfg = ExperimentConfig(r=0.2, mode=Mode.BLOCKED_ARM0, events=10, seed=1)
        with pytest.raises(DegenerateStateError, match="detected"):
            run_point(cfg, 0.0)


class TestSweeps:
    """Tests for run_phase_sweep options."""

    def test_independent_of_worker_count(self) -> None:
        """Test that joblib workers give the same CountTable as a sequential run."""
        cfg = ExperimentConfig(
            r=0.43, mode=Mode.CLOSED, phi_grid=(0.0, 1.0, 2.0), events=300, seed=13
        )
        sequential = run_phase_sweep(cfg, n_jobs=1).counts
        parallel = run_phase_sweep(cfg, n_jobs=2).counts
        pd.testing.assert_frame_equal(sequential, parallel)

    def test_point_independent_of_grid(self) -> None:
        """Test that a phase point does not depend on the rest of the grid."""
        base = {"r": 0.43, "mode": Mode.CLOSED, "events": 300, "seed": 14}
        short = run_phase_sweep(ExperimentConfig(phi_grid=(1.0,), **base), n_jobs=1).counts
        longer = run_phase_sweep(ExperimentConfig(phi_grid=(0.0, 1.0), **base), n_jobs=1).counts
        cols = ["n_d0", "n_d1", "n_d0_path0", "n_d0_path1"]
        assert short[cols].iloc[0].tolist() == longer[cols].iloc[1].tolist()

    def test_carried_state(self) -> None:
        """Test sweeps that carry one network from point to point."""
        cfg = ExperimentConfig(
            r=0.5,
            mode=Mode.CLOSED,
            phi_grid=(0.0, math.pi),
            events=3000,
            seed=15,
            fresh_state_per_point=False,
        )
        result = run_phase_sweep(cfg, keep_gamma=True)
        i0 = (result.counts["n_d0"] / result.counts["n"]).tolist()

        assert len(result.gammas) == 2
        assert i0[0] > 0.9
        assert i0[1] < 0.1

    def test_merge_share_per_point(self) -> None:
        """Test one merge-PBS share per grid point, workers or not."""
        cfg = ExperimentConfig(
            r=0.43, mode=Mode.CLOSED, phi_grid=(0.0, 1.0, 2.0), events=300, seed=16
        )
        sequential = run_phase_sweep(cfg, n_jobs=1).merge_single_channel
        parallel = run_phase_sweep(cfg, n_jobs=2).merge_single_channel

        assert len(sequential) == 3
        assert sequential == parallel
        assert all(0.5 <= share <= 1.0 for share in sequential)


class TestDualityScan:
    """Tests for run_duality_scan."""

    def test_repeated_r_runs_once(self) -> None:
        """Test that a repeated R keeps its grid entries but is simulated once."""
        cfg = ExperimentConfig(mode=Mode.CLOSED, phi_grid=(0.0, 2.0, 4.0), events=150, seed=17)
        scan = run_duality_scan(cfg, [0.5, 0.2, 0.5], n_jobs=1)

        assert scan.r_grid == [0.5, 0.2, 0.5]
        assert scan.counts["r"].tolist() == [0.5] * 3 + [0.2] * 3
        assert scan.blocked["r"].tolist() == [0.5, 0.5, 0.2, 0.2]

    def test_empty_grid(self) -> None:
        """Test that an empty R grid is rejected."""
        with pytest.raises(InvalidArgumentError, match="empty"):
            run_duality_scan(ExperimentConfig(), [])


class TestGammaDataset:
    """Tests for GammaDataset helpers."""

    @pytest.fixture
    def gamma(self) -> GammaDataset:
        """Four hand-made events."""
        records = [
            EventRecord(0, 0, 0, 1, 0),
            EventRecord(1, 1, 1, 1, 0),
            EventRecord(2, 0, 1, 0, 1),
            EventRecord(3, 1, 0, 0, 0),
        ]
        meta = GammaMeta(r=0.5, phi=0.25, events=4, seed=1, mode=Mode.DELAYED_CHOICE)
        return GammaDataset.from_records(records, meta)

    def test_partition(self, gamma: GammaDataset) -> None:
        """Test the A_n partition."""
        assert list(gamma.partition(1).frame["n"]) == [0, 1]
        assert list(gamma.partition(0).frame["n"]) == [2, 3]

    def test_count_rows(self, gamma: GammaDataset) -> None:
        """Test open and closed rows from a delayed-choice stream."""
        cfg = ExperimentConfig(r=0.5, seed=1)
        open_row, closed_row = count_rows(gamma, cfg, "rid")

        assert (open_row.n, open_row.n_d0, open_row.n_d0_path1) == (2, 1, 1)
        assert (closed_row.n, closed_row.n_d0, closed_row.n_d0_path0) == (2, 1, 1)
        assert closed_row.phi_rad == 0.25

    def test_export_frame(self, gamma: GammaDataset) -> None:
        """Test the gamma CSV columns."""
        frame = gamma.to_export_frame()
        assert list(frame.columns) == ["r", "phi_rad", *GAMMA_COLUMNS]
        assert (frame["phi_rad"] == 0.25).all()

    def test_single_channel_fraction(self, gamma: GammaDataset) -> None:
        """Test the dominant-channel share and the warm-up cut."""
        assert single_channel_fraction(gamma, warmup_fraction=0.0) == 0.75
        assert single_channel_fraction(gamma, warmup_fraction=0.75) == 1.0
