"""Runs of the delayed-choice experiment: single points, phase sweeps, blocked arms.

Every phase point builds its own network and draws from its own streams
(keyed by R and Phi below the master seed), so sweeps give the same
result for any worker count.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TextIO

import pandas as pd
from joblib import Parallel, delayed

from src.config import settings
from src.experiment.dataset import (
    EventRecord,
    GammaDataset,
    count_rows,
    rows_to_frame,
    single_channel_fraction,
)
from src.models.message import Messenger
from src.models.schemas import CountRow, EomSchedule, ExperimentConfig, GammaMeta, Mode
from src.network.hooks import (
    ChannelProbe,
    CompositeHooks,
    OrderRecorder,
    RouteHooks,
    TraceRecorder,
)
from src.network.topology import (
    BS_OUTPUT_UNITS,
    OpticalNetwork,
    build_delayed_choice_network,
    emit_source,
    point_rngs,
)
from src.optics.passive import ElectroOpticModulator, PhaseShifter
from src.utils.errors import DegenerateStateError, HookOrderError, InvalidArgumentError
from src.utils.logger import setup_logger
from src.utils.rng import RngStream

logger = setup_logger(__name__)

# Blocked runs stop with an error after this many emissions per requested detection
MAX_ATTEMPTS_PER_EVENT = 100


class EomController(RouteHooks):
    """
    Sets the EOM for each event once the messenger has left the input PBS.

    The choice A_n is made in ``on_exit`` of ``pbs_input`` and must precede
    the messenger's entry into any BS_output unit; a violation raises
    :class:`HookOrderError`.

    Args:
        eom: EOM unit of the network
        mode: Run mode (fixes A_n except in delayed-choice mode)
        schedule: Choice sequence in delayed-choice mode
        rng: Stream for the Bernoulli(1/2) choice
        order_log: Optional shared log receiving ``(event, "draw")`` markers
    """

    def __init__(
        self,
        eom: ElectroOpticModulator,
        mode: Mode,
        schedule: EomSchedule,
        rng: RngStream,
        order_log: list[tuple[int, str]] | None = None,
    ) -> None:
        self.eom = eom
        self.mode = mode
        self.schedule = schedule
        self.rng = rng
        self.order_log = order_log
        self.drawn_for: int | None = None
        self.last_choice = 0

    def _choose(self, event: int) -> int:
        if self.mode is Mode.OPEN:
            return 0
        if self.mode is not Mode.DELAYED_CHOICE:
            return 1
        if self.schedule is EomSchedule.ALTERNATING:
            return event % 2
        return self.rng.bernoulli(0.5)

    def on_enter(self, event: int, unit: str, messenger: Messenger) -> None:
        if unit in BS_OUTPUT_UNITS and self.drawn_for != event:
            raise HookOrderError(f"event {event} entered {unit} before A_n was drawn")

    def on_exit(self, event: int, unit: str, messenger: Messenger) -> None:
        if unit != "pbs_input":
            return
        if self.drawn_for == event:
            raise HookOrderError(f"A_n drawn twice for event {event}")
        self.last_choice = self._choose(event)
        self.eom.voltage_on = bool(self.last_choice)
        self.drawn_for = event
        if self.order_log is not None:
            self.order_log.append((event, "draw"))


@dataclass
class PointResult:
    """Count rows and per-event data of one phase point."""

    rows: list[CountRow]
    gamma: GammaDataset
    merge_single_channel: float  # after the configured warm-up


@dataclass
class SweepResult:
    """CountTable over the phase grid, plus per-point datasets when kept."""

    counts: pd.DataFrame
    gammas: list[GammaDataset] = field(default_factory=list)
    merge_single_channel: list[float] = field(default_factory=list)


def _route_events(
    net: OpticalNetwork,
    cfg: ExperimentConfig,
    phi: float,
    controller: EomController,
    extra_hooks: Sequence[RouteHooks] = (),
) -> list[EventRecord]:
    probe = ChannelProbe("pbs_merge")
    hooks = CompositeHooks([*extra_hooks, controller, probe])
    blocked = cfg.mode.blocked_arm is not None
    max_attempts = cfg.events * MAX_ATTEMPTS_PER_EVENT if blocked else cfg.events

    records: list[EventRecord] = []
    n = 0
    while len(records) < cfg.events:
        if n >= max_attempts:
            raise DegenerateStateError(
                f"only {len(records)} of {cfg.events} events detected after {n} emissions "
                f"(mode={cfg.mode.value}, phi={phi})"
            )
        result = net.route_one(emit_source(n, cfg), hooks, event=n)
        if result is not None:
            x, y = result
            assert probe.last_channel is not None
            records.append(EventRecord(n, x, y, controller.last_choice, probe.last_channel))
        n += 1
    return records


def run_point(
    cfg: ExperimentConfig,
    phi: float,
    run_id: str | None = None,
    network: OpticalNetwork | None = None,
    trace: TraceRecorder | None = None,
    order_log: list[tuple[int, str]] | None = None,
) -> PointResult:
    """
    Route N messengers at phase ``phi`` and tally them.

    A fresh network is built unless ``network`` is given (then only its
    phase shifter is retuned). In blocked modes messengers taking the
    blocked arm are absorbed and emission continues until N are detected.

    Args:
        cfg: Run configuration
        phi: Phase shift (radians)
        run_id: Identifier written into the rows (defaults to the config fingerprint)
        network: Network to reuse across points
        trace: Trace hook receiving every unit entry
        order_log: Log of unit entries and choice draws

    Returns:
        Count rows (one per configuration), the Gamma slice and the merge-PBS
        single-channel share after ``cfg.warmup_fraction`` of the events
    """
    run_id = run_id or cfg.fingerprint()
    rngs = point_rngs(cfg, phi)
    if network is None:
        net = build_delayed_choice_network(cfg, phi, rngs=rngs, blocked_arm=cfg.mode.blocked_arm)
    else:
        net = network
        phase = net.unit("phase")
        assert isinstance(phase, PhaseShifter)
        phase.phi = phi

    eom = net.unit("eom")
    assert isinstance(eom, ElectroOpticModulator)
    controller = EomController(
        eom, cfg.mode, cfg.eom_schedule, rngs.stream("eom.choice"), order_log=order_log
    )
    extra: list[RouteHooks] = []
    if order_log is not None:
        extra.append(OrderRecorder(order_log))
    if trace is not None:
        trace.begin_point(cfg.r, phi)
        extra.append(trace)

    records = _route_events(net, cfg, phi, controller, extra)
    meta = GammaMeta(r=cfg.r, phi=phi, events=cfg.events, seed=cfg.seed, mode=cfg.mode)
    gamma = GammaDataset.from_records(records, meta)
    rows = count_rows(gamma, cfg, run_id)
    merge = single_channel_fraction(gamma, cfg.warmup_fraction)
    for row in rows:
        logger.debug(
            f"R={cfg.r} phi={phi:.4f} {row.config.value}: "
            f"n={row.n} n_d0={row.n_d0} n_d1={row.n_d1}"
        )
    logger.debug(f"R={cfg.r} phi={phi:.4f}: merge PBS single-channel share {merge:.4f}")
    return PointResult(rows=rows, gamma=gamma, merge_single_channel=merge)


def _point_task(cfg: ExperimentConfig, phi: float, run_id: str, keep_gamma: bool) -> PointResult:
    result = run_point(cfg, phi, run_id=run_id)
    if not keep_gamma:
        result.gamma = GammaDataset(frame=result.gamma.frame.iloc[0:0], meta=result.gamma.meta)
    return result


def run_phase_sweep(
    cfg: ExperimentConfig,
    run_id: str | None = None,
    n_jobs: int | None = None,
    keep_gamma: bool = False,
    trace: TraceRecorder | None = None,
) -> SweepResult:
    """
    Run every point of ``cfg.phi_grid``.

    Rows come back in grid order. With ``fresh_state_per_point`` false (or a
    trace requested) the points run sequentially; otherwise they go through
    joblib with ``n_jobs`` workers.

    Args:
        cfg: Run configuration
        run_id: Identifier written into the rows
        n_jobs: Worker count (defaults to ``settings.n_jobs``)
        keep_gamma: Keep the per-event datasets in the result
        trace: Trace hook (forces sequential execution)

    Returns:
        SweepResult with the CountTable
    """
    run_id = run_id or cfg.fingerprint()
    n_jobs = settings.n_jobs if n_jobs is None else n_jobs
    logger.info(
        f"Phase sweep {run_id}: R={cfg.r}, mode={cfg.mode.value}, "
        f"{len(cfg.phi_grid)} points x {cfg.events} events"
    )

    results: list[PointResult]
    if not cfg.fresh_state_per_point:
        first = cfg.phi_grid[0]
        net = build_delayed_choice_network(
            cfg, first, rngs=point_rngs(cfg, first), blocked_arm=cfg.mode.blocked_arm
        )
        results = [
            run_point(cfg, phi, run_id=run_id, network=net, trace=trace) for phi in cfg.phi_grid
        ]
    elif trace is not None or n_jobs == 1:
        results = [run_point(cfg, phi, run_id=run_id, trace=trace) for phi in cfg.phi_grid]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_point_task)(cfg, phi, run_id, keep_gamma) for phi in cfg.phi_grid
        )

    rows = [row for result in results for row in result.rows]
    gammas = [result.gamma for result in results] if keep_gamma else []
    logger.info(f"Phase sweep {run_id} done: {len(rows)} rows")
    return SweepResult(
        counts=rows_to_frame(rows),
        gammas=gammas,
        merge_single_channel=[result.merge_single_channel for result in results],
    )


def run_delayed_choice(
    cfg: ExperimentConfig,
    phi: float,
    order_log: list[tuple[int, str]] | None = None,
) -> GammaDataset:
    """
    One delayed-choice point; A_n is drawn after the input PBS for every event.

    Raises:
        InvalidArgumentError: If ``cfg.mode`` is not delayed_choice
        HookOrderError: If the draw ordering is violated
    """
    if cfg.mode is not Mode.DELAYED_CHOICE:
        raise InvalidArgumentError(f"run_delayed_choice needs mode delayed_choice, got {cfg.mode}")
    return run_point(cfg, phi, order_log=order_log).gamma


def run_distinguishability(
    cfg: ExperimentConfig,
    run_id: str | None = None,
    phi: float = 0.0,
) -> pd.DataFrame:
    """
    Blocked-arm runs at R = ``cfg.r``: arm 0 blocked, then arm 1 blocked.

    Both runs use the closed configuration and N detected events each.

    Returns:
        CountTable with the blocked_arm0 and blocked_arm1 rows
    """
    run_id = run_id or cfg.fingerprint()
    rows: list[CountRow] = []
    for mode in (Mode.BLOCKED_ARM0, Mode.BLOCKED_ARM1):
        blocked_cfg = cfg.model_copy(update={"mode": mode})
        rows.extend(run_point(blocked_cfg, phi, run_id=run_id).rows)
    logger.info(f"Blocked-arm runs at R={cfg.r} done")
    return rows_to_frame(rows)


@dataclass
class DualityScan:
    """Closed-configuration sweeps and blocked-arm rows for an R grid."""

    r_grid: list[float]
    counts: pd.DataFrame
    blocked: pd.DataFrame


def run_duality_scan(
    cfg: ExperimentConfig,
    r_grid: Sequence[float],
    run_id: str | None = None,
    n_jobs: int | None = None,
) -> DualityScan:
    """
    Closed phase sweep plus blocked-arm runs for every R in ``r_grid``.

    ``cfg`` supplies everything but R and mode. A repeated R is run once;
    its rows are fixed by the seed, R and Phi.
    """
    if not r_grid:
        raise InvalidArgumentError("r_grid must not be empty")
    run_id = run_id or cfg.fingerprint()
    distinct = list(dict.fromkeys(r_grid))
    if len(distinct) < len(r_grid):
        logger.info(f"R grid has repeated values; running {len(distinct)} distinct R")
    sweeps = []
    blocked = []
    for r in distinct:
        point_cfg = ExperimentConfig.model_validate(
            {**cfg.model_dump(), "r": r, "mode": Mode.CLOSED}
        )
        sweeps.append(run_phase_sweep(point_cfg, run_id=run_id, n_jobs=n_jobs).counts)
        blocked.append(run_distinguishability(point_cfg, run_id=run_id))
    return DualityScan(
        r_grid=list(r_grid),
        counts=pd.concat(sweeps, ignore_index=True),
        blocked=pd.concat(blocked, ignore_index=True),
    )
