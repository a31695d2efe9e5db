"""Distinguishability, quantum-theory oracles and the V^2 + D^2 report."""

import math
from collections.abc import Sequence

import numpy as np
import pandas as pd

from src.analysis.fringes import fit_visibility
from src.experiment.dataset import GammaDataset
from src.models.schemas import SUMMARY_COLUMNS, DualityReport, Mode
from src.utils.errors import InsufficientDataError, InvalidArgumentError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

MIN_BLOCKED_EVENTS = 100


def _check_r(r: float) -> None:
    if not 0.0 <= r <= 0.5:
        raise InvalidArgumentError(f"R must be in [0, 0.5], got {r}")


def v_theory(r: float) -> float:
    """Visibility 2 sqrt(R (1 - R))."""
    _check_r(r)
    return 2.0 * math.sqrt(r * (1.0 - r))


def d_theory(r: float) -> float:
    """Distinguishability 1 - 2R."""
    _check_r(r)
    return 1.0 - 2.0 * r


def oracle_intensity(phi: float, r: float, phase_offset: float = 0.0) -> tuple[float, float]:
    """Normalized intensities (i0, i1) at the two detectors."""
    i0 = 0.5 * (1.0 - v_theory(r) * math.cos(phi - phase_offset))
    return i0, 1.0 - i0


def _blocked_row(rows: pd.DataFrame, mode: Mode) -> pd.Series:
    match = rows[rows["mode"] == mode.value]
    if match.empty:
        raise InsufficientDataError(f"missing {mode.value} row")
    row = match.iloc[0]
    if row["n"] < MIN_BLOCKED_EVENTS:
        raise InsufficientDataError(
            f"{mode.value} row has {row['n']} events, need at least {MIN_BLOCKED_EVENTS}"
        )
    return row


def distinguishability(rows: pd.DataFrame) -> tuple[float, float]:
    """
    D from the two blocked-arm rows.

    ``D = 1/2 (|p(D0|arm0) - p(D0|arm1)| + |p(D1|arm0) - p(D1|arm1)|)``,
    where the arm-0 frequencies come from the run with arm 1 blocked.

    Args:
        rows: CountTable holding a blocked_arm0 and a blocked_arm1 row

    Returns:
        Tuple of (d_hat, standard error)

    Raises:
        InsufficientDataError: If a row is missing or has fewer than 100 events
    """
    arm0 = _blocked_row(rows, Mode.BLOCKED_ARM1)
    arm1 = _blocked_row(rows, Mode.BLOCKED_ARM0)
    n0 = float(arm0["n"])
    n1 = float(arm1["n"])
    p0 = np.array([arm0["n_d0"], arm0["n_d1"]], dtype=float) / n0
    p1 = np.array([arm1["n_d0"], arm1["n_d1"]], dtype=float) / n1
    d_hat = 0.5 * float(np.abs(p0 - p1).sum())

    var = _binomial_var(p0[0], n0) + _binomial_var(p1[0], n1)
    return min(d_hat, 1.0), math.sqrt(var)


def _binomial_var(p: float, n: float) -> float:
    # Floor keeps a nonzero error when a run is perfectly sorted
    return max(p * (1.0 - p), 0.25 / n) / n


def distinguishability_from_labels(gamma: GammaDataset) -> float:
    """
    D estimated from the path labels of a stream of events.

    Uses ``p(x | y)`` over the recorded labels instead of blocked arms.
    Labels are simulation-only; the estimate is for comparison.
    """
    frame = gamma.frame
    if frame.empty:
        raise InsufficientDataError("no events")
    probs = []
    for label in (0, 1):
        sel = frame[frame["y"] == label]
        if sel.empty:
            raise InsufficientDataError(f"no events with path label {label}")
        p_d0 = float((sel["x"] == 0).mean())
        probs.append(np.array([p_d0, 1.0 - p_d0]))
    return 0.5 * float(np.abs(probs[0] - probs[1]).sum())


def duality_report(
    counts: pd.DataFrame,
    blocked: pd.DataFrame,
    r_grid: Sequence[float],
    voltages: Sequence[float] | None = None,
) -> list[DualityReport]:
    """
    V, D and V^2 + D^2 for every entry of ``r_grid``.

    Args:
        counts: Closed-configuration CountTable rows for all R
        blocked: Blocked-arm rows for all R
        r_grid: R values in report order (repeats allowed)
        voltages: Optional EOM voltage per grid entry, same length as ``r_grid``

    Returns:
        One DualityReport per grid entry

    Raises:
        InvalidArgumentError: If ``voltages`` and ``r_grid`` differ in length
    """
    if voltages is not None and len(voltages) != len(r_grid):
        raise InvalidArgumentError(
            f"{len(voltages)} voltages for an R grid of {len(r_grid)} points"
        )
    labels: Sequence[float | None] = voltages if voltages is not None else [None] * len(r_grid)
    reports = []
    for r, voltage in zip(r_grid, labels, strict=True):
        closed = counts[(counts["r"] == r) & (counts["config"] == "closed")]
        fit = fit_visibility(closed)
        d_hat, d_err = distinguishability(blocked[blocked["r"] == r])
        v_hat = fit.v_reported
        report = DualityReport(
            r=r,
            voltage=voltage,
            v_hat=v_hat,
            v_err=fit.v_err,
            d_hat=d_hat,
            d_err=d_err,
            v2=v_hat**2,
            d2=d_hat**2,
            v2_plus_d2=v_hat**2 + d_hat**2,
        )
        logger.info(f"R={r}: V={v_hat:.4f} D={d_hat:.4f} V^2+D^2={report.v2_plus_d2:.4f}")
        reports.append(report)
    return reports


def reports_to_frame(reports: Sequence[DualityReport]) -> pd.DataFrame:
    """Summary table with the summary-file columns."""
    return pd.DataFrame([report.model_dump() for report in reports], columns=SUMMARY_COLUMNS)
