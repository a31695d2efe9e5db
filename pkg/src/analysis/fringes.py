"""Fringe visibility from count tables.

The normalized intensity ``I = N_x / N`` is fitted to
``c * (1 - V cos(Phi - phi0))`` by linear least squares on the basis
``[1, cos Phi, sin Phi]``: ``I = c + a cos Phi + b sin Phi`` with
``V = sqrt(a^2 + b^2) / c`` and ``phi0 = atan2(-b, -a)``. Standard errors
come from binomial counting noise propagated through the fit.
"""

import math

import numpy as np
import pandas as pd

from src.models.schemas import FringeFit
from src.utils.errors import InsufficientDataError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

MIN_DISTINCT_PHI = 3
RECOMMENDED_DISTINCT_PHI = 8

_PATH_COLUMNS = {
    "n_d0_path0": ("n_d0_path0", "n_d1_path0"),
    "n_d1_path0": ("n_d0_path0", "n_d1_path0"),
    "n_d0_path1": ("n_d0_path1", "n_d1_path1"),
    "n_d1_path1": ("n_d0_path1", "n_d1_path1"),
}


def normalized_intensity(rows: pd.DataFrame, column: str = "n_d0") -> tuple[np.ndarray, np.ndarray]:
    """
    Intensity of ``column`` and its denominator for each row.

    Detector totals are divided by N; path-split columns by the number of
    events with that path label.

    Returns:
        Tuple of (intensity, denominator) arrays
    """
    if column in ("n_d0", "n_d1"):
        denom = rows["n"].to_numpy(dtype=float)
    elif column in _PATH_COLUMNS:
        first, second = _PATH_COLUMNS[column]
        denom = rows[first].to_numpy(dtype=float) + rows[second].to_numpy(dtype=float)
    else:
        raise ValueError(f"unknown count column {column!r}")
    counts = rows[column].to_numpy(dtype=float)
    if np.any(denom <= 0):
        raise InsufficientDataError(f"rows with zero events for {column}")
    return counts / denom, denom


def visibility_maxmin(intensity: np.ndarray) -> float:
    """(I_max - I_min) / (I_max + I_min); biased high under noise."""
    i_max = float(np.max(intensity))
    i_min = float(np.min(intensity))
    total = i_max + i_min
    return (i_max - i_min) / total if total > 0.0 else 0.0


def fit_visibility(rows: pd.DataFrame, column: str = "n_d0") -> FringeFit:
    """
    Fit a sinusoidal fringe to the normalized counts of ``rows``.

    Args:
        rows: CountTable rows of one configuration over Phi
        column: Count column to fit (``n_d0``, ``n_d1`` or a path split)

    Returns:
        FringeFit with the least-squares visibility and the max-min estimate

    Raises:
        InsufficientDataError: If fewer than 3 distinct Phi values are present
    """
    phi = rows["phi_rad"].to_numpy(dtype=float)
    distinct = np.unique(np.round(np.mod(phi, 2.0 * math.pi), 12)).size
    if distinct < MIN_DISTINCT_PHI:
        raise InsufficientDataError(
            f"fringe fit needs at least {MIN_DISTINCT_PHI} distinct phase values, got {distinct}"
        )
    if distinct < RECOMMENDED_DISTINCT_PHI:
        logger.warning(f"Fringe fit on only {distinct} phase values; visibility is poorly bound")

    intensity, denom = normalized_intensity(rows, column)
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    coef, *_ = np.linalg.lstsq(design, intensity, rcond=None)
    c, a, b = (float(v) for v in coef)
    fitted = design @ coef
    residuals = intensity - fitted

    # Binomial variance at the fitted intensity, floored so exact 0/1 points still count
    p = np.clip(fitted, 0.0, 1.0)
    var = np.maximum(p * (1.0 - p), 0.25 / denom) / denom
    gram_inv = np.linalg.pinv(design.T @ design)
    cov = gram_inv @ (design.T * var) @ design @ gram_inv

    amplitude = math.hypot(a, b)
    if c <= 0.0:
        raise InsufficientDataError(f"non-positive fitted baseline c={c}")
    v_hat = amplitude / c
    if amplitude > 0.0:
        grad = np.array([-amplitude / c**2, a / (c * amplitude), b / (c * amplitude)])
        v_err = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    else:
        v_err = math.sqrt(max((cov[1, 1] + cov[2, 2]) / 2.0, 0.0)) / c
    phase_offset = math.atan2(-b, -a) % (2.0 * math.pi) if amplitude > 0.0 else 0.0

    fit = FringeFit(
        v_hat=v_hat,
        v_err=v_err,
        phase_offset=phase_offset,
        baseline=c,
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        v_maxmin=visibility_maxmin(intensity),
        n_points=int(phi.size),
    )
    logger.debug(f"Fringe fit on {column}: V={fit.v_hat:.4f} +/- {fit.v_err:.4f}")
    return fit


def fringe_deviation(rows: pd.DataFrame, fit: FringeFit, v_model: float) -> np.ndarray:
    """
    Per-row deviation of N0/N from ``0.5 * (1 - v_model cos(Phi - phi0))``.

    ``phi0`` is taken from ``fit``, so only the visibility is compared.
    """
    intensity, _ = normalized_intensity(rows, "n_d0")
    phi = rows["phi_rad"].to_numpy(dtype=float)
    model = 0.5 * (1.0 - v_model * np.cos(phi - fit.phase_offset))
    return intensity - model
