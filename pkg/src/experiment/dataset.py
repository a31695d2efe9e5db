"""Per-event dataset Gamma and the count tables derived from it."""

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.models.schemas import (
    COUNT_COLUMNS,
    Configuration,
    CountRow,
    ExperimentConfig,
    GammaMeta,
    Mode,
)
from src.utils.errors import InsufficientDataError

GAMMA_COLUMNS = ["n", "x", "y", "a", "merge_ch"]


@dataclass
class EventRecord:
    """Outcome of one detected event."""

    n: int
    x: int  # detector that fired
    y: int  # path label
    a: int  # EOM voltage applied
    merge_ch: int  # exit channel of the merge PBS (diagnostic)


@dataclass
class GammaDataset:
    """Events {x_n, y_n, A_n} of one (R, Phi) point in routing order."""

    frame: pd.DataFrame
    meta: GammaMeta

    @classmethod
    def from_records(cls, records: Iterable[EventRecord], meta: GammaMeta) -> "GammaDataset":
        rows = [(r.n, r.x, r.y, r.a, r.merge_ch) for r in records]
        frame = pd.DataFrame(rows, columns=GAMMA_COLUMNS).astype("int64")
        return cls(frame=frame, meta=meta)

    def __len__(self) -> int:
        return len(self.frame)

    def partition(self, a: int) -> "GammaDataset":
        """Events with A_n == a, same meta."""
        part = self.frame[self.frame["a"] == a].reset_index(drop=True)
        return GammaDataset(frame=part, meta=self.meta)

    def to_export_frame(self) -> pd.DataFrame:
        """Columns ``r, phi_rad, n, x, y, a, merge_ch`` for the gamma CSV."""
        out = self.frame.copy()
        out.insert(0, "phi_rad", self.meta.phi)
        out.insert(0, "r", self.meta.r)
        return out


def _configs_for(mode: Mode) -> list[Configuration]:
    if mode is Mode.DELAYED_CHOICE:
        return [Configuration.OPEN, Configuration.CLOSED]
    if mode is Mode.OPEN:
        return [Configuration.OPEN]
    return [Configuration.CLOSED]


def count_rows(gamma: GammaDataset, cfg: ExperimentConfig, run_id: str) -> list[CountRow]:
    """
    Count table rows of one point, one per configuration present in ``mode``.

    Delayed-choice runs yield an open row (A_n = 0) and a closed row
    (A_n = 1) from the same event stream.
    """
    x = gamma.frame["x"].to_numpy()
    y = gamma.frame["y"].to_numpy()
    a = gamma.frame["a"].to_numpy()

    rows = []
    for config in _configs_for(cfg.mode):
        sel = a == (1 if config is Configuration.CLOSED else 0)
        d0 = sel & (x == 0)
        d1 = sel & (x == 1)
        rows.append(
            CountRow(
                run_id=run_id,
                r=cfg.r,
                mode=cfg.mode,
                config=config,
                phi_rad=gamma.meta.phi,
                n=int(sel.sum()),
                n_d0=int(d0.sum()),
                n_d1=int(d1.sum()),
                n_d0_path0=int((d0 & (y == 0)).sum()),
                n_d0_path1=int((d0 & (y == 1)).sum()),
                n_d1_path0=int((d1 & (y == 0)).sum()),
                n_d1_path1=int((d1 & (y == 1)).sum()),
                seed=cfg.seed,
            )
        )
    return rows


def rows_to_frame(rows: Iterable[CountRow]) -> pd.DataFrame:
    """CountTable as a DataFrame with the count-file columns (enums as strings)."""
    records = [row.model_dump(mode="json") for row in rows]
    return pd.DataFrame(records, columns=COUNT_COLUMNS)


def single_channel_fraction(gamma: GammaDataset, warmup_fraction: float = 0.1) -> float:
    """
    Share of events leaving the merge PBS through its dominant channel.

    The first ``warmup_fraction`` of events is discarded.

    Raises:
        InsufficientDataError: If no events remain after the warm-up
    """
    if not 0.0 <= warmup_fraction < 1.0:
        raise ValueError(f"warmup_fraction must be in [0, 1), got {warmup_fraction}")
    channels = gamma.frame["merge_ch"].to_numpy()
    start = int(np.floor(warmup_fraction * len(channels)))
    kept = channels[start:]
    if kept.size == 0:
        raise InsufficientDataError("no events left after warm-up")
    share1 = float(np.count_nonzero(kept == 1)) / kept.size
    return max(share1, 1.0 - share1)
