"""Result files of a CLI run.

All files of a run share the ``<run_id>_`` prefix. The manifest is written
first; CSV floats carry 17 significant digits so they read back exactly.
"""

from collections.abc import Iterable
from pathlib import Path

import pandas as pd

from src.experiment.dataset import GammaDataset
from src.models.schemas import COUNT_COLUMNS, RunManifest
from src.utils.errors import OutputError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

FLOAT_FORMAT = "%.17g"

FILE_SUFFIXES = {
    "manifest": "_manifest.json",
    "counts": "_counts.csv",
    "fits": "_fits.csv",
    "summary": "_summary.csv",
    "trace": "_trace.log",
    "gamma": "_gamma.csv",
}


def output_path(out_dir: Path, run_id: str, kind: str) -> Path:
    """Path of the ``kind`` file of run ``run_id``."""
    return out_dir / f"{run_id}{FILE_SUFFIXES[kind]}"


def _ensure_dir(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc


def write_manifest(manifest: RunManifest, out_dir: Path) -> Path:
    """Write (or rewrite) the manifest JSON."""
    _ensure_dir(out_dir)
    path = output_path(out_dir, manifest.run_id, "manifest")
    try:
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write manifest {path}: {exc}") from exc
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """UTF-8 CSV with a header row and lossless floats."""
    _ensure_dir(path.parent)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_counts(counts: pd.DataFrame, path: Path) -> Path:
    """Counts file with exactly the CountTable columns."""
    return write_csv(counts[COUNT_COLUMNS], path)


def write_gamma(gammas: Iterable[GammaDataset], path: Path) -> Path:
    """Per-event datasets of all points, in point order."""
    frames = [gamma.to_export_frame() for gamma in gammas]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return write_csv(frame, path)


def read_counts(path: Path) -> pd.DataFrame:
    """Read a counts file back with exact floats."""
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
