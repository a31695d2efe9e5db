"""Command-line front end: phase sweeps and duality scans.

Exit codes: 0 success, 2 configuration error, 3 runtime or topology error,
4 I/O error.
"""

import argparse
import sys
from collections.abc import Sequence
from contextlib import ExitStack
from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path

import pandas as pd

from src import __version__
from src.analysis.duality import duality_report, reports_to_frame
from src.analysis.fringes import MIN_DISTINCT_PHI, fit_visibility
from src.cli.config_file import RunConfig, parse_config
from src.cli.writers import (
    output_path,
    write_counts,
    write_csv,
    write_gamma,
    write_manifest,
)
from src.config import RUNS_DIR, ensure_directories
from src.experiment.runner import run_duality_scan, run_phase_sweep
from src.models.schemas import FringeFit, RunManifest
from src.network.hooks import TraceRecorder
from src.utils.errors import (
    ConfigurationError,
    DegenerateMessageError,
    DegenerateStateError,
    HookOrderError,
    InsufficientDataError,
    InvalidArgumentError,
    OutputError,
    TopologyError,
)
from src.utils.logger import setup_logger
from src.utils.rng import GENERATOR_ID

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

_RUNTIME_ERRORS = (
    DegenerateMessageError,
    DegenerateStateError,
    TopologyError,
    HookOrderError,
    InsufficientDataError,
)

FIT_COLUMNS = ["r", "mode", "config", "column", *FringeFit.model_fields, "merge_single_channel"]


def _start_manifest(run: RunConfig) -> RunManifest:
    manifest = RunManifest(
        run_id=run.run_id,
        command=run.command,
        tool_version=__version__,
        seed=run.experiment.seed,
        generator=GENERATOR_ID,
        config=run.model_dump(mode="json"),
        started_at=datetime.now(UTC),
    )
    write_manifest(manifest, run.out_dir)
    return manifest


def _finish_manifest(manifest: RunManifest, run: RunConfig, files: dict[str, Path]) -> None:
    manifest.files = {kind: path.name for kind, path in files.items()}
    manifest.finished_at = datetime.now(UTC)
    write_manifest(manifest, run.out_dir)


def sweep_fits(counts: pd.DataFrame, merge_single_channel: float | None = None) -> pd.DataFrame:
    """
    Fringe fits per (R, configuration) of one phase sweep.

    Closed rows are also fitted per path label. Groups with fewer than three
    distinct phases are skipped with a warning, and so are columns with an
    empty row (the blocked arm's label, or a configuration that drew no
    events at some phase).

    Args:
        counts: CountTable of the sweep
        merge_single_channel: Lowest merge-PBS single-channel share over the
            points of the sweep, copied into every fit row

    Returns:
        Fits table with the ``FIT_COLUMNS`` columns
    """
    records = []
    for (r, mode, config), rows in counts.groupby(["r", "mode", "config"], sort=False):
        if rows["phi_rad"].nunique() < MIN_DISTINCT_PHI:
            logger.warning(f"R={r} {config}: too few phase points for a fringe fit")
            continue
        columns = ["n_d0"]
        if config == "closed":
            columns += ["n_d0_path0", "n_d0_path1"]
        for column in columns:
            try:
                fit = fit_visibility(rows, column=column)
            except InsufficientDataError as exc:
                logger.warning(f"R={r} {mode} {config}: no fit for {column} ({exc})")
                continue
            key = {"r": r, "mode": mode, "config": config, "column": column}
            records.append(
                {**key, **fit.model_dump(), "merge_single_channel": merge_single_channel}
            )
    return pd.DataFrame(records, columns=FIT_COLUMNS)


def cmd_sweep(run: RunConfig) -> dict[str, Path]:
    """Phase sweep for every R of the grid; writes counts and fits."""
    manifest = _start_manifest(run)
    files: dict[str, Path] = {}
    frames = []
    fits = []
    gammas = []
    with ExitStack() as stack:
        trace = None
        if run.trace:
            files["trace"] = output_path(run.out_dir, run.run_id, "trace")
            try:
                stream = stack.enter_context(files["trace"].open("w", encoding="utf-8"))
            except OSError as exc:
                raise OutputError(f"cannot open trace file: {exc}") from exc
            trace = TraceRecorder(stream)
        for r in run.r_grid:
            result = run_phase_sweep(
                run.experiment_for(r),
                run_id=run.run_id,
                n_jobs=run.jobs,
                keep_gamma=run.gamma,
                trace=trace,
            )
            frames.append(result.counts)
            fits.append(sweep_fits(result.counts, min(result.merge_single_channel)))
            gammas.extend(result.gammas)

    counts = pd.concat(frames, ignore_index=True)
    files["counts"] = write_counts(counts, output_path(run.out_dir, run.run_id, "counts"))
    files["fits"] = write_csv(
        pd.concat(fits, ignore_index=True), output_path(run.out_dir, run.run_id, "fits")
    )
    if run.gamma:
        files["gamma"] = write_gamma(gammas, output_path(run.out_dir, run.run_id, "gamma"))
    _finish_manifest(manifest, run, files)
    return files


def cmd_duality(run: RunConfig) -> dict[str, Path]:
    """Closed sweeps and blocked-arm runs over the R (or voltage) grid; writes the summary."""
    manifest = _start_manifest(run)
    scan = run_duality_scan(run.experiment, run.r_grid, run_id=run.run_id, n_jobs=run.jobs)
    counts = pd.concat([scan.counts, scan.blocked], ignore_index=True)
    reports = duality_report(scan.counts, scan.blocked, scan.r_grid, run.voltages)

    files = {
        "counts": write_counts(counts, output_path(run.out_dir, run.run_id, "counts")),
        "summary": write_csv(
            reports_to_frame(reports), output_path(run.out_dir, run.run_id, "summary")
        ),
    }
    _finish_manifest(manifest, run, files)
    return files


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the ``sweep`` and ``duality`` subcommands."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="key = value config file")
    common.add_argument("--r", type=str, help="Reflectivity R, or comma-separated list")
    common.add_argument("--voltage", type=str, help="EOM voltage(s) instead of R")
    common.add_argument("--beta-deg", dest="beta_deg", type=str, help="Wave plate angle (deg)")
    common.add_argument("--v-pi", dest="v_pi", type=str, help="Half-wave voltage (V)")
    common.add_argument(
        "--mode",
        type=str,
        help="delayed_choice | closed | open | blocked_arm0 | blocked_arm1",
    )
    common.add_argument("--phi-start", dest="phi_start", type=str, help="First phase (rad)")
    common.add_argument("--phi-end", dest="phi_end", type=str, help="Grid end, exclusive (rad)")
    common.add_argument("--phi-steps", dest="phi_steps", type=str, help="Number of phases")
    common.add_argument("--events", type=str, help="Events N per phase point")
    common.add_argument("--seed", type=str, help="Master seed")
    common.add_argument("--alpha", type=str, help="DLM learning parameter")
    common.add_argument("--hwp-deg", dest="hwp_deg", type=str, help="HWP fast axis (deg)")
    common.add_argument("--warmup", type=str, help="Warm-up fraction for diagnostics")
    common.add_argument(
        "--eom-schedule", dest="eom_schedule", type=str, help="random | alternating"
    )
    common.add_argument("--out-dir", dest="out_dir", type=str, help="Output directory")
    common.add_argument("--jobs", type=str, help="Worker count for phase points")
    common.add_argument(
        "--trace", action="store_true", default=None, help="Write the per-event trace"
    )
    common.add_argument(
        "--gamma", action="store_true", default=None, help="Write the per-event dataset"
    )

    parser = argparse.ArgumentParser(
        prog="wheeler", description="Event-by-event delayed-choice interferometer simulator"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="Phase sweep at fixed R")
    sub.add_parser("duality", parents=[common], help="V, D and V^2 + D^2 over an R grid")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """CLI entry point."""
    args = build_parser().parse_args(argv)

    try:
        run = parse_config(vars(args), config_file=args.config, command=args.command)
        if run.out_dir == RUNS_DIR:
            ensure_directories()
        logger.info(f"Run {run.run_id}: {run.command} over R={list(run.r_grid)}")
        files = cmd_sweep(run) if run.command == "sweep" else cmd_duality(run)
    except (ConfigurationError, InvalidArgumentError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except _RUNTIME_ERRORS as exc:
        logger.error(f"Run failed: {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO

    for kind, path in files.items():
        logger.info(f"{kind}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
