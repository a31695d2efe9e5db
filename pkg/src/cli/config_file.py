"""Run configuration from a flat ``key = value`` file overridden by CLI flags."""

import hashlib
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, ValidationError

from src.config import RUNS_DIR, settings
from src.models.schemas import DEFAULT_PHI_STEPS, ExperimentConfig, phase_grid
from src.optics.passive import DEFAULT_BETA_DEG, DEFAULT_V_PI, reflectivity_from_voltage
from src.utils.errors import ConfigurationError, InvalidArgumentError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

CONFIG_KEYS = frozenset(
    {
        "r",
        "voltage",
        "beta_deg",
        "v_pi",
        "mode",
        "phi_start",
        "phi_end",
        "phi_steps",
        "events",
        "seed",
        "alpha",
        "hwp_deg",
        "warmup",
        "out_dir",
        "trace",
        "gamma",
        "jobs",
        "eom_schedule",
        "fresh_state_per_point",
    }
)

DUALITY_R_GRID = (0.0, 0.05, 0.1, 0.2, 0.3, 0.43, 0.5)

# ExperimentConfig field -> config key reported in errors
_FIELD_KEYS = {
    "warmup_fraction": "warmup",
    "hwp_angle": "hwp_deg",
    "phi_grid": "phi_steps",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class Entry:
    """Raw value of one key and the file line it came from (None for flags)."""

    value: Any
    line: int | None = None


class RunConfig(BaseModel):
    """Everything one CLI invocation needs."""

    model_config = ConfigDict(frozen=True)

    command: str
    experiment: ExperimentConfig
    r_grid: tuple[float, ...]
    voltages: tuple[float, ...] | None = None
    beta_deg: float = DEFAULT_BETA_DEG
    v_pi: float = DEFAULT_V_PI
    out_dir: Path = RUNS_DIR
    trace: bool = False
    gamma: bool = False
    jobs: int = 1

    @property
    def run_id(self) -> str:
        """Digest of the data-relevant settings; output location is left out."""
        payload = self.model_dump_json(exclude={"out_dir", "trace", "gamma", "jobs"})
        return hashlib.blake2b(payload.encode("utf-8"), digest_size=6).hexdigest()

    def experiment_for(self, r: float) -> ExperimentConfig:
        return ExperimentConfig.model_validate({**self.experiment.model_dump(), "r": r})


def read_config_file(path: Path) -> dict[str, Entry]:
    """
    Parse ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigurationError: On unreadable files, malformed lines, unknown or
            repeated keys
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError("config", f"cannot read {path}: {exc}") from exc

    entries: dict[str, Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError("config", f"expected 'key = value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigurationError(key, "unknown key", lineno)
        if key in entries:
            first = entries[key].line
            raise ConfigurationError(key, f"repeated (first set on line {first})", lineno)
        if not value:
            raise ConfigurationError(key, "missing value", lineno)
        entries[key] = Entry(value, lineno)
    return entries


class _Values:
    """Typed access to merged entries with key/line-aware errors."""

    def __init__(self, entries: Mapping[str, Entry]) -> None:
        self.entries = entries

    def line(self, key: str) -> int | None:
        entry = self.entries.get(key)
        return entry.line if entry else None

    def _convert(self, key: str, default: Any, kind: type) -> Any:
        entry = self.entries.get(key)
        if entry is None:
            return default
        if isinstance(entry.value, kind) and not isinstance(entry.value, bool):
            return entry.value
        try:
            return kind(str(entry.value).strip())
        except ValueError as exc:
            raise ConfigurationError(
                key, f"expected {kind.__name__}, got {entry.value!r}", entry.line
            ) from exc

    def get_float(self, key: str, default: float) -> float:
        value = float(self._convert(key, default, float))
        if not math.isfinite(value):
            raise ConfigurationError(key, f"must be finite, got {value}", self.line(key))
        return value

    def get_int(self, key: str, default: int) -> int:
        return int(self._convert(key, default, int))

    def get_str(self, key: str, default: str) -> str:
        entry = self.entries.get(key)
        return default if entry is None else str(entry.value).strip()

    def get_bool(self, key: str, default: bool) -> bool:
        entry = self.entries.get(key)
        if entry is None:
            return default
        if isinstance(entry.value, bool):
            return entry.value
        text = str(entry.value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigurationError(key, f"expected a boolean, got {entry.value!r}", entry.line)

    def get_floats(self, key: str) -> tuple[float, ...] | None:
        entry = self.entries.get(key)
        if entry is None:
            return None
        values = []
        for item in str(entry.value).split(","):
            text = item.strip()
            try:
                value = float(text)
            except ValueError as exc:
                raise ConfigurationError(key, f"not a number: {text!r}", entry.line) from exc
            if not math.isfinite(value):
                raise ConfigurationError(key, f"must be finite, got {value}", entry.line)
            values.append(value)
        return tuple(values)


def _merge(flags: Mapping[str, Any], file_entries: Mapping[str, Entry]) -> dict[str, Entry]:
    merged = dict(file_entries)
    for key, value in flags.items():
        if key in CONFIG_KEYS and value is not None:
            merged[key] = Entry(value)
    return merged


def _r_grid(values: _Values, command: str) -> tuple[tuple[float, ...], tuple[float, ...] | None]:
    r_list = values.get_floats("r")
    v_list = values.get_floats("voltage")
    if r_list is not None and v_list is not None:
        raise ConfigurationError(
            "voltage", "give either r or voltage, not both", values.line("voltage")
        )

    if v_list is not None:
        beta = math.radians(values.get_float("beta_deg", DEFAULT_BETA_DEG))
        v_pi = values.get_float("v_pi", DEFAULT_V_PI)
        try:
            r_from_v = tuple(reflectivity_from_voltage(v, beta, v_pi) for v in v_list)
        except InvalidArgumentError as exc:
            raise ConfigurationError("voltage", str(exc), values.line("voltage")) from exc
        return r_from_v, v_list

    if r_list is None:
        r_list = DUALITY_R_GRID if command == "duality" else (0.5,)
    for r in r_list:
        if not 0.0 <= r <= 0.5:
            raise ConfigurationError("r", "r out of range [0,0.5]", values.line("r"))
    return r_list, None


def parse_config(
    flags: Mapping[str, Any] | None = None,
    config_file: Path | None = None,
    command: str = "sweep",
) -> RunConfig:
    """
    Build the run configuration.

    Flags override file keys; keys absent from both take the defaults
    (alpha 0.99, 10000 events, 36 phase points over [0, 2 pi), HWP at 45
    degrees, delayed-choice mode).

    Args:
        flags: Flag values keyed like the config file (None = not given)
        config_file: Optional ``key = value`` file
        command: ``sweep`` or ``duality``

    Returns:
        Validated RunConfig

    Raises:
        ConfigurationError: Naming the offending key (and line for file keys)
    """
    file_entries = read_config_file(config_file) if config_file is not None else {}
    values = _Values(_merge(flags or {}, file_entries))

    r_grid, voltages = _r_grid(values, command)
    if not r_grid:
        raise ConfigurationError("r", "empty R grid", values.line("r"))

    phi_steps = values.get_int("phi_steps", DEFAULT_PHI_STEPS)
    if phi_steps < 1:
        raise ConfigurationError("phi_steps", "must be >= 1", values.line("phi_steps"))
    phi_grid = phase_grid(
        values.get_float("phi_start", 0.0), values.get_float("phi_end", 2.0 * math.pi), phi_steps
    )

    experiment_fields = {
        "r": r_grid[0],
        "mode": values.get_str("mode", "delayed_choice"),
        "phi_grid": tuple(phi_grid),
        "events": values.get_int("events", 10_000),
        "seed": values.get_int("seed", settings.default_seed),
        "alpha": values.get_float("alpha", 0.99),
        "hwp_angle": math.radians(values.get_float("hwp_deg", 45.0)),
        "warmup_fraction": values.get_float("warmup", 0.0),
        "eom_schedule": values.get_str("eom_schedule", "random"),
        "fresh_state_per_point": values.get_bool("fresh_state_per_point", True),
    }
    try:
        experiment = ExperimentConfig.model_validate(experiment_fields)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = str(error["loc"][0]) if error["loc"] else "config"
        key = _FIELD_KEYS.get(field, field)
        raise ConfigurationError(key, error["msg"], values.line(key)) from exc

    jobs = values.get_int("jobs", settings.n_jobs)
    if jobs == 0:
        raise ConfigurationError("jobs", "must be non-zero", values.line("jobs"))

    run = RunConfig(
        command=command,
        experiment=experiment,
        r_grid=r_grid,
        voltages=voltages,
        beta_deg=values.get_float("beta_deg", DEFAULT_BETA_DEG),
        v_pi=values.get_float("v_pi", DEFAULT_V_PI),
        out_dir=Path(values.get_str("out_dir", str(RUNS_DIR))),
        trace=values.get_bool("trace", False),
        gamma=values.get_bool("gamma", False),
        jobs=jobs,
    )
    logger.debug(f"Parsed {command} config: {run.model_dump_json()}")
    return run
