import copy
import json
import logging
import math
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import tomli

from qwork_pipeline.dynamics.fockspace import Tolerances
from qwork_pipeline.utils.errors import ConfigError

logger = logging.getLogger(__name__)

BaseConfigType = Literal[
    "default.toml", "repeated.toml", "repeated_noisy.toml", "null.toml"
]
VALID_BASE_CONFIGS = typing.get_args(BaseConfigType)
BASE_CONFIGS_FOLDER = Path(__file__).resolve().parent / "configs"
DEFAULT_CONFIGURATION = BASE_CONFIGS_FOLDER / "default.toml"

ScheduleKind = Literal["tanh", "repeated_tanh", "text"]
VALID_SCHEDULE_KINDS = typing.get_args(ScheduleKind)
TimeUnits = Literal["us", "internal"]
VALID_TIME_UNITS = typing.get_args(TimeUnits)


@dataclass(frozen=True)
class TrapConfig:
    frequency_khz: float
    eta: float
    rabi_max_khz: float
    phi_over_pi: float
    mean_phonon_number: float


@dataclass(frozen=True)
class ScheduleConfig:
    """Rabi-frequency schedule; values are fractions of rabi_max, times in us."""

    kind: ScheduleKind
    start: float
    end: float
    T_us: float
    duration_us: float
    t_slow_us: float
    t_fast_us: float
    cycles: int
    text: str


@dataclass(frozen=True)
class MeasurementConfig:
    du_us: float
    samples: int
    tau_us: float
    noise_sigma: float
    seed: int


@dataclass(frozen=True)
class NumericsConfig:
    dim: int
    n_pad: int
    steps: int
    zero_padding: int
    hermiticity_tol: float
    unitarity_tol: float
    trace_tol: float
    tail_tol: float
    edge_tol: float
    jarzynski_tail_tol: float

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(
            hermiticity=self.hermiticity_tol,
            unitarity=self.unitarity_tol,
            trace=self.trace_tol,
            tail=self.tail_tol,
            edge=self.edge_tol,
            jarzynski_tail=self.jarzynski_tail_tol,
            n_pad=self.n_pad,
        )


@dataclass(frozen=True)
class FitConfig:
    rel_threshold: float
    snr: float
    line_tolerance: float
    weighted: bool
    crosstalk_correction: bool


@dataclass(frozen=True)
class OutputConfig:
    time_units: TimeUnits
    plots: bool


@dataclass(frozen=True)
class RunConfig:
    name: str
    trap: TrapConfig
    schedule_forward: ScheduleConfig
    backward_text: str
    measurement: MeasurementConfig
    numerics: NumericsConfig
    fit: FitConfig
    output: OutputConfig
    data: dict


def _merge(defaults: dict, overrides: dict, path: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        dotted = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown configuration key '{dotted}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{dotted}' must be a table")
            merged[key] = _merge(defaults[key], value, f"{dotted}.")
        else:
            merged[key] = value
    return merged


def _load_file(path: Path) -> dict:
    try:
        if path.suffix == ".json":
            with open(path, "r") as f:
                return json.load(f)
        with open(path, "rb") as f:
            return tomli.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"configuration file not found : {path}") from e
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not parse {path} : {e}") from e


class RunConfigManager:
    """
    Run configuration backed by a TOML (or resolved JSON) file.

    Keys missing from the file fall back to the bundled default configuration;
    unknown keys are rejected. Values can be read and overridden with dotted
    keys, e.g. ``manager.set("measurement.seed", 7)``.
    """

    def __init__(
        self,
        base_config: BaseConfigType | None = None,
        config_path: str | Path | None = None,
    ):
        self._validate(base_config, config_path)
        self.base_config = base_config
        if config_path is not None:
            self.file_path = Path(config_path)
        else:
            self.file_path = self._get_base_config_path()
        self.defaults = _load_file(DEFAULT_CONFIGURATION)
        self.data = _merge(self.defaults, _load_file(self.file_path))

    def _validate(self, base_config, config_path):
        if base_config is None and config_path is None:
            raise ConfigError("A `base_config` or `config_path` must be provided")
        if base_config is not None and config_path is not None:
            logger.info(
                "Both `base_config` and `config_path` provided, "
                "config_path will be loaded"
            )

    def _get_base_config_path(self):
        """get the path to the specified base config"""
        if self.base_config not in VALID_BASE_CONFIGS:
            raise ConfigError(
                f"specified base config '{self.base_config}' is not one of "
                f"{VALID_BASE_CONFIGS}"
            )
        return BASE_CONFIGS_FOLDER / self.base_config

    @property
    def name(self) -> str:
        return self.file_path.stem

    def get(self, key, default=None, separator="."):
        """Get a nested value from the configuration data."""
        data = self.data
        for k in key.split(separator):
            if not isinstance(data, dict) or k not in data:
                return default
            data = data[k]
        return data

    def set(self, key, value, separator="."):
        """Set a nested value; the key must exist in the default configuration."""
        keys = key.split(separator)
        data = self.data
        for k in keys[:-1]:
            if k not in data or not isinstance(data[k], dict):
                raise ConfigError(f"unknown configuration section '{k}' in '{key}'")
            data = data[k]
        if keys[-1] not in data:
            raise ConfigError(f"unknown configuration key '{key}'")
        data[keys[-1]] = value

    def save(self, save_path):
        """Write the resolved configuration as JSON; `config_path` loads it back."""
        return write_resolved_config(self.data, save_path)

    def to_run_config(self) -> RunConfig:
        """Validated, immutable view of the configuration.

        Raises
        ------
        ConfigError
            On ill-typed or out-of-range values.
        """
        d = self.data
        trap = TrapConfig(
            frequency_khz=_number(d, "trap.frequency_khz", positive=True),
            eta=_number(d, "trap.eta", positive=True),
            rabi_max_khz=_number(d, "trap.rabi_max_khz", positive=True),
            phi_over_pi=_number(d, "trap.phi_over_pi"),
            mean_phonon_number=_number(d, "trap.mean_phonon_number", positive=True),
        )
        kind = _choice(d, "schedule_forward.kind", VALID_SCHEDULE_KINDS)
        schedule = ScheduleConfig(
            kind=kind,
            start=_number(d, "schedule_forward.start"),
            end=_number(d, "schedule_forward.end"),
            T_us=_number(d, "schedule_forward.T_us", positive=True),
            duration_us=_number(d, "schedule_forward.duration_us", minimum=0),
            t_slow_us=_number(d, "schedule_forward.t_slow_us", positive=True),
            t_fast_us=_number(d, "schedule_forward.t_fast_us", positive=True),
            cycles=_integer(d, "schedule_forward.cycles", minimum=0),
            text=_string(d, "schedule_forward.text"),
        )
        if kind == "text" and not schedule.text.strip():
            raise ConfigError("schedule_forward.text is required when kind = 'text'")
        measurement = MeasurementConfig(
            du_us=_number(d, "measurement.du_us", positive=True),
            samples=_integer(d, "measurement.samples", minimum=2),
            tau_us=_number(d, "measurement.tau_us", positive=True),
            noise_sigma=_number(d, "measurement.noise_sigma", minimum=0),
            seed=_integer(d, "measurement.seed", minimum=0),
        )
        numerics = NumericsConfig(
            dim=_integer(d, "numerics.dim", minimum=2),
            n_pad=_integer(d, "numerics.n_pad", minimum=0),
            steps=_integer(d, "numerics.steps", minimum=0),
            zero_padding=_integer(d, "numerics.zero_padding", minimum=1),
            hermiticity_tol=_number(d, "numerics.hermiticity_tol", positive=True),
            unitarity_tol=_number(d, "numerics.unitarity_tol", positive=True),
            trace_tol=_number(d, "numerics.trace_tol", positive=True),
            tail_tol=_number(d, "numerics.tail_tol", positive=True),
            edge_tol=_number(d, "numerics.edge_tol", positive=True),
            jarzynski_tail_tol=_number(d, "numerics.jarzynski_tail_tol", positive=True),
        )
        if numerics.n_pad >= numerics.dim:
            raise ConfigError(
                f"numerics.n_pad ({numerics.n_pad}) must be smaller than "
                f"numerics.dim ({numerics.dim})"
            )
        rel_threshold = _number(d, "fit.rel_threshold", positive=True)
        if not rel_threshold < 1:
            raise ConfigError(
                f"fit.rel_threshold must lie in (0, 1), got {rel_threshold}"
            )
        fit = FitConfig(
            rel_threshold=rel_threshold,
            snr=_number(d, "fit.snr", minimum=0),
            line_tolerance=_number(d, "fit.line_tolerance", positive=True),
            weighted=_boolean(d, "fit.weighted"),
            crosstalk_correction=_boolean(d, "fit.crosstalk_correction"),
        )
        output = OutputConfig(
            time_units=_choice(d, "output.time_units", VALID_TIME_UNITS),
            plots=_boolean(d, "output.plots"),
        )
        return RunConfig(
            name=self.name,
            trap=trap,
            schedule_forward=schedule,
            backward_text=_string(d, "schedule_backward.text"),
            measurement=measurement,
            numerics=numerics,
            fit=fit,
            output=output,
            data=copy.deepcopy(self.data),
        )


def write_resolved_config(data: dict, save_path: str | Path) -> Path:
    """Dump configuration data as sorted JSON with infinities spelled "inf"."""
    save_path = Path(save_path)
    with open(save_path, "w") as f:
        json.dump(_jsonable(data), f, indent=2, sort_keys=True)
    logger.info(f"Written : {save_path}")
    return save_path


def _lookup(d: dict, key: str):
    section, name = key.split(".")
    return d[section][name]


def _number(d, key, positive=False, minimum=None) -> float:
    value = _lookup(d, key)
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        value = math.inf
    if (
        isinstance(value, bool)
        or not isinstance(value, (int, float))
        or math.isnan(value)
    ):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"'{key}' must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value!r}")
    return float(value)


def _integer(d, key, minimum=None) -> int:
    value = _lookup(d, key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value!r}")
    return value


def _boolean(d, key) -> bool:
    value = _lookup(d, key)
    if not isinstance(value, bool):
        raise ConfigError(f"'{key}' must be true or false, got {value!r}")
    return value


def _string(d, key) -> str:
    value = _lookup(d, key)
    if not isinstance(value, str):
        raise ConfigError(f"'{key}' must be a string, got {value!r}")
    return value


def _choice(d, key, valid) -> str:
    value = _lookup(d, key)
    if value not in valid:
        raise ConfigError(f"'{key}' must be one of {valid}, got {value!r}")
    return value


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value
