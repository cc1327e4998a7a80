"""
Run configuration: INI parsing, validation and command-line overrides.
"""

import configparser
import dataclasses
import logging
import os
from dataclasses import dataclass, field

from config.settings import DEFAULT_SETTINGS, get_default
from core.errors import ConfigError
from core.grid import Acquisition, Grid, build_gradient_model, frequency_band, receiver_line, smooth_model
from core.grid_handler import GridFileHandler
from core.inversion import InversionConfig
from core.synthesis import SourceEvent

logger = logging.getLogger(__name__)

AUTO = ("auto", "none", "")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, with paths resolved against the config file directory."""

    source_path: str
    output_dir: str
    data_path: str
    model0_path: str
    true_model_path: str
    grid: Grid
    velocity_top: float
    velocity_gradient: float
    v_min: float
    v_max: float
    anomaly: tuple
    initial_smoothing: float
    receiver_depth: float
    receiver_x_start: float
    receiver_x_stop: float
    receiver_spacing: float
    f_min: float
    f_max: float
    f_step: float
    record_duration: float
    dt: float
    inversion: InversionConfig
    events: tuple = field(default_factory=tuple)
    snr_db: float = None
    seed: int = 0
    location_tolerance: float = None

    def build_acquisition(self):
        receivers = receiver_line(
            self.grid, self.receiver_depth, self.receiver_x_start, self.receiver_x_stop, self.receiver_spacing
        )
        omegas = frequency_band(self.f_min, self.f_max, self.f_step)
        return Acquisition(self.grid, receivers, omegas, self.record_duration)

    def build_true_model(self):
        """True model from file when configured, otherwise the analytic gradient model."""
        if self.true_model_path:
            model = GridFileHandler.read_model(self.true_model_path)
            if model.grid != self.grid:
                raise ConfigError(f"Model file grid {model.grid} differs from the configured grid {self.grid}")
            return model
        return build_gradient_model(
            self.grid, self.velocity_top, self.velocity_gradient, self.v_min, self.v_max, self.anomaly
        )

    def build_initial_model(self):
        """Starting model: model0 file, or the true model smoothed by ``initial_smoothing`` cells."""
        if self.model0_path:
            model = GridFileHandler.read_model(self.model0_path)
            if model.grid != self.grid:
                raise ConfigError(f"Model file grid {model.grid} differs from the configured grid {self.grid}")
            return model
        return smooth_model(self.build_true_model(), self.initial_smoothing)

    @property
    def tolerance_m(self):
        return self.location_tolerance if self.location_tolerance is not None else self.grid.h


def _raw(parser, section, key):
    if parser.has_option(section, key):
        return parser.get(section, key).strip()
    return get_default(section, key)


def _is_auto(value):
    return value is None or (isinstance(value, str) and value.strip().lower() in AUTO)


def _float(parser, section, key, optional=False):
    value = _raw(parser, section, key)
    if optional and _is_auto(value):
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}") from exc


def _int(parser, section, key):
    value = _raw(parser, section, key)
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}") from exc


def _bool(parser, section, key):
    value = _raw(parser, section, key)
    if isinstance(value, bool):
        return value
    lowered = str(value).lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"{section}.{key} must be a boolean, got {value!r}")


def _path(parser, key, base_dir, must_exist=False):
    value = _raw(parser, "paths", key)
    if _is_auto(value):
        return None
    path = value if os.path.isabs(value) else os.path.normpath(os.path.join(base_dir, value))
    if must_exist and not os.path.exists(path):
        raise ConfigError(f"paths.{key} points to a missing file: {path}")
    return path


def parse_events(text):
    """
    Parse ``z x f_central t_central [amplitude]`` groups separated by semicolons or newlines.

    Returns:
        tuple: SourceEvent instances
    """
    events = []
    for chunk in str(text or "").replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) not in (4, 5):
            raise ConfigError(f"Event '{chunk}' must read 'z x f_central t_central [amplitude]'")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"Event '{chunk}' contains a non-numeric value") from exc
        events.append(SourceEvent(*values))
    return tuple(events)


def _parse_anomaly(parser):
    value = _raw(parser, "model", "anomaly")
    if _is_auto(value):
        return None
    parts = str(value).replace(",", " ").split()
    if len(parts) != 5:
        raise ConfigError("model.anomaly must read 'z0 z1 x0 x1 dv' or none")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError("model.anomaly contains a non-numeric value") from exc


def _inversion_config(parser):
    try:
        return InversionConfig(
            lam=_float(parser, "inversion", "lambda", optional=True),
            gamma=_float(parser, "inversion", "gamma", optional=True),
            gamma_ratio=_float(parser, "inversion", "gamma_ratio"),
            n_inner=_int(parser, "inversion", "n_inner"),
            n_outer=_int(parser, "inversion", "n_outer"),
            update_model=_bool(parser, "inversion", "update_model"),
            peak_threshold=_float(parser, "inversion", "peak_threshold"),
            peak_min_distance=_float(parser, "inversion", "peak_min_distance", optional=True),
            tv_weight=_float(parser, "inversion", "tv_weight"),
            source_weight=_float(parser, "inversion", "source_weight", optional=True),
            auto_source_fraction=_float(parser, "inversion", "auto_source_fraction"),
            berhu_epsilon=_float(parser, "inversion", "berhu_epsilon", optional=True),
            berhu_fraction=_float(parser, "inversion", "berhu_fraction"),
            compensate_illumination=_bool(parser, "inversion", "compensate_illumination"),
            illumination_floor=_float(parser, "inversion", "illumination_floor"),
            refine_picks=_bool(parser, "inversion", "refine_picks"),
            relocation_sweeps=_int(parser, "inversion", "relocation_sweeps"),
            prune_factor=_float(parser, "inversion", "prune_factor"),
            prune_tolerance=_float(parser, "inversion", "prune_tolerance"),
            source_tolerance=_float(parser, "inversion", "source_tolerance"),
            data_tolerance=_float(parser, "inversion", "data_tolerance"),
            tv_max_iter=_int(parser, "inversion", "tv_max_iter"),
            tv_tolerance=_float(parser, "inversion", "tv_tolerance"),
            solver=str(_raw(parser, "inversion", "solver")),
            threads=_int(parser, "inversion", "threads"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(file_path, overrides=None):
    """
    Load and validate a run configuration.

    Args:
        file_path (str): Path to the INI file
        overrides (dict or None): Command-line values for ``seed``, ``threads``,
            ``output``, ``snr_db`` and ``update_model``; None values are ignored

    Returns:
        RunConfig: The validated configuration
    """
    if not os.path.isfile(file_path):
        raise ConfigError(f"Configuration file not found: {file_path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(file_path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"Cannot parse {file_path}: {exc}") from exc

    unknown = [s for s in parser.sections() if s not in DEFAULT_SETTINGS]
    if unknown:
        raise ConfigError(f"Unknown configuration sections: {', '.join(unknown)}")
    for section in parser.sections():
        extra = [k for k in parser.options(section) if k not in DEFAULT_SETTINGS[section]]
        if extra:
            raise ConfigError(f"Unknown keys in [{section}]: {', '.join(extra)}")

    base_dir = os.path.dirname(os.path.abspath(file_path))
    grid = Grid(
        _int(parser, "grid", "nz"),
        _int(parser, "grid", "nx"),
        _float(parser, "grid", "h"),
        _int(parser, "grid", "pml_width"),
    )

    snr_value = _raw(parser, "synthesis", "snr_db")
    snr_db = None if _is_auto(snr_value) else _float(parser, "synthesis", "snr_db")

    run_config = RunConfig(
        source_path=os.path.abspath(file_path),
        output_dir=_path(parser, "output", base_dir),
        data_path=_path(parser, "data", base_dir),
        model0_path=_path(parser, "model0", base_dir, must_exist=True),
        true_model_path=_path(parser, "true_model", base_dir, must_exist=True),
        grid=grid,
        velocity_top=_float(parser, "model", "velocity_top"),
        velocity_gradient=_float(parser, "model", "velocity_gradient"),
        v_min=_float(parser, "model", "v_min"),
        v_max=_float(parser, "model", "v_max"),
        anomaly=_parse_anomaly(parser),
        initial_smoothing=_float(parser, "model", "initial_smoothing"),
        receiver_depth=_float(parser, "acquisition", "receiver_depth"),
        receiver_x_start=_float(parser, "acquisition", "receiver_x_start", optional=True),
        receiver_x_stop=_float(parser, "acquisition", "receiver_x_stop", optional=True),
        receiver_spacing=_float(parser, "acquisition", "receiver_spacing", optional=True),
        f_min=_float(parser, "acquisition", "f_min"),
        f_max=_float(parser, "acquisition", "f_max"),
        f_step=_float(parser, "acquisition", "f_step"),
        record_duration=_float(parser, "acquisition", "record_duration"),
        dt=_float(parser, "acquisition", "dt"),
        inversion=_inversion_config(parser),
        events=parse_events(_raw(parser, "synthesis", "events")),
        snr_db=snr_db,
        seed=_int(parser, "synthesis", "seed"),
        location_tolerance=_float(parser, "report", "location_tolerance", optional=True),
    )
    run_config = apply_overrides(run_config, overrides or {})
    validate_run_config(run_config)
    return run_config


def apply_overrides(run_config, overrides):
    """Return a copy of ``run_config`` with command-line values applied."""
    changes = {}
    inversion_changes = {}
    if overrides.get("seed") is not None:
        changes["seed"] = int(overrides["seed"])
    if overrides.get("snr_db") is not None:
        changes["snr_db"] = float(overrides["snr_db"])
    if overrides.get("output") is not None:
        changes["output_dir"] = os.path.abspath(overrides["output"])
    if overrides.get("threads") is not None:
        inversion_changes["threads"] = int(overrides["threads"])
    if overrides.get("update_model") is not None:
        inversion_changes["update_model"] = bool(overrides["update_model"])
    if inversion_changes:
        try:
            changes["inversion"] = dataclasses.replace(run_config.inversion, **inversion_changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return dataclasses.replace(run_config, **changes) if changes else run_config


def validate_run_config(run_config):
    """Check the cross-field invariants that single values cannot."""
    if not run_config.v_min > 0 or run_config.v_min > run_config.v_max:
        raise ConfigError(f"Velocity bounds must satisfy 0 < v_min <= v_max, got {run_config.v_min}, {run_config.v_max}")
    if run_config.initial_smoothing < 0:
        raise ConfigError("model.initial_smoothing must be nonnegative")
    if not (run_config.record_duration > 0 and run_config.dt > 0):
        raise ConfigError("record_duration and dt must be positive")
    if run_config.f_min <= 0:
        raise ConfigError("f_min must be positive")
    frequency_band(run_config.f_min, run_config.f_max, run_config.f_step)
    run_config.build_acquisition()
    for event in run_config.events:
        run_config.grid.interior_index_at(event.z, event.x)
    if not run_config.output_dir:
        raise ConfigError("paths.output must be set")
