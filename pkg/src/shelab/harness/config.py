"""Declarative experiment configuration.

One TOML file maps onto :class:`ExperimentConfig`. Every table is parsed
strictly: a key that is not a field of the matching section is an error, so a
misspelt tolerance can never fall back to its default silently.

Example::

    name = "pam_q1"
    experiment = "lambda"
    seed = 20261019
    n_paths = 64

    [grid]
    n_points = 128

    [time]
    horizon = 200.0
    dt = "dx2"

    [sigma]
    kind = "linear"
    q = 1.0

    [initial]
    kind = "constant"
    c = 1.0
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..fields import GridFunction, TorusGrid
from ..solver import SCHEMES, RenormSchedule, SigmaSpec, SimulationConfig, default_dt

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("simulate", "ensemble", "lambda", "osc", "ratio", "peaks", "valleys", "clt")


class ConfigError(ValueError):
    """The configuration is malformed or internally inconsistent."""


# --------------------------------------------------------------------------- calibration


def load_calibration() -> dict:
    """Frozen pilot-calibrated thresholds (see ``scripts/calibrate.py``)."""
    text = resources.files("shelab").joinpath("data/calibration.json").read_text()
    return json.loads(text)


def _calibrated(key: str) -> float:
    try:
        return float(load_calibration()["values"][key])
    except (FileNotFoundError, KeyError) as exc:
        raise ConfigError(f"no calibrated value for {key!r}; run scripts/calibrate.py") from exc


# --------------------------------------------------------------------------- sections


@dataclass(frozen=True)
class TimeSection:
    horizon: float = 1.0
    # number, "auto" (default policy) or "dx2" (dt = dx^2)
    dt: float | str = "auto"
    scheme: str = "semi_implicit_em"
    clamp_rel: float = 1e-12
    renormalize: bool = True


@dataclass(frozen=True)
class SigmaSection:
    kind: str = "linear"
    q: float = 1.0
    knots: tuple = ()
    slopes: tuple = ()


@dataclass(frozen=True)
class InitialSection:
    """``constant(c)``, ``spike(mass, width)`` or ``table(values)``.

    A spike puts ``mass`` uniformly on the cells of the interval of length
    ``width`` starting at ``centre`` and ``floor`` (relative to the spike
    height) everywhere else, so the profile stays strictly positive. If
    ``height`` is given, ``width = mass / height``.
    """

    kind: str = "constant"
    c: float = 1.0
    mass: float = 1.0
    width: float = 0.0
    height: float = 0.0
    centre: float = 0.0
    floor: float = 1e-9
    values: tuple = ()


@dataclass(frozen=True)
class ScheduleSection:
    alpha: float = 6.0
    beta: float = 3.5
    enabled: bool = True


@dataclass(frozen=True)
class SamplingSection:
    """Observation times: log-spaced, uniform grid, explicit list, renormalisation epochs."""

    geometric: int = 40
    first: float = 0.01
    uniform: float = 0.0
    times: tuple = ()
    epochs: bool = True
    every_step: bool = False


@dataclass(frozen=True)
class ParamsSection:
    """Experiment parameters and assertion thresholds.

    ``"calibrated"`` thresholds are read from the frozen pilot calibration.
    """

    # failure semantics
    max_excluded_fraction: float = 0.01
    clamp_budget: float = 1e-5
    # lambda
    second_profile: float = 5.0
    window: tuple = ()
    rel_tolerance: float = 0.15
    # osc
    osc_threshold: float = 0.05
    osc_window_start: float = 50.0
    osc_report_start: float = 10.0
    osc_powers: tuple = (1.0, 2.0, 10.0)
    # ratio
    ratio_beta: float = 4.0
    ratio_c: float | str = "calibrated"
    ratio_window_start: float = 10.0
    # peaks / valleys
    peak_n: float = 64.0
    gamma: float = 1.5
    k_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    peak_k: float | str = "calibrated"
    frequency_threshold: float = 0.05
    micro_factor: float = 3.0
    # ensemble martingale checks
    checkpoints: tuple = ()
    qv_tolerance: float = 0.10
    # clt
    clt_time: float = 100.0
    clt_min_paths: int = 200
    clt_p_threshold: float = 0.01


_SECTIONS = {
    "time": TimeSection,
    "sigma": SigmaSection,
    "initial": InitialSection,
    "schedule": ScheduleSection,
    "sampling": SamplingSection,
    "params": ParamsSection,
}
_TOP_KEYS = {"name", "experiment", "seed", "n_paths", "output_dir", "grid"} | set(_SECTIONS)


def _strict(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    clean = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    return cls(**clean)


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    grid: TorusGrid
    seed: int = 0
    n_paths: int = 1
    output_dir: str = ""
    time: TimeSection = field(default_factory=TimeSection)
    sigma: SigmaSection = field(default_factory=SigmaSection)
    initial: InitialSection = field(default_factory=InitialSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    params: ParamsSection = field(default_factory=ParamsSection)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.time.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.time.scheme!r}")
        if not self.time.horizon > 0:
            raise ConfigError("horizon must be positive")
        # fail early on anything the domain constructors reject
        try:
            self.sigma_spec()
            self.schedule_spec()
            self.u0()
            dt = self.dt
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if dt > self.time.horizon:
            raise ConfigError(f"dt={dt} exceeds the horizon")

    # derived objects

    def sigma_spec(self) -> SigmaSpec:
        s = self.sigma
        if s.kind == "zero":
            return SigmaSpec.zero()
        if s.kind == "linear":
            return SigmaSpec.linear(s.q)
        if s.kind == "piecewise_linear":
            return SigmaSpec.piecewise_linear(s.knots, s.slopes)
        raise ConfigError(f"unknown sigma kind {s.kind!r}")

    def schedule_spec(self) -> RenormSchedule:
        s = self.schedule
        return RenormSchedule(s.alpha, s.beta, s.enabled)

    @property
    def dt(self) -> float:
        dt = self.time.dt
        if dt == "auto":
            return default_dt(self.grid, self.sigma_spec())
        if dt == "dx2":
            return self.grid.spacing**2
        if isinstance(dt, str):
            raise ConfigError(f"dt must be a number, 'auto' or 'dx2', got {dt!r}")
        if not dt > 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        return float(dt)

    def u0(self, c: float | None = None) -> GridFunction:
        """Initial profile; ``c`` overrides the constant of a constant profile."""
        return make_profile(self.initial if c is None else replace(self.initial, kind="constant", c=c),
                            self.grid)

    def sample_times(self, horizon: float | None = None) -> tuple:
        horizon = self.time.horizon if horizon is None else horizon
        s = self.sampling
        dt = self.dt
        times = [0.0, horizon]
        if s.every_step:
            times.extend(np.arange(int(round(horizon / dt)) + 1) * dt)
        if s.geometric > 0 and s.first < horizon:
            times.extend(np.geomspace(s.first, horizon, s.geometric))
        if s.uniform > 0:
            times.extend(np.arange(0.0, horizon + 0.5 * s.uniform, s.uniform))
        times.extend(float(t) for t in s.times if 0 <= t <= horizon)
        if s.epochs:
            times.extend(self.schedule_spec().raw_epochs(horizon, dt))
        return tuple(sorted({float(t) for t in times if t <= horizon + 1e-12}))

    def simulation(self, u0: GridFunction | None = None, horizon: float | None = None) -> SimulationConfig:
        horizon = self.time.horizon if horizon is None else horizon
        return SimulationConfig(
            self.grid, self.dt, horizon, self.u0() if u0 is None else u0, self.time.scheme,
            sample_times=self.sample_times(horizon), clamp_rel=self.time.clamp_rel,
            renormalize=self.time.renormalize,
        )

    def threshold(self, key: str) -> float:
        value = getattr(self.params, key)
        return _calibrated(key) if value == "calibrated" else float(value)

    # identity

    def to_dict(self) -> dict:
        out = {
            "name": self.name, "experiment": self.experiment, "seed": self.seed,
            "n_paths": self.n_paths, "grid": {"n_points": self.grid.n_points},
        }
        for key in _SECTIONS:
            out[key] = {k: list(v) if isinstance(v, tuple) else v
                        for k, v in asdict(getattr(self, key)).items()}
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (the output directory is not part of it)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, n_paths=None, output_dir=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if n_paths is not None:
            changes["n_paths"] = int(n_paths)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes)


def make_profile(section: InitialSection, grid: TorusGrid) -> GridFunction:
    kind = section.kind
    n = grid.n_points
    if kind == "constant":
        if not (section.c > 0 and math.isfinite(section.c)):
            raise ConfigError(f"constant profile needs c > 0, got {section.c}")
        return GridFunction(grid, np.full(n, float(section.c)))
    if kind == "spike":
        if not section.mass > 0:
            raise ConfigError("spike mass must be positive")
        width = section.mass / section.height if section.height > 0 else section.width
        cells = int(round(width / grid.spacing))
        if cells < 1 or abs(cells * grid.spacing - width) > 1e-9 * max(1.0, width):
            raise ConfigError(
                f"spike of width {width:g} is not representable on cells of width {grid.spacing:g}"
            )
        if cells > n:
            raise ConfigError("spike wider than the torus")
        if not 0 < section.floor < 1:
            raise ConfigError("spike floor must lie in (0, 1)")
        height = section.mass / width
        values = np.full(n, section.floor * height)
        start = grid.index_of(section.centre) - cells // 2
        values[np.arange(start, start + cells) % n] = height
        # keep the total mass exact after adding the floor
        values *= section.mass / (grid.spacing * values.sum())
        return GridFunction(grid, values)
    if kind == "table":
        values = np.asarray(section.values, dtype=float)
        if values.shape != (n,):
            raise ConfigError(f"table profile needs {n} values, got {values.size}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ConfigError("table profile must be finite and strictly positive")
        return GridFunction(grid, values)
    raise ConfigError(f"unknown initial profile kind {kind!r}")


def parse_config(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    for key in ("name", "experiment", "grid"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    grid_table = data["grid"]
    if not isinstance(grid_table, dict) or set(grid_table) != {"n_points"}:
        raise ConfigError("[grid] must contain exactly n_points")
    try:
        grid = TorusGrid(int(grid_table["n_points"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sections = {k: _strict(cls, data.get(k, {}), k) for k, cls in _SECTIONS.items()}
    try:
        return ExperimentConfig(
            name=str(data["name"]), experiment=str(data["experiment"]), grid=grid,
            seed=int(data.get("seed", 0)), n_paths=int(data.get("n_paths", 1)),
            output_dir=str(data.get("output_dir", "")), **sections,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_config_path(path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled example config."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("shelab").joinpath("configs", p.name)
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file {path} not found")


def load_config(path: str | Path) -> ExperimentConfig:
    p = resolve_config_path(path)
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(data)
