"""TOML run configuration.

Layout (every table optional, ``schema_version`` required)::

    schema_version = 1
    seed = 42
    out = "out"

    [system]
    B = [[2.0, -1.0], [-0.5, 2.0]]   # or B_file = "coupling.csv"
    w = [3.0, 3.0]                   # exclusive with [system.schedule]
    p = 1.0                          # scalar or per-agent list
    r = 1.5
    beta = 1.0
    x0 = [0.0, 0.0]                  # initial state for `simulate`
    z0 = [0.0, 0.0]

    [system.schedule]
    times = [0.0, 10.0]
    w = [[0.0, 0.0], [-5.0, -5.0]]

    [simulation]    # SimulationConfig fields, plus `uncoordinated = true`
    [study]         # RandomStudyConfig fields
    [heating]       # alpha, comfort, p, r, beta, B, profile = [[t, T], ...]
    [tolerances]    # strict, tie, lp
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .equilibrium import STRICT_TOL, TIE_TOL
from .errors import ParseError, ValidationError
from .experiments import HeatingScenario, RandomStudyConfig
from .model import ClosedLoopState, ControllerGains, CouplingMatrix, validate_coupling
from .simulate import DisturbanceSchedule, SimulationConfig

SCHEMA_VERSION = 1

DEFAULT_P = 1.0
DEFAULT_R = 1.5
DEFAULT_BETA = 1.0

_TOP_KEYS = {"schema_version", "seed", "out", "system", "simulation", "study", "heating", "tolerances"}
_SYSTEM_KEYS = {"B", "B_file", "w", "schedule", "p", "r", "beta", "x0", "z0"}
_TOL_KEYS = {"strict", "tie", "lp"}
_HEATING_KEYS = {"alpha", "comfort", "p", "r", "beta", "B", "profile"}


@dataclass(frozen=True)
class Tolerances:
    strict: float = STRICT_TOL
    tie: float = TIE_TOL
    lp: float = 1e-9


@dataclass(frozen=True)
class RunConfiguration:
    schema_version: int = SCHEMA_VERSION
    seed: int | None = None
    out: Path = Path("out")
    coupling: CouplingMatrix | None = None
    gains: ControllerGains | None = None
    schedule: DisturbanceSchedule | None = None
    initial: ClosedLoopState | None = None
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    uncoordinated: bool = False
    study: RandomStudyConfig = field(default_factory=lambda: RandomStudyConfig(n_systems=100, ics_per_system=10, seed=42))
    heating: HeatingScenario = field(default_factory=HeatingScenario)
    tolerances: Tolerances = field(default_factory=Tolerances)
    source: Path | None = None

    def require_system(self) -> None:
        if self.coupling is None:
            raise ValidationError("this command needs a [system] table with B or B_file")
        if self.schedule is None:
            raise ValidationError("this command needs a disturbance: system.w or [system.schedule]")

    @property
    def constant_w(self) -> np.ndarray | None:
        if self.schedule is not None and self.schedule.is_constant:
            return self.schedule.values[0]
        return None


def _line_of(exc: Exception) -> int | None:
    m = re.search(r"line (\d+)", str(exc))
    return int(m.group(1)) if m else None


def _check_keys(table: dict, allowed: set, where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ParseError(f"unknown key (allowed: {', '.join(sorted(allowed))})", field=f"{where}{key}")


def _vector(value, name: str, n: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("expected a number or list of numbers", field=name) from None
    if arr.ndim == 0 and n is not None:
        arr = np.full(n, float(arr))
    if arr.ndim != 1:
        raise ParseError("expected a 1-D list of numbers", field=name)
    if n is not None and arr.shape[0] != n:
        raise ValidationError(f"{name}: length {arr.shape[0]} does not match n={n}")
    return arr


def _matrix(value, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("expected a list of equal-length numeric rows", field=name) from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name}: matrix must be square, got shape {arr.shape}")
    return arr


def _load_matrix_file(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"system.B_file: cannot read {path}: {exc}") from exc
    delim = "," if "," in text else None
    try:
        arr = np.loadtxt(path, delimiter=delim, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"cannot parse matrix file {path}: {exc}", field="system.B_file") from exc
    return _matrix(arr, "system.B_file")


def _coupling(raw: np.ndarray, name: str) -> CouplingMatrix:
    try:
        return validate_coupling(raw)
    except ValidationError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def _dataclass_from(cls, table: dict, where: str, **overrides):
    names = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(table, set(names) - set(overrides), where)
    kwargs = dict(table)
    kwargs.update(overrides)
    if "n_range" in kwargs:
        kwargs["n_range"] = tuple(kwargs["n_range"])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParseError(str(exc), field=where.rstrip(".")) from exc
    except ValidationError as exc:
        raise ValidationError(f"{where.rstrip('.')}: {exc}") from exc


def _parse_system(table: dict, base: Path):
    _check_keys(table, _SYSTEM_KEYS, "system.")
    if "B" in table and "B_file" in table:
        raise ValidationError("system: give either B or B_file, not both")
    if "B" in table:
        coupling = _coupling(_matrix(table["B"], "system.B"), "system.B")
    elif "B_file" in table:
        coupling = _coupling(_load_matrix_file(base / table["B_file"]), "system.B_file")
    else:
        raise ValidationError("system: missing coupling matrix B (or B_file)")
    n = coupling.n

    if "w" in table and "schedule" in table:
        raise ValidationError("system: exactly one disturbance specification allowed (w or schedule)")
    schedule = None
    if "w" in table:
        schedule = DisturbanceSchedule.constant(_vector(table["w"], "system.w", n))
    elif "schedule" in table:
        sched = table["schedule"]
        _check_keys(sched, {"times", "w"}, "system.schedule.")
        times = _vector(sched.get("times"), "system.schedule.times")
        values = np.asarray(sched.get("w"), dtype=float)
        if values.ndim != 2 or values.shape != (times.size, n):
            raise ValidationError(f"system.schedule.w: expected shape ({times.size}, {n}), got {values.shape}")
        try:
            schedule = DisturbanceSchedule(times, values)
        except ValidationError as exc:
            raise ValidationError(f"system.schedule: {exc}") from exc

    try:
        gains = ControllerGains(
            _vector(table.get("p", DEFAULT_P), "system.p", n),
            _vector(table.get("r", DEFAULT_R), "system.r", n),
            float(table.get("beta", DEFAULT_BETA)),
        )
    except ValidationError as exc:
        raise ValidationError(f"system gains: {exc}") from exc
    initial = ClosedLoopState(
        _vector(table.get("x0", 0.0), "system.x0", n),
        _vector(table.get("z0", 0.0), "system.z0", n),
    )
    return coupling, gains, schedule, initial


def _parse_heating(table: dict) -> HeatingScenario:
    _check_keys(table, _HEATING_KEYS, "heating.")
    kwargs = {k: float(table[k]) for k in ("alpha", "comfort", "p", "r", "beta") if k in table}
    if "B" in table:
        b = _matrix(table["B"], "heating.B")
        _coupling(b, "heating.B")
        kwargs["b"] = b
    if "profile" in table:
        prof = np.asarray(table["profile"], dtype=float)
        if prof.ndim != 2 or prof.shape[1] != 2 or prof.shape[0] < 2:
            raise ValidationError("heating.profile: expected a list of [time, temperature] pairs")
        if np.any(np.diff(prof[:, 0]) <= 0):
            raise ValidationError("heating.profile: times must be strictly increasing")
        kwargs["profile"] = tuple((float(t), float(T)) for t, T in prof)
    return HeatingScenario(**kwargs)


def config_from_dict(data: dict, base: Path = Path("."), source: Path | None = None) -> RunConfiguration:
    _check_keys(data, _TOP_KEYS, "")
    version = data.get("schema_version")
    if version is None:
        raise ParseError("missing schema_version", field="schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")

    kwargs: dict = {"schema_version": version, "source": source}
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    if "out" in data:
        kwargs["out"] = base / data["out"]
    if "system" in data:
        kwargs["coupling"], kwargs["gains"], kwargs["schedule"], kwargs["initial"] = _parse_system(
            data["system"], base
        )
    if "simulation" in data:
        sim = dict(data["simulation"])
        kwargs["uncoordinated"] = bool(sim.pop("uncoordinated", False))
        kwargs["simulation"] = _dataclass_from(SimulationConfig, sim, "simulation.")
    study = dict(data.get("study", {}))
    study.setdefault("n_systems", 100)
    study.setdefault("ics_per_system", 10)
    study.setdefault("seed", kwargs.get("seed", 42))
    kwargs["study"] = _dataclass_from(RandomStudyConfig, study, "study.")
    if "heating" in data:
        kwargs["heating"] = _parse_heating(data["heating"])
    if "tolerances" in data:
        _check_keys(data["tolerances"], _TOL_KEYS, "tolerances.")
        kwargs["tolerances"] = Tolerances(**{k: float(v) for k, v in data["tolerances"].items()})
    return RunConfiguration(**kwargs)


def parse_config(path) -> RunConfiguration:
    """Read and validate a TOML run configuration.

    Raises ParseError (syntax, unknown keys, wrong types) or ValidationError
    (well-formed but violating an invariant, e.g. a non-square B).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=_line_of(exc)) from exc
    return config_from_dict(data, base=path.parent, source=path)
