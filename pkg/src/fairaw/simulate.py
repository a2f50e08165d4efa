"""Time integration of the coordinated and uncoordinated closed loops.

Coordinated (rank-one anti-windup)::

    dx/dt = -x + B sat(u) + w
    dz/dt =  x + beta * 1 1^T dz(u)
    u     = -P x - R z

Uncoordinated runs replace the broadcast term by the local ``beta * dz(u_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _dopri
from .errors import NonFiniteState, StepUnderflow, ValidationError
from .model import (
    ClosedLoopState,
    ControllerGains,
    CouplingMatrix,
    check_dimensions,
    control_law,
    deadzone,
    saturate,
)

_CHUNK_STEPS = 1_000_000
_CHUNK_RECORDS = 4096


def rhs_coordinated(state: ClosedLoopState, coupling: CouplingMatrix, w, gains: ControllerGains):
    """Return ``(dx/dt, dz/dt)`` with the broadcast anti-windup term."""
    check_dimensions(coupling, state, gains)
    u = control_law(state, gains)
    dx = -state.x + coupling.b @ saturate(u) + np.asarray(w, dtype=float)
    # rank-one term: one scalar added to every integrator
    dz = state.x + gains.beta * np.sum(deadzone(u))
    return dx, dz


def rhs_uncoordinated(state: ClosedLoopState, coupling: CouplingMatrix, w, gains: ControllerGains):
    """Return ``(dx/dt, dz/dt)`` with purely local anti-windup."""
    check_dimensions(coupling, state, gains)
    u = control_law(state, gains)
    dx = -state.x + coupling.b @ saturate(u) + np.asarray(w, dtype=float)
    dz = state.x + gains.beta * deadzone(u)
    return dx, dz


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Piecewise-linear disturbance ``w(t)``, clamped outside its breakpoints.

    A constant disturbance is a schedule with a single breakpoint.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if times.ndim != 1 or values.shape[0] != times.shape[0]:
            raise ValidationError("schedule needs one disturbance vector per breakpoint")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValidationError("schedule breakpoint times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValidationError("schedule must be finite")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, w) -> "DisturbanceSchedule":
        w = np.atleast_1d(np.asarray(getattr(w, "w", w), dtype=float))
        return cls(np.array([0.0]), w[None, :])

    @classmethod
    def piecewise_linear(cls, breakpoints) -> "DisturbanceSchedule":
        """Build from an ordered sequence of ``(time, w_vector)`` pairs."""
        times = [float(t) for t, _ in breakpoints]
        values = [np.atleast_1d(np.asarray(v, dtype=float)) for _, v in breakpoints]
        return cls(np.array(times), np.array(values))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def is_constant(self) -> bool:
        return self.times.size == 1

    def __call__(self, t: float) -> np.ndarray:
        out = np.empty(self.n)
        _dopri.disturbance_at(float(t), self.times, self.values, out)
        return out


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 1e6
    initial_step: float = 1e-4
    min_step: float = 1e-14
    max_step: float = math.inf
    rtol: float = 1e-8
    atol: float = 1e-10
    stop_abs: float = 1e-8
    stop_rel: float = 1e-6
    rel_floor: float = 1e-12
    sample_stride: int = 1
    # keep only the initial and final states when False
    store_trajectory: bool = True
    # False runs to the horizon regardless of the stopping rule
    stop_at_equilibrium: bool = True

    def __post_init__(self):
        for name in ("horizon", "initial_step", "min_step", "max_step", "rtol", "atol",
                     "stop_abs", "stop_rel", "rel_floor"):
            v = getattr(self, name)
            if not v > 0:
                raise ValidationError(f"simulation setting {name} must be positive, got {v}")
        if self.min_step > self.max_step:
            raise ValidationError("min_step exceeds max_step")
        if int(self.sample_stride) < 1:
            raise ValidationError("sample_stride must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    sat_u: np.ndarray
    sum_dz: np.ndarray

    @classmethod
    def from_states(cls, t, x, z, gains: ControllerGains) -> "Trajectory":
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float).reshape(t.size, -1)
        z = np.asarray(z, dtype=float).reshape(t.size, -1)
        u = -gains.p * x - gains.r * z
        sat_u = saturate(u)
        return cls(t, x, z, u, sat_u, (u - sat_u).sum(axis=1))

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class SimulationResult:
    converged: bool
    t_final: float
    final_state: ClosedLoopState
    trajectory: Trajectory
    coordinated: bool = True
    steps: int = 0
    distance_to_equilibrium: float | None = None
    meta: dict = field(default_factory=dict)


_VARIANTS = {
    "coordinated": True,
    "uncoordinated": False,
    rhs_coordinated: True,
    rhs_uncoordinated: False,
}


def integrate(
    variant,
    initial: ClosedLoopState,
    schedule,
    coupling: CouplingMatrix,
    gains: ControllerGains,
    config: SimulationConfig | None = None,
    reference_x0=None,
) -> SimulationResult:
    """Integrate the closed loop until the stopping rule holds or the horizon ends.

    ``variant`` is ``rhs_coordinated``/``rhs_uncoordinated`` or their names.
    ``schedule`` may also be a plain disturbance vector. Raises StepUnderflow
    or NonFiniteState; a run that hits the horizon returns ``converged=False``.
    """
    try:
        coordinated = _VARIANTS[variant]
    except (KeyError, TypeError):
        raise ValidationError(f"unknown closed-loop variant {variant!r}") from None
    config = config or SimulationConfig()
    if not isinstance(schedule, DisturbanceSchedule):
        schedule = DisturbanceSchedule.constant(schedule)
    check_dimensions(coupling, initial, gains, schedule)

    n = coupling.n
    y = np.concatenate([initial.x, initial.z])
    b = np.ascontiguousarray(coupling.b)
    wt = np.ascontiguousarray(schedule.times)
    wv = np.ascontiguousarray(schedule.values)
    p = np.ascontiguousarray(gains.p)
    r = np.ascontiguousarray(gains.r)
    stride = int(config.sample_stride)
    cap = _CHUNK_RECORDS if config.store_trajectory else 0
    rec = np.empty((cap, 2 * n + 1))

    records = [np.concatenate([[0.0], y])[None, :]]
    t, h, count = 0.0, float(config.initial_step), 0
    while True:
        status, t, h, count, n_rec = _dopri.run_chunk(
            y, t, h, float(config.horizon), b, wt, wv, p, r, gains.beta, coordinated,
            config.rtol, config.atol, config.min_step, config.max_step,
            config.stop_abs if config.stop_at_equilibrium else -1.0,
            config.stop_rel, config.rel_floor,
            stride, count, _CHUNK_STEPS, rec,
        )
        if n_rec:
            records.append(rec[:n_rec].copy())
        if status == _dopri.CONTINUE:
            continue
        if status == _dopri.UNDERFLOW:
            raise StepUnderflow(f"step size {h:.3e} below minimum at t={t:.6g}")
        if status == _dopri.NONFINITE:
            raise NonFiniteState(f"state became non-finite near t={t:.6g}")
        break

    y0 = records[0][0, 1:]
    if status == _dopri.CONVERGED and count == 1 and np.array_equal(y, y0):
        # nothing moved: the trajectory is just the starting row
        records = records[:1]
    elif records[-1][-1, 0] != t:
        records.append(np.concatenate([[t], y])[None, :])
    data = np.vstack(records)
    traj = Trajectory.from_states(data[:, 0], data[:, 1 : n + 1], data[:, n + 1 :], gains)
    final = ClosedLoopState(y[:n].copy(), y[n:].copy())
    dist = None
    if reference_x0 is not None:
        dist = float(np.max(np.abs(final.x - np.asarray(reference_x0, dtype=float))))
    return SimulationResult(
        converged=status == _dopri.CONVERGED,
        t_final=float(t),
        final_state=final,
        trajectory=traj,
        coordinated=coordinated,
        steps=int(count),
        distance_to_equilibrium=dist,
    )
