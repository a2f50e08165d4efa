"""Existence check and closed-form construction of the fair equilibrium."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionViolated, ResidualTooLarge, ValidationError
from .model import (
    ControllerGains,
    CouplingMatrix,
    Disturbance,
    check_dimensions,
    deadzone,
    saturate,
)

STRICT_TOL = 1e-9
TIE_TOL = 1e-9
RESIDUAL_TOL = 1e-9


class Status(str, enum.Enum):
    STRICTLY_SATISFIED = "StrictlySatisfied"
    WEAKLY_SATISFIED = "WeaklySatisfied"
    VIOLATED = "Violated"


@dataclass(frozen=True)
class ExistenceStatus:
    status: Status
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs

    @property
    def strict(self) -> bool:
        return self.status is Status.STRICTLY_SATISFIED


@dataclass(frozen=True)
class MaximizerSet:
    indices: tuple[int, ...]
    value: float
    unique: bool


@dataclass(frozen=True)
class EquilibriumPoint:
    x0: np.ndarray
    u0: np.ndarray
    z0: np.ndarray
    k: int
    residual_plant: float
    residual_integrator: float

    @property
    def level(self) -> float:
        """The common deviation shared by every agent."""
        return float(self.x0[0])


@dataclass(frozen=True)
class EquilibriumReport:
    existence: ExistenceStatus
    maximizers: MaximizerSet
    point: EquilibriumPoint | None
    a1_strict: bool
    a2_unique: bool
    warnings: tuple[str, ...] = field(default=())


def _projected(coupling: CouplingMatrix, w) -> np.ndarray:
    w = w.w if isinstance(w, Disturbance) else np.asarray(w, dtype=float)
    check_dimensions(coupling, w)
    return coupling.m @ w


def maximizing_set(coupling: CouplingMatrix, w, tie_tol: float = TIE_TOL) -> MaximizerSet:
    """Agents maximizing ``|dz(M_i w)| / (M_i 1)``, i.e. those hit hardest by ``w``.

    Indices are 0-based. Ties within ``tie_tol`` (relative) are all reported.
    """
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    ratios = np.abs(deadzone(_projected(coupling, w))) / coupling.row_sums
    value = float(ratios.max())
    if value == 0.0:
        return MaximizerSet(tuple(range(coupling.n)), 0.0, True)
    idx = tuple(int(i) for i in np.flatnonzero(ratios >= value * (1.0 - tie_tol)))
    return MaximizerSet(idx, value, len(idx) == 1)


def existence_condition(coupling: CouplingMatrix, w, strict_tol: float = STRICT_TOL) -> ExistenceStatus:
    """Compare ``max_i (M_i w - 1)/M_i 1`` against ``min_j (M_j w + 1)/M_j 1``."""
    if strict_tol <= 0:
        raise ValueError("strict_tol must be positive")
    mw = _projected(coupling, w)
    lhs = float(np.max((mw - 1.0) / coupling.row_sums))
    rhs = float(np.min((mw + 1.0) / coupling.row_sums))
    gap = rhs - lhs
    if gap > strict_tol:
        status = Status.STRICTLY_SATISFIED
    elif gap < -strict_tol:
        status = Status.VIOLATED
    else:
        status = Status.WEAKLY_SATISFIED
    return ExistenceStatus(status, lhs, rhs)


def equilibrium_residuals(coupling: CouplingMatrix, w, beta: float, x0, u0) -> tuple[float, float]:
    """Sup-norm residuals of the plant and integrator steady-state equations."""
    w = w.w if isinstance(w, Disturbance) else np.asarray(w, dtype=float)
    plant = -x0 + coupling.b @ saturate(u0) + w
    integ = x0 + beta * np.sum(deadzone(u0))
    return float(np.max(np.abs(plant))), float(np.max(np.abs(integ)))


def candidate_equilibrium(
    coupling: CouplingMatrix,
    w,
    gains: ControllerGains,
    k: int | None = None,
    *,
    strict_tol: float = STRICT_TOL,
    tie_tol: float = TIE_TOL,
) -> EquilibriumPoint:
    """Closed-form equilibrium for maximizing agent ``k``.

    ``k`` defaults to the first maximizer. A weakly satisfied existence
    condition is accepted (the point exists but need not be unique); a
    violated one raises ConditionViolated.
    """
    check_dimensions(coupling, gains)
    status = existence_condition(coupling, w, strict_tol)
    if status.status is Status.VIOLATED:
        raise ConditionViolated(
            f"disturbance admits no equilibrium: lhs={status.lhs:.6g} > rhs={status.rhs:.6g}"
        )
    kset = maximizing_set(coupling, w, tie_tol)
    if k is None:
        k = kset.indices[0]
    elif k not in kset.indices:
        raise ValidationError(f"k={k} is not a maximizing index {kset.indices}")

    mw = _projected(coupling, w)
    mk_w = mw[k]
    s_k = coupling.row_sums[k]
    dz_k = float(deadzone(mk_w))
    level = dz_k / s_k
    x0 = np.full(coupling.n, level)
    u0 = -mw + coupling.row_sums * level
    u0[k] = -float(saturate(mk_w)) - dz_k / (gains.beta * s_k)
    z0 = -(u0 + gains.p * x0) / gains.r

    rp, ri = equilibrium_residuals(coupling, w, gains.beta, x0, u0)
    if rp > RESIDUAL_TOL or ri > RESIDUAL_TOL:
        raise ResidualTooLarge(f"candidate residuals plant={rp:.3e}, integrator={ri:.3e}")
    for a in (x0, u0, z0):
        a.setflags(write=False)
    return EquilibriumPoint(x0, u0, z0, int(k), rp, ri)


def equilibrium_report(
    coupling: CouplingMatrix,
    w,
    gains: ControllerGains,
    *,
    strict_tol: float = STRICT_TOL,
    tie_tol: float = TIE_TOL,
) -> EquilibriumReport:
    existence = existence_condition(coupling, w, strict_tol)
    kset = maximizing_set(coupling, w, tie_tol)
    a1 = existence.strict
    warnings = []
    point = None
    if a1:
        point = candidate_equilibrium(coupling, w, gains, strict_tol=strict_tol, tie_tol=tie_tol)
    elif existence.status is Status.WEAKLY_SATISFIED:
        warnings.append(
            "existence condition holds only with equality; an equilibrium exists but "
            "uniqueness is not guaranteed (candidate_equilibrium can still compute it)"
        )
    else:
        warnings.append("existence condition violated: the closed loop has no equilibrium")
    if not kset.unique:
        warnings.append(
            f"maximizing index is tied among agents {list(kset.indices)}; "
            "uniqueness of the equilibrium is not guaranteed"
        )
    if not gains.conjecture_ok:
        warnings.append("gains do not satisfy p_i > r_i for all agents")
    return EquilibriumReport(existence, kset, point, a1, kset.unique, tuple(warnings))
