"""Core types for the saturated resource-sharing network

    dx/dt = -x + B sat(u) + w

and the scalar nonlinearities ``sat`` and ``dz``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import BadSignPattern, NotRowDominant, SingularOrNegativeInverse, ValidationError

INVERSE_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def saturate(v):
    """Clamp every entry to [-1, 1]."""
    return np.clip(np.asarray(v, dtype=float), -1.0, 1.0)


def deadzone(v):
    """``v - saturate(v)``; nonzero only where ``|v_i| > 1``."""
    v = np.asarray(v, dtype=float)
    return v - saturate(v)


@dataclass(frozen=True)
class CouplingMatrix:
    """A validated M-matrix ``b`` with its inverse ``m`` and row sums of ``m``.

    Build instances with :func:`validate_coupling`.
    """

    b: np.ndarray
    m: np.ndarray
    row_sums: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def dominance_margins(self) -> np.ndarray:
        """``b_ii - sum_{j != i} |b_ij|`` per row."""
        off = np.abs(self.b).sum(axis=1) - np.abs(np.diag(self.b))
        return np.diag(self.b) - off

    def inverse_residual(self) -> float:
        return float(np.max(np.abs(self.b @ self.m - np.eye(self.n))))


def validate_coupling(raw) -> CouplingMatrix:
    """Check the sign pattern and strict row dominance of ``raw`` and invert it.

    Raises BadSignPattern, NotRowDominant or SingularOrNegativeInverse.
    """
    b = np.array(raw, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 1:
        raise ValidationError(f"coupling matrix must be square with n >= 1, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValidationError("coupling matrix has non-finite entries")
    n = b.shape[0]
    diag = np.diag(b)
    bad_diag = np.flatnonzero(diag <= 0)
    if bad_diag.size:
        raise BadSignPattern(f"non-positive diagonal entry at row {bad_diag[0]}")
    off = b - np.diag(diag)
    pos = np.argwhere(off > 0)
    if pos.size:
        i, j = pos[0]
        raise BadSignPattern(f"positive off-diagonal entry b[{i},{j}] = {b[i, j]}")
    margins = diag - np.abs(off).sum(axis=1)
    weak = np.flatnonzero(margins <= 0)
    if weak.size:
        i = weak[0]
        raise NotRowDominant(f"row {i} is not strictly dominant (margin {margins[i]})")

    try:
        lu = scipy.linalg.lu_factor(b, check_finite=False)
        m = scipy.linalg.lu_solve(lu, np.eye(n), check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularOrNegativeInverse(f"inversion failed: {exc}") from exc
    if not np.all(np.isfinite(m)):
        raise SingularOrNegativeInverse("inverse has non-finite entries")
    resid = np.max(np.abs(b @ m - np.eye(n)))
    if resid > INVERSE_TOL:
        raise SingularOrNegativeInverse(f"|B M - I| = {resid:.3e} exceeds {INVERSE_TOL}")
    if m.min() < -INVERSE_TOL:
        raise SingularOrNegativeInverse(f"inverse has negative entry {m.min():.3e}")
    row_sums = m.sum(axis=1)
    if np.any(row_sums <= 0):
        raise SingularOrNegativeInverse("inverse has a non-positive row sum")
    return CouplingMatrix(b=_frozen(b), m=_frozen(m), row_sums=_frozen(row_sums))


@dataclass(frozen=True)
class ControllerGains:
    """Per-agent PI gains and the scalar anti-windup gain."""

    p: np.ndarray
    r: np.ndarray
    beta: float

    def __post_init__(self):
        p = _frozen(np.atleast_1d(self.p))
        r = _frozen(np.atleast_1d(self.r))
        if p.ndim != 1 or p.shape != r.shape:
            raise ValidationError(f"gain vectors must be 1-D with equal length, got {p.shape} and {r.shape}")
        if not (np.all(p > 0) and np.all(r > 0)):
            raise ValidationError("proportional and integral gains must be strictly positive")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError("anti-windup gain beta must be strictly positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def uniform(cls, n: int, p: float = 1.0, r: float = 1.5, beta: float = 1.0) -> "ControllerGains":
        return cls(np.full(n, p), np.full(n, r), beta)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def conjecture_ok(self) -> bool:
        """True when p_i > r_i for every agent (the conjectured convergence condition)."""
        return bool(np.all(self.p > self.r))


@dataclass(frozen=True)
class Disturbance:
    w: np.ndarray

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.w))
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValidationError("disturbance must be a finite 1-D vector")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class ClosedLoopState:
    """Plant state ``x`` and integrator state ``z``."""

    x: np.ndarray
    z: np.ndarray = field(default=None)

    def __post_init__(self):
        x = _frozen(np.atleast_1d(self.x))
        z = _frozen(np.zeros_like(x) if self.z is None else np.atleast_1d(self.z))
        if x.ndim != 1 or x.shape != z.shape:
            raise ValidationError(f"x and z must be 1-D with equal length, got {x.shape} and {z.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValidationError("closed-loop state must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def origin(cls, n: int) -> "ClosedLoopState":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def n(self) -> int:
        return self.x.shape[0]


def control_law(state: ClosedLoopState, gains: ControllerGains) -> np.ndarray:
    """PI output ``u = -P x - R z`` (before saturation)."""
    if state.n != gains.n:
        raise ValidationError(f"state has n={state.n} but gains have n={gains.n}")
    return -gains.p * state.x - gains.r * state.z


def check_dimensions(coupling: CouplingMatrix, *vectors_or_objects) -> None:
    for obj in vectors_or_objects:
        n = obj.n if hasattr(obj, "n") else np.shape(obj)[0]
        if n != coupling.n:
            raise ValidationError(f"dimension mismatch: coupling has n={coupling.n}, got {n}")
