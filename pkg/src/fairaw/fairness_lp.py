"""Linear-programming oracle for the min-max fair allocation problem

    minimize ||x||_inf  subject to  -x + B u + w = 0,  -1 <= u <= 1.

The oracle never touches the closed-form equilibrium: it bisects on the
optimal value ``gamma`` and decides each level with a phase-1 simplex on

    |B u + w| <= gamma  (componentwise),   -1 <= u <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .model import CouplingMatrix, Disturbance, check_dimensions

MAX_PIVOTS = 10_000
PIVOT_EPS = 1e-12


@dataclass(frozen=True)
class FairnessCertificate:
    gamma_star: float
    x_star: np.ndarray
    u_star: np.ndarray
    closed_form_value: float | None = None

    @property
    def agreement(self) -> bool | None:
        if self.closed_form_value is None:
            return None
        return agrees(self.gamma_star, self.closed_form_value)


def agrees(gamma_star: float, closed_form_value: float, rel: float = 1e-7) -> bool:
    return abs(gamma_star - closed_form_value) <= rel * max(1.0, abs(closed_form_value))


def _phase_one(a: np.ndarray, b: np.ndarray, feas_tol: float) -> np.ndarray | None:
    """Find ``v >= 0`` with ``a v <= b`` or return None.

    Dense tableau, slack per row, artificial per row with negative right-hand
    side. Bland's rule for both entering and leaving choices.
    """
    m, nv = a.shape
    neg = b < 0
    n_art = int(neg.sum())
    ncol = nv + m + n_art
    tab = np.zeros((m + 1, ncol + 1))
    sign = np.where(neg, -1.0, 1.0)
    tab[:m, :nv] = a * sign[:, None]
    tab[np.arange(m), nv + np.arange(m)] = sign
    tab[:m, -1] = b * sign
    basis = nv + np.arange(m)
    art_rows = np.flatnonzero(neg)
    art_cols = nv + m + np.arange(n_art)
    tab[art_rows, art_cols] = 1.0
    basis[art_rows] = art_cols
    # reduced costs of the phase-1 objective sum(artificials)
    tab[m, :] = -tab[art_rows, :].sum(axis=0)
    tab[m, art_cols] = 0.0

    pivots = 0
    while True:
        cost = tab[m, :-1]
        cand = np.flatnonzero(cost < -PIVOT_EPS)
        if cand.size == 0:
            break
        j = cand[0]
        col = tab[:m, j]
        rows = np.flatnonzero(col > PIVOT_EPS)
        if rows.size == 0:
            # unbounded direction cannot occur for a bounded-below phase-1 objective
            raise NumericalFailure("phase-1 simplex found an unbounded direction")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_EPS * max(1.0, abs(best))]
        i = ties[np.argmin(basis[ties])]
        tab[i, :] /= tab[i, j]
        piv = tab[i, :].copy()
        tab -= np.outer(tab[:, j], piv)
        tab[i, :] = piv
        basis[i] = j
        pivots += 1
        if pivots >= MAX_PIVOTS:
            raise NumericalFailure(f"phase-1 simplex exceeded {MAX_PIVOTS} pivots")

    infeasibility = -tab[m, -1]
    if infeasibility > feas_tol:
        return None
    v = np.zeros(ncol)
    v[basis] = tab[:m, -1]
    return np.maximum(v[:nv], 0.0)


def lp_feasible(coupling: CouplingMatrix, w, gamma: float) -> tuple[bool, np.ndarray | None]:
    """Is there ``u`` in the unit box with ``||B u + w||_inf <= gamma``?

    Returns ``(feasible, witness_u)``; the witness is None when infeasible.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    w = w.w if isinstance(w, Disturbance) else np.asarray(w, dtype=float)
    check_dimensions(coupling, w)
    b = coupling.b
    n = coupling.n
    # substitute v = u + 1 so that v >= 0
    b1 = b.sum(axis=1)
    a = np.vstack([b, -b, np.eye(n)])
    rhs = np.concatenate([gamma - w + b1, gamma + w - b1, np.full(n, 2.0)])
    feas_tol = 1e-10 * max(1.0, float(np.abs(rhs).max()))
    v = _phase_one(a, rhs, feas_tol)
    if v is None:
        return False, None
    return True, np.clip(v - 1.0, -1.0, 1.0)


def min_infnorm(
    coupling: CouplingMatrix,
    w,
    tol: float = 1e-9,
    closed_form_value: float | None = None,
) -> FairnessCertificate:
    """Bisect the optimal fairness level over ``[0, ||w||_inf]``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = w.w if isinstance(w, Disturbance) else np.asarray(w, dtype=float)
    check_dimensions(coupling, w)
    hi = float(np.max(np.abs(w)))
    u_best = np.zeros(coupling.n)
    ok, u0 = lp_feasible(coupling, w, 0.0)
    if ok:
        hi, u_best = 0.0, u0
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, u = lp_feasible(coupling, w, mid)
        if ok:
            hi, u_best = mid, u
        else:
            lo = mid
    x_star = coupling.b @ u_best + w
    return FairnessCertificate(hi, x_star, u_best, closed_form_value)


def certify(coupling: CouplingMatrix, w, gains, tol: float = 1e-9) -> FairnessCertificate:
    """Run the oracle and attach ``||x0||_inf`` of the closed-form equilibrium."""
    from .equilibrium import candidate_equilibrium

    point = candidate_equilibrium(coupling, w, gains)
    return min_infnorm(coupling, w, tol, closed_form_value=float(np.max(np.abs(point.x0))))
