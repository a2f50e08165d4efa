"""Compiled Dormand-Prince 5(4) kernel for the closed loop.

The state vector is ``y = [x, z]``. The disturbance is piecewise linear in
time, given by breakpoint times ``wt`` (m,) and values ``wv`` (m, n); a
constant disturbance is a single breakpoint.
"""

import numpy as np
from numba import njit

# status codes returned by run_chunk
CONTINUE = 0
CONVERGED = 1
HORIZON = 2
UNDERFLOW = 3
NONFINITE = 4

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th minus embedded 4th order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


@njit(cache=True, nogil=True)
def disturbance_at(t, wt, wv, out):
    m = wt.shape[0]
    if m == 1 or t <= wt[0]:
        out[:] = wv[0]
        return
    if t >= wt[m - 1]:
        out[:] = wv[m - 1]
        return
    i = np.searchsorted(wt, t, side="right") - 1
    s = (t - wt[i]) / (wt[i + 1] - wt[i])
    for j in range(out.shape[0]):
        out[j] = wv[i, j] + s * (wv[i + 1, j] - wv[i, j])


@njit(cache=True, nogil=True)
def rhs(t, y, b, wt, wv, p, r, beta, coordinated, wbuf, out):
    n = p.shape[0]
    disturbance_at(t, wt, wv, wbuf)
    sat = np.empty(n)
    dz = np.empty(n)
    total = 0.0
    for i in range(n):
        u = -p[i] * y[i] - r[i] * y[n + i]
        s = min(max(u, -1.0), 1.0)
        sat[i] = s
        dz[i] = u - s
        total += u - s
    for i in range(n):
        acc = -y[i] + wbuf[i]
        for j in range(n):
            acc += b[i, j] * sat[j]
        out[i] = acc
        if coordinated:
            out[n + i] = y[i] + beta * total
        else:
            out[n + i] = y[i] + beta * dz[i]


@njit(cache=True, nogil=True)
def _stability_abs(z):
    # |R(z)| for the propagated 5th-order solution
    r = 1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 600.0)))))
    return abs(r)


@njit(cache=True, nogil=True)
def _critical_step(lam):
    """Largest h with |R(h lam)| < 1, or inf for non-decaying modes."""
    mag = abs(lam)
    if lam.real >= 0.0 or mag == 0.0:
        return np.inf
    d = lam / mag
    ds = 0.02
    s = ds
    while s < 4.0:
        if _stability_abs(s * d) >= 1.0:
            lo = s - ds
            hi = s
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if _stability_abs(mid * d) >= 1.0:
                    hi = mid
                else:
                    lo = mid
            return lo / mag
        s += ds
    return 4.0 / mag


@njit(cache=True, nogil=True)
def saturation_pattern(y, p, r):
    n = p.shape[0]
    mask = np.uint64(0)
    for i in range(n):
        if abs(-p[i] * y[i] - r[i] * y[n + i]) > 1.0:
            mask |= np.uint64(1) << np.uint64(i)
    return mask


@njit(cache=True, nogil=True)
def jacobian(mask, b, p, r, beta, coordinated):
    """Jacobian of the closed loop on the region with saturation pattern ``mask``."""
    n = p.shape[0]
    jac = np.zeros((2 * n, 2 * n))
    for j in range(n):
        saturated = (mask >> np.uint64(j)) & np.uint64(1)
        if saturated:
            if coordinated:
                for i in range(n):
                    jac[n + i, j] -= beta * p[j]
                    jac[n + i, n + j] -= beta * r[j]
            else:
                jac[n + j, j] -= beta * p[j]
                jac[n + j, n + j] -= beta * r[j]
        else:
            for i in range(n):
                jac[i, j] -= b[i, j] * p[j]
                jac[i, n + j] -= b[i, j] * r[j]
    for i in range(n):
        jac[i, i] -= 1.0
        jac[n + i, i] += 1.0
    return jac


@njit(cache=True, nogil=True)
def stability_cap(mask, b, p, r, beta, coordinated):
    """0.9 times the largest step keeping every linear mode of the region decaying."""
    jac = jacobian(mask, b, p, r, beta, coordinated)
    lam = np.linalg.eigvals(jac.astype(np.complex128))
    cap = np.inf
    for k in range(lam.shape[0]):
        cap = min(cap, _critical_step(lam[k]))
    return 0.9 * cap


@njit(cache=True, nogil=True)
def _stopped(y, dy, n, stop_abs, stop_rel, rel_floor):
    for i in range(2 * n):
        d = abs(dy[i])
        if d >= stop_abs:
            return False
        a = abs(y[i])
        if a >= rel_floor and d >= stop_rel * a:
            return False
    return True


@njit(cache=True, nogil=True)
def run_chunk(
    y, t, h, t_end, b, wt, wv, p, r, beta, coordinated,
    rtol, atol, h_min, h_max, stop_abs, stop_rel, rel_floor,
    stride, count, max_steps, rec,
):
    """Advance ``y`` in place for at most ``max_steps`` accepted steps.

    Returns ``(status, t, h, count, n_rec)``. ``count`` is the running number
    of accepted steps. Every ``stride``-th accepted step (starting with the
    first) is checked against the stopping rule and, if ``rec`` has room,
    written to ``rec`` as ``[t, y...]``.
    """
    dim = y.shape[0]
    n = dim // 2
    wbuf = np.empty(n)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    k5 = np.empty(dim)
    k6 = np.empty(dim)
    k7 = np.empty(dim)
    ytmp = np.empty(dim)
    ynew = np.empty(dim)
    cap = rec.shape[0]
    n_rec = 0
    rhs(t, y, b, wt, wv, p, r, beta, coordinated, wbuf, k1)
    for i in range(dim):
        if not np.isfinite(k1[i]):
            return NONFINITE, t, h, count, n_rec
    taken = 0
    m = wt.shape[0]
    # explicit steps are capped inside the linear stability region of the
    # current saturation pattern; otherwise the error controller parks the
    # step on the stability boundary and the state never settles
    n_cache = 16
    cache_mask = np.zeros(n_cache, dtype=np.uint64)
    cache_cap = np.full(n_cache, -1.0)
    slot = 0
    mask = saturation_pattern(y, p, r)
    h_stab = stability_cap(mask, b, p, r, beta, coordinated)
    cache_mask[0] = mask
    cache_cap[0] = h_stab
    slot = 1
    while taken < max_steps:
        if t >= t_end:
            return HORIZON, t, h, count, n_rec
        floor = max(h_min, 16.0 * 2.220446049250313e-16 * abs(t))
        if h < floor:
            return UNDERFLOW, t, h, count, n_rec
        h = min(h, h_max, h_stab)
        hs = min(h, t_end - t)
        # do not step across a kink of the disturbance profile
        if m > 1:
            idx = np.searchsorted(wt, t, side="right")
            if idx < m and wt[idx] - t < hs:
                hs = wt[idx] - t
        for i in range(dim):
            ytmp[i] = y[i] + hs * _A21 * k1[i]
        rhs(t + _C2 * hs, ytmp, b, wt, wv, p, r, beta, coordinated, wbuf, k2)
        for i in range(dim):
            ytmp[i] = y[i] + hs * (_A31 * k1[i] + _A32 * k2[i])
        rhs(t + _C3 * hs, ytmp, b, wt, wv, p, r, beta, coordinated, wbuf, k3)
        for i in range(dim):
            ytmp[i] = y[i] + hs * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        rhs(t + _C4 * hs, ytmp, b, wt, wv, p, r, beta, coordinated, wbuf, k4)
        for i in range(dim):
            ytmp[i] = y[i] + hs * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        rhs(t + _C5 * hs, ytmp, b, wt, wv, p, r, beta, coordinated, wbuf, k5)
        for i in range(dim):
            ytmp[i] = y[i] + hs * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        rhs(t + hs, ytmp, b, wt, wv, p, r, beta, coordinated, wbuf, k6)
        for i in range(dim):
            ynew[i] = y[i] + hs * (
                _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
            )
        t_new = t + hs
        rhs(t_new, ynew, b, wt, wv, p, r, beta, coordinated, wbuf, k7)

        err = 0.0
        for i in range(dim):
            e = hs * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
        err = np.sqrt(err / dim)

        if not np.isfinite(err):
            h = 0.2 * hs
            continue
        if err > 1.0:
            h = hs * max(0.2, 0.9 * err ** -0.2)
            continue

        # accepted
        for i in range(dim):
            y[i] = ynew[i]
            k1[i] = k7[i]
        for i in range(dim):
            if abs(y[i]) > 1e300:
                return NONFINITE, t_new, hs, count, n_rec
        t = t_new
        count += 1
        taken += 1
        fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
        # a step shortened by a breakpoint or the horizon keeps the proposed size
        h = max(h, hs * fac) if hs < h else hs * fac
        new_mask = saturation_pattern(y, p, r)
        if new_mask != mask:
            mask = new_mask
            h_stab = -1.0
            for c in range(n_cache):
                if cache_cap[c] >= 0.0 and cache_mask[c] == mask:
                    h_stab = cache_cap[c]
                    break
            if h_stab < 0.0:
                h_stab = stability_cap(mask, b, p, r, beta, coordinated)
                cache_mask[slot] = mask
                cache_cap[slot] = h_stab
                slot = (slot + 1) % n_cache

        if (count - 1) % stride == 0:
            if n_rec < cap:
                rec[n_rec, 0] = t
                for i in range(dim):
                    rec[n_rec, 1 + i] = y[i]
                n_rec += 1
            if _stopped(y, k1, n, stop_abs, stop_rel, rel_floor):
                return CONVERGED, t, h, count, n_rec
            if n_rec == cap and cap > 0:
                return CONTINUE, t, h, count, n_rec
    return CONTINUE, t, h, count, n_rec
