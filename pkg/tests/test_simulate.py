import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fairaw import _dopri
from fairaw.equilibrium import candidate_equilibrium
from fairaw.errors import NonFiniteState, StepUnderflow, ValidationError
from fairaw.model import ClosedLoopState, ControllerGains, deadzone, saturate, validate_coupling
from fairaw.simulate import (
    DisturbanceSchedule,
    SimulationConfig,
    integrate,
    rhs_coordinated,
    rhs_uncoordinated,
)

FIXED = dict(stop_at_equilibrium=False)


def reference_rhs(coupling, w_of_t, gains, coordinated):
    """Plain-numpy closed loop written out independently for scipy."""
    b, n = np.asarray(coupling.b), coupling.n

    def f(t, y):
        x, z = y[:n], y[n:]
        u = -gains.p * x - gains.r * z
        s = np.clip(u, -1.0, 1.0)
        d = u - s
        dz = x + gains.beta * (d.sum() if coordinated else d)
        return np.concatenate([-x + b @ s + w_of_t(t), dz])

    return f


def test_rhs_examples():
    c1 = validate_coupling([[2.0]])
    g = ControllerGains(np.array([1.0]), np.array([1.0]), 1.0)
    dx, dz = rhs_coordinated(ClosedLoopState(np.zeros(1)), c1, np.array([3.0]), g)
    assert dx[0] == 3.0 and dz[0] == 0.0
    for f in (rhs_coordinated, rhs_uncoordinated):
        dx, dz = f(ClosedLoopState.origin(2), validate_coupling(np.eye(2)), np.zeros(2), ControllerGains.uniform(2))
        assert np.all(dx == 0) and np.all(dz == 0)


def test_rhs_dead_zone_contrast():
    c = validate_coupling([[2.0, -1.0], [-0.5, 2.0]])
    g = ControllerGains(np.ones(2), np.ones(2), 2.0)
    # u = -x with x = [-1.5, 1.5] gives dz(u) = [0.5, -0.5]
    st = ClosedLoopState(np.array([-1.5, 1.5]), np.zeros(2))
    _, zc = rhs_coordinated(st, c, np.zeros(2), g)
    _, zu = rhs_uncoordinated(st, c, np.zeros(2), g)
    assert np.array_equal(zc, st.x)
    assert np.array_equal(zu, st.x + 2.0 * np.array([0.5, -0.5]))


def test_rhs_vanish_at_equilibrium(systems_200):
    for s in systems_200[:50]:
        pt = candidate_equilibrium(s.coupling, s.disturbance, s.gains)
        dx, dz = rhs_coordinated(ClosedLoopState(pt.x0, pt.z0), s.coupling, s.disturbance.w, s.gains)
        assert max(np.max(np.abs(dx)), np.max(np.abs(dz))) <= 1e-9


def test_variants_agree_when_unsaturated(systems_200):
    rng = np.random.default_rng(1)
    s = systems_200[0]
    st = ClosedLoopState(rng.uniform(-0.1, 0.1, s.n) / s.gains.p, np.zeros(s.n))
    assert np.all(np.abs(-s.gains.p * st.x) <= 1)
    a = rhs_coordinated(st, s.coupling, s.disturbance.w, s.gains)
    b = rhs_uncoordinated(st, s.coupling, s.disturbance.w, s.gains)
    assert all(np.array_equal(p, q) for p, q in zip(a, b))


@pytest.mark.parametrize("coordinated", [True, False])
def test_compiled_rhs_matches_numpy(systems_200, coordinated):
    rng = np.random.default_rng(2)
    f = rhs_coordinated if coordinated else rhs_uncoordinated
    for s in systems_200[:20]:
        n = s.n
        y = rng.normal(0, 3, 2 * n)
        wt, wv = np.array([0.0]), s.disturbance.w[None, :].copy()
        out, wbuf = np.empty(2 * n), np.empty(n)
        _dopri.rhs(0.0, y, np.ascontiguousarray(s.coupling.b), wt, wv, s.gains.p, s.gains.r,
                   s.gains.beta, coordinated, wbuf, out)
        dx, dz = f(ClosedLoopState(y[:n], y[n:]), s.coupling, s.disturbance.w, s.gains)
        assert np.allclose(out, np.concatenate([dx, dz]), rtol=1e-14, atol=1e-12)


def test_schedule_interpolation():
    sch = DisturbanceSchedule.piecewise_linear([(0.0, [0.0, 1.0]), (2.0, [4.0, 1.0]), (3.0, [4.0, -1.0])])
    assert np.array_equal(sch(-5.0), [0.0, 1.0])
    assert np.array_equal(sch(2.0), [4.0, 1.0])
    assert np.array_equal(sch(3.0), [4.0, -1.0])
    assert np.allclose(sch(1.0), [2.0, 1.0])
    assert np.array_equal(sch(10.0), [4.0, -1.0])
    assert DisturbanceSchedule.constant([1.0, 2.0]).is_constant
    with pytest.raises(ValidationError):
        DisturbanceSchedule(np.array([0.0, 0.0]), np.zeros((2, 1)))


def test_config_validation():
    with pytest.raises(ValidationError):
        SimulationConfig(rtol=0.0)
    with pytest.raises(ValidationError):
        SimulationConfig(min_step=1.0, max_step=0.5)


def test_unforced_origin_converges_immediately():
    c = validate_coupling([[2.0, -1.0], [-0.5, 2.0]])
    cfg = SimulationConfig()
    res = integrate("coordinated", ClosedLoopState.origin(2), np.zeros(2), c, ControllerGains.uniform(2), cfg)
    assert res.converged and res.t_final == cfg.initial_step and res.steps == 1
    assert np.all(res.final_state.x == 0) and np.all(res.final_state.z == 0)
    assert len(res.trajectory) == 1 and res.trajectory.t[0] == 0.0


def test_scalar_convergence():
    c = validate_coupling([[2.0]])
    g = ControllerGains(np.array([1.0]), np.array([0.5]), 1.0)
    res = integrate(rhs_coordinated, ClosedLoopState.origin(1), [3.0], c, g, reference_x0=[1.0])
    assert res.converged and res.t_final < 1e6
    assert abs(res.final_state.x[0] - 1.0) <= 0.005
    assert res.distance_to_equilibrium <= 0.005


def test_random_systems_converge(systems_200):
    rng = np.random.default_rng(3)
    cfg = SimulationConfig(store_trajectory=False)
    for s in systems_200[:10]:
        pt = candidate_equilibrium(s.coupling, s.disturbance, s.gains)
        st = ClosedLoopState(rng.normal(0, 100, s.n), rng.normal(0, 100, s.n))
        res = integrate("coordinated", st, s.disturbance.w, s.coupling, s.gains, cfg, pt.x0)
        assert res.converged and res.distance_to_equilibrium <= 0.005
        assert len(res.trajectory) == 2


def test_equilibrium_is_invariant(systems_200):
    for s in systems_200[:5]:
        pt = candidate_equilibrium(s.coupling, s.disturbance, s.gains)
        res = integrate("coordinated", ClosedLoopState(pt.x0, pt.z0), s.disturbance.w, s.coupling, s.gains,
                        SimulationConfig(horizon=1e3, **FIXED))
        assert res.t_final == 1e3 and not res.converged
        assert np.max(np.abs(res.trajectory.x - pt.x0)) <= 1e-6
        assert np.max(np.abs(res.trajectory.z - pt.z0)) <= 1e-6


def test_unsaturated_trajectories_coincide():
    c = validate_coupling([[2.0, -1.0], [-0.5, 2.0]])
    g = ControllerGains(np.array([1.0, 1.0]), np.array([0.5, 0.5]), 1.0)
    st = ClosedLoopState(np.array([0.1, -0.1]), np.zeros(2))
    cfg = SimulationConfig(horizon=20.0, **FIXED)
    a = integrate("coordinated", st, [0.05, 0.05], c, g, cfg)
    b = integrate("uncoordinated", st, [0.05, 0.05], c, g, cfg)
    assert np.max(np.abs(a.trajectory.u)) < 1.0
    assert np.array_equal(a.trajectory.x, b.trajectory.x)


@pytest.mark.parametrize("variant", ["coordinated", "uncoordinated"])
def test_tolerance_robustness(systems_200, variant):
    s = systems_200[4]
    rng = np.random.default_rng(4)
    st = ClosedLoopState(rng.normal(0, 10, s.n), rng.normal(0, 10, s.n))
    rtol = 1e-7
    finals = []
    for tol in (rtol, rtol / 2):
        res = integrate(variant, st, s.disturbance.w, s.coupling, s.gains,
                        SimulationConfig(horizon=5.0, rtol=tol, atol=tol * 1e-2, **FIXED))
        finals.append(np.concatenate([res.final_state.x, res.final_state.z]))
    scale = max(1.0, np.max(np.abs(finals[0])))
    assert np.max(np.abs(finals[0] - finals[1])) <= 10 * rtol * scale


@pytest.mark.parametrize("coordinated", [True, False])
def test_against_scipy(systems_200, coordinated):
    s = systems_200[8]
    rng = np.random.default_rng(6)
    y0 = np.concatenate([rng.normal(0, 5, s.n), rng.normal(0, 5, s.n)])
    sch = DisturbanceSchedule.piecewise_linear([(0.0, s.disturbance.w), (2.0, -s.disturbance.w), (4.0, 0.5 * s.disturbance.w)])
    f = reference_rhs(s.coupling, sch, s.gains, coordinated)
    ref = solve_ivp(f, (0.0, 5.0), y0, method="DOP853", rtol=1e-11, atol=1e-12, max_step=0.01)
    res = integrate("coordinated" if coordinated else "uncoordinated",
                    ClosedLoopState(y0[: s.n], y0[s.n:]), sch, s.coupling, s.gains,
                    SimulationConfig(horizon=5.0, rtol=1e-10, atol=1e-12, **FIXED))
    ours = np.concatenate([res.final_state.x, res.final_state.z])
    assert np.max(np.abs(ours - ref.y[:, -1])) <= 1e-6 * max(1.0, np.max(np.abs(ours)))


def test_breakpoints_are_hit():
    c = validate_coupling([[2.0]])
    sch = DisturbanceSchedule.piecewise_linear([(0.0, [0.0]), (1.3, [2.0]), (2.7, [-1.0])])
    res = integrate("coordinated", ClosedLoopState.origin(1), sch, c, ControllerGains.uniform(1),
                    SimulationConfig(horizon=4.0, **FIXED))
    assert 1.3 in res.trajectory.t and 2.7 in res.trajectory.t
    assert np.all(np.diff(res.trajectory.t) > 0)


def test_trajectory_columns_consistent(systems_200):
    s = systems_200[1]
    res = integrate("coordinated", ClosedLoopState.origin(s.n), s.disturbance.w, s.coupling, s.gains,
                    SimulationConfig(horizon=3.0, sample_stride=4, **FIXED))
    tr = res.trajectory
    assert tr.t[0] == 0.0 and tr.t[-1] == 3.0
    assert np.array_equal(tr.u, -s.gains.p * tr.x - s.gains.r * tr.z)
    assert np.array_equal(tr.sat_u, saturate(tr.u))
    assert np.allclose(tr.sum_dz, deadzone(tr.u).sum(axis=1))
    # every 4th accepted step plus the endpoints
    assert len(tr) <= res.steps // 4 + 3


def test_horizon_reached_is_not_converged():
    c = validate_coupling([[2.0]])
    res = integrate("coordinated", ClosedLoopState(np.array([5.0]), np.array([1.0])), [3.0], c,
                    ControllerGains.uniform(1), SimulationConfig(horizon=0.5))
    assert not res.converged and res.t_final == 0.5


def test_step_underflow():
    c = validate_coupling([[2.0]])
    with pytest.raises(StepUnderflow):
        integrate("coordinated", ClosedLoopState(np.array([5.0])), [3.0], c, ControllerGains.uniform(1),
                  SimulationConfig(initial_step=1e-4, min_step=1e-2, rtol=1e-14, atol=1e-16))


def test_non_finite_state():
    c = validate_coupling([[2.0]])
    with pytest.raises(NonFiniteState):
        integrate("coordinated", ClosedLoopState(np.array([0.0]), np.array([1e308])), [3.0], c,
                  ControllerGains(np.array([1.0]), np.array([10.0]), 1.0))


def test_unknown_variant():
    with pytest.raises(ValidationError):
        integrate("sideways", ClosedLoopState.origin(1), [0.0], validate_coupling([[1.0]]), ControllerGains.uniform(1))
