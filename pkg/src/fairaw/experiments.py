"""Seeded experiments: the randomized convergence study and the district-heating comparison."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .equilibrium import candidate_equilibrium, existence_condition, maximizing_set
from .errors import FairAWError, RejectionBudgetExhausted, ValidationError
from .fairness_lp import agrees, min_infnorm
from .model import ClosedLoopState, ControllerGains, CouplingMatrix, Disturbance, validate_coupling
from .simulate import DisturbanceSchedule, SimulationConfig, SimulationResult, integrate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomStudyConfig:
    n_systems: int = 1000
    ics_per_system: int = 100
    n_range: tuple[int, int] = (5, 15)
    seed: int = 0
    convergence_tol: float = 0.005
    gain_floor: float = 1e-3
    beta_floor: float = 1e-3
    max_rejections: int = 10_000
    ic_std: float = 100.0
    certify: bool = True
    lp_tol: float = 1e-9
    workers: int = 1

    def __post_init__(self):
        lo, hi = self.n_range
        if self.n_systems < 1 or self.ics_per_system < 0 or self.max_rejections < 1:
            raise ValidationError("study counts must be >= 1")
        if not (1 <= lo <= hi <= 64):
            raise ValidationError(f"n_range must lie within [1, 64], got {self.n_range}")
        if self.gain_floor <= 0 or self.beta_floor <= 0 or self.convergence_tol <= 0:
            raise ValidationError("floors and tolerances must be positive")
        object.__setattr__(self, "n_range", (int(lo), int(hi)))


@dataclass(frozen=True)
class RandomSystem:
    coupling: CouplingMatrix
    gains: ControllerGains
    disturbance: Disturbance
    # raw draws behind the coupling matrix, kept for diagnostics
    c: np.ndarray
    d: np.ndarray
    floor_broke_ordering: bool
    rejections_a1: int
    rejections_a2: int
    redraws: int

    @property
    def n(self) -> int:
        return self.coupling.n


def _draw_coupling(rng: np.random.Generator, n: int):
    c = -np.abs(rng.normal(0.0, 1.0, size=(n, n)))
    d = rng.normal(0.0, float(n), size=n)
    b = c + np.diag(np.abs(c).sum(axis=1) + np.abs(d))
    return b, c, d


def random_system(
    rng: np.random.Generator,
    n_range=(5, 15),
    gain_floor: float = 1e-3,
    beta_floor: float = 1e-3,
    max_rejections: int = 10_000,
    max_redraws: int = 100,
) -> RandomSystem:
    """Draw a system per the randomized recipe, rejecting disturbances that
    break the strict existence condition or the unique-maximizer condition.

    Disturbances ``w_i ~ N(0, 5)``; if ``max_rejections`` draws all fail the
    whole system is redrawn (up to ``max_redraws`` times).
    """
    for redraw in range(max_redraws):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        b, c, d = _draw_coupling(rng, n)
        coupling = validate_coupling(b)
        beta = max(float(rng.uniform(0.0, 10.0)), beta_floor)
        p_raw = np.abs(rng.normal(0.0, 1.0, size=n))
        r_raw = rng.uniform(0.0, p_raw)
        p = np.maximum(p_raw, gain_floor)
        r = np.maximum(r_raw, gain_floor)
        gains = ControllerGains(p, r, beta)
        rej1 = rej2 = 0
        for _ in range(max_rejections):
            w = rng.normal(0.0, 5.0, size=n)
            if not existence_condition(coupling, w).strict:
                rej1 += 1
                continue
            if not maximizing_set(coupling, w).unique:
                rej2 += 1
                continue
            return RandomSystem(
                coupling, gains, Disturbance(w), c, d,
                floor_broke_ordering=bool(not gains.conjecture_ok and np.all(r_raw < p_raw)),
                rejections_a1=rej1, rejections_a2=rej2, redraws=redraw,
            )
        log.info("rejection budget exhausted for n=%d draw, redrawing system", n)
    raise RejectionBudgetExhausted(f"no admissible disturbance after {max_redraws} system redraws")


@dataclass
class RunRecord:
    converged: bool
    t_final: float
    distance: float | None
    steps: int
    error: str | None = None


@dataclass
class SystemRecord:
    index: int
    seed_id: str
    n: int
    beta: float
    conjecture_ok: bool
    floor_broke_ordering: bool
    k: int
    equilibrium_value: float
    gamma_star: float | None
    lp_agreement: bool | None
    rejections_a1: int
    rejections_a2: int
    redraws: int
    runs: list[RunRecord] = field(default_factory=list)


@dataclass
class StudyReport:
    config: RandomStudyConfig
    systems: list[SystemRecord]

    @property
    def distances(self) -> list[float]:
        return [r.distance for s in self.systems for r in s.runs if r.distance is not None]

    def aggregate(self) -> dict:
        runs = [r for s in self.systems for r in s.runs]
        dists = self.distances
        tol = self.config.convergence_tol
        return {
            "max_distance": max(dists) if dists else 0.0,
            "tolerance": tol,
            "count_exceeding_tol": sum(1 for d in dists if d > tol),
            "n_systems": len(self.systems),
            "n_runs": len(runs),
            "n_converged": sum(1 for r in runs if r.converged),
            "n_failed": sum(1 for r in runs if r.error is not None),
            "max_t_final": max((r.t_final for r in runs), default=0.0),
            "rejections_a1": sum(s.rejections_a1 for s in self.systems),
            "rejections_a2": sum(s.rejections_a2 for s in self.systems),
            "system_redraws": sum(s.redraws for s in self.systems),
            "lp_disagreements": sum(1 for s in self.systems if s.lp_agreement is False),
            "floored_ordering_breaks": sum(1 for s in self.systems if s.floor_broke_ordering),
        }

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["n_range"] = list(cfg["n_range"])
        return {
            "schema": "fairaw.study/1",
            "config": cfg,
            "aggregate": self.aggregate(),
            "systems": [asdict(s) for s in self.systems],
        }


def study_config_for_ics(sim: SimulationConfig | None = None) -> SimulationConfig:
    return replace(sim or SimulationConfig(), store_trajectory=False)


def _run_system(index: int, seq: np.random.SeedSequence, cfg: RandomStudyConfig, sim: SimulationConfig) -> SystemRecord:
    sys_seq, ic_seq = seq.spawn(2)
    system = random_system(
        np.random.default_rng(sys_seq), cfg.n_range, cfg.gain_floor, cfg.beta_floor, cfg.max_rejections
    )
    point = candidate_equilibrium(system.coupling, system.disturbance, system.gains)
    value = float(np.max(np.abs(point.x0)))
    gamma = agreement = None
    if cfg.certify:
        cert = min_infnorm(system.coupling, system.disturbance, cfg.lp_tol)
        gamma = cert.gamma_star
        agreement = agrees(gamma, value)
    record = SystemRecord(
        index=index,
        seed_id=f"{cfg.seed}/{index}",
        n=system.n,
        beta=system.gains.beta,
        conjecture_ok=system.gains.conjecture_ok,
        floor_broke_ordering=system.floor_broke_ordering,
        k=point.k,
        equilibrium_value=value,
        gamma_star=gamma,
        lp_agreement=agreement,
        rejections_a1=system.rejections_a1,
        rejections_a2=system.rejections_a2,
        redraws=system.redraws,
    )
    ic_rng = np.random.default_rng(ic_seq)
    for _ in range(cfg.ics_per_system):
        x = ic_rng.normal(0.0, cfg.ic_std, size=system.n)
        z = ic_rng.normal(0.0, cfg.ic_std, size=system.n)
        try:
            res = integrate(
                "coordinated", ClosedLoopState(x, z), system.disturbance.w,
                system.coupling, system.gains, sim, reference_x0=point.x0,
            )
            record.runs.append(RunRecord(res.converged, res.t_final, res.distance_to_equilibrium, res.steps))
        except FairAWError as exc:
            record.runs.append(RunRecord(False, float("nan"), None, 0, f"{type(exc).__name__}: {exc}"))
    return record


def run_convergence_study(config: RandomStudyConfig, sim: SimulationConfig | None = None, progress=None) -> StudyReport:
    """Draw ``n_systems`` systems and integrate the coordinated loop from
    ``ics_per_system`` Gaussian initial states each.

    Every system gets its own child seed of ``config.seed``, so results do not
    depend on ``config.workers``.
    """
    sim = study_config_for_ics(sim)
    children = np.random.SeedSequence(config.seed).spawn(config.n_systems)
    jobs = list(enumerate(children))

    def work(job):
        rec = _run_system(job[0], job[1], config, sim)
        if progress is not None:
            progress(rec)
        return rec

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(j) for j in jobs]
    return StudyReport(config, records)


# district heating --------------------------------------------------------

HEATING_B = np.array(
    [
        [260, -30, -30, -45, -50],
        [-15, 250, -30, -45, -50],
        [-15, -20, 210, -45, -50],
        [-15, -20, -30, 175, -50],
        [-15, -20, -30, -40, 110],
    ],
    dtype=float,
)

# outdoor temperature in degC: neutral, ramp down, cold plateau, ramp up, neutral
DEFAULT_PROFILE = ((0.0, 20.0), (10.0, 20.0), (15.0, -20.0), (35.0, -20.0), (40.0, 20.0), (60.0, 20.0))


@dataclass(frozen=True)
class HeatingScenario:
    """Five buildings on one heat source; ``w_i(t) = alpha * (T_out(t) - comfort)``."""

    b: np.ndarray = field(default_factory=lambda: HEATING_B.copy())
    p: float = 1.0
    r: float = 1.5
    beta: float = 1.0
    alpha: float = 1.0
    comfort: float = 20.0
    profile: tuple = DEFAULT_PROFILE

    def __post_init__(self):
        temps = np.array([T for _, T in self.profile], dtype=float)
        if not np.all(np.isfinite(temps)):
            raise ValidationError("outdoor profile must be finite")

    @property
    def coupling(self) -> CouplingMatrix:
        return validate_coupling(self.b)

    @property
    def gains(self) -> ControllerGains:
        return ControllerGains.uniform(self.b.shape[0], self.p, self.r, self.beta)

    def disturbance(self, temperature: float) -> np.ndarray:
        return np.full(self.b.shape[0], self.alpha * (temperature - self.comfort))

    def schedule(self) -> DisturbanceSchedule:
        return DisturbanceSchedule.piecewise_linear([(t, self.disturbance(T)) for t, T in self.profile])

    def plateau(self) -> tuple[float, float]:
        """Longest interval held at the coldest profile temperature."""
        coldest = min(T for _, T in self.profile)
        best = (0.0, 0.0)
        for (t0, T0), (t1, T1) in zip(self.profile, self.profile[1:]):
            if T0 == coldest and T1 == coldest and t1 - t0 > best[1] - best[0]:
                best = (t0, t1)
        return best

    @property
    def horizon(self) -> float:
        return float(self.profile[-1][0])


HEATING_SIM = SimulationConfig(
    horizon=60.0, initial_step=1e-3, max_step=0.02, sample_stride=1, stop_at_equilibrium=False
)


@dataclass
class HeatingComparison:
    coordinated: SimulationResult
    uncoordinated: SimulationResult
    worst_coordinated: float
    worst_uncoordinated: float
    worst_agent_coordinated: int
    worst_agent_uncoordinated: int
    coldest_temperature: float
    analytic_level: float
    plateau_window: tuple[float, float]
    plateau_spread: float
    plateau_error: float
    approaches_equilibrium: bool
    equalization_tol: float

    def summary(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("coordinated", "uncoordinated")}
        d["plateau_window"] = list(self.plateau_window)
        d["schema"] = "fairaw.heating/1"
        return d


def _worst(result: SimulationResult) -> tuple[float, int]:
    dev = np.abs(result.trajectory.x)
    i = np.unravel_index(np.argmax(dev), dev.shape)
    return float(dev[i]), int(i[1])


def run_heating_comparison(
    scenario: HeatingScenario | None = None,
    config: SimulationConfig | None = None,
    equalization_tol: float = 0.05,
) -> HeatingComparison:
    """Simulate both anti-windup strategies from rest on the same outdoor profile.

    Equalization is judged on the second half of the cold plateau, after the
    transient from the ramp has died out.
    """
    scenario = scenario or HeatingScenario()
    config = config or replace(HEATING_SIM, horizon=scenario.horizon)
    coupling, gains = scenario.coupling, scenario.gains
    schedule = scenario.schedule()
    start = ClosedLoopState.origin(coupling.n)
    coord = integrate("coordinated", start, schedule, coupling, gains, config)
    uncoord = integrate("uncoordinated", start, schedule, coupling, gains, config)

    coldest = min(T for _, T in scenario.profile)
    w_cold = scenario.disturbance(coldest)
    point = candidate_equilibrium(coupling, w_cold, gains)
    t0, t1 = scenario.plateau()
    window = (0.5 * (t0 + t1), t1)
    traj = coord.trajectory
    mask = (traj.t >= window[0]) & (traj.t <= window[1])
    xs = traj.x[mask]
    if xs.size:
        spread = float(np.max(xs.max(axis=1) - xs.min(axis=1)))
        error = float(np.max(np.abs(xs - point.level)))
    else:
        spread = error = float("inf")
    wc, ac = _worst(coord)
    wu, au = _worst(uncoord)
    return HeatingComparison(
        coordinated=coord,
        uncoordinated=uncoord,
        worst_coordinated=wc,
        worst_uncoordinated=wu,
        worst_agent_coordinated=ac,
        worst_agent_uncoordinated=au,
        coldest_temperature=coldest,
        analytic_level=point.level,
        plateau_window=window,
        plateau_spread=spread,
        plateau_error=error,
        approaches_equilibrium=error <= equalization_tol,
        equalization_tol=equalization_tol,
    )
