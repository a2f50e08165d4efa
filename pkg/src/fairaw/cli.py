"""Command-line driver.

Exit codes: 0 success, 1 validation or assumption failure, 2 numerical
failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfiguration, parse_config
from .equilibrium import equilibrium_report
from .errors import FairAWError, ValidationError
from .experiments import RandomStudyConfig, run_convergence_study, run_heating_comparison
from .export import emit_report, emit_trajectory, report_dict
from .fairness_lp import min_infnorm
from .model import ClosedLoopState
from .simulate import integrate

log = logging.getLogger("fairaw")


def _load(args) -> RunConfiguration:
    cfg = parse_config(args.config) if args.config else RunConfiguration()
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=Path(args.out))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed, study=dataclasses.replace(cfg.study, seed=args.seed))
    return cfg


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


def cmd_check(args, cfg: RunConfiguration) -> int:
    if cfg.coupling is None:
        raise ValidationError("check needs a [system] table with B or B_file")
    c = cfg.coupling
    diag = {
        "schema": "fairaw.check/1",
        "n": c.n,
        "dominance_margins": c.dominance_margins(),
        "min_dominance_margin": float(c.dominance_margins().min()),
        "inverse_min_entry": float(c.m.min()),
        "inverse_residual": c.inverse_residual(),
        "row_sums": c.row_sums,
        "m_matrix": True,
    }
    emit_report(diag, cfg.out / "check.json")
    _print(report_dict(diag))
    return 0


def cmd_equilibrium(args, cfg: RunConfiguration) -> int:
    cfg.require_system()
    w = cfg.constant_w
    if w is None:
        raise ValidationError("equilibrium needs a constant disturbance (system.w)")
    tol = cfg.tolerances
    rep = equilibrium_report(cfg.coupling, w, cfg.gains, strict_tol=tol.strict, tie_tol=tol.tie)
    emit_report(rep, cfg.out / "equilibrium.json")
    out = {"equilibrium": report_dict(rep)}
    code = 0 if rep.a1_strict else 1
    if args.certify:
        closed = None if rep.point is None else float(np.max(np.abs(rep.point.x0)))
        cert = min_infnorm(cfg.coupling, w, args.tol or tol.lp, closed_form_value=closed)
        emit_report(cert, cfg.out / "certificate.json")
        out["certificate"] = report_dict(cert)
        if not cert.agreement:
            code = 1
    _print(out)
    return code


def cmd_simulate(args, cfg: RunConfiguration) -> int:
    cfg.require_system()
    sim = cfg.simulation
    if args.tol:
        sim = dataclasses.replace(sim, rtol=args.tol)
    if args.horizon:
        sim = dataclasses.replace(sim, horizon=args.horizon)
    variant = "uncoordinated" if (args.uncoordinated or cfg.uncoordinated) else "coordinated"
    reference = None
    w = cfg.constant_w
    if w is not None and variant == "coordinated":
        rep = equilibrium_report(cfg.coupling, w, cfg.gains)
        if rep.point is not None:
            reference = rep.point.x0
    initial = cfg.initial or ClosedLoopState.origin(cfg.coupling.n)
    res = integrate(variant, initial, cfg.schedule, cfg.coupling, cfg.gains, sim, reference)
    emit_trajectory(res, cfg.out / "trajectory.csv")
    emit_report(res, cfg.out / "simulation.json")
    _print(report_dict(res))
    return 0


def cmd_study(args, cfg: RunConfiguration) -> int:
    study = cfg.study
    if args.full:
        study = dataclasses.replace(study, n_systems=1000, ics_per_system=100)
    overrides = {}
    if args.systems:
        overrides["n_systems"] = args.systems
    if args.ics is not None:
        overrides["ics_per_system"] = args.ics
    if args.workers:
        overrides["workers"] = args.workers
    if args.tol:
        overrides["convergence_tol"] = args.tol
    if args.no_certify:
        overrides["certify"] = False
    study = dataclasses.replace(study, **overrides)
    RandomStudyConfig(**dataclasses.asdict(study))  # re-validate overrides

    def progress(rec):
        log.info("system %d: n=%d, max distance %.3g", rec.index, rec.n,
                 max((r.distance or 0.0) for r in rec.runs) if rec.runs else 0.0)

    report = run_convergence_study(study, cfg.simulation, progress)
    emit_report(report, cfg.out / "study.json")
    agg = report.aggregate()
    _print(agg)
    ok = agg["count_exceeding_tol"] == 0 and agg["n_converged"] == agg["n_runs"] and agg["lp_disagreements"] == 0
    return 0 if ok else 1


def cmd_heating(args, cfg: RunConfiguration) -> int:
    cmp = run_heating_comparison(cfg.heating, equalization_tol=args.tol or 0.05)
    emit_trajectory(cmp.coordinated, cfg.out / "heating_coordinated.csv")
    emit_trajectory(cmp.uncoordinated, cfg.out / "heating_uncoordinated.csv")
    emit_report(cmp, cfg.out / "heating.json")
    _print(report_dict(cmp))
    return 0


COMMANDS = {
    "check": (cmd_check, "validate the coupling matrix and print M-matrix diagnostics"),
    "equilibrium": (cmd_equilibrium, "existence check and closed-form fair equilibrium"),
    "simulate": (cmd_simulate, "integrate the closed loop once"),
    "study": (cmd_study, "randomized convergence study"),
    "heating": (cmd_heating, "district-heating coordinated vs uncoordinated comparison"),
}


def _global_options(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", default=default, help="TOML run configuration")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--tol", type=float, default=default,
                        help="command tolerance: LP bisection width (equilibrium), rtol (simulate), "
                             "convergence distance (study), plateau equalization (heating)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairaw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_options(parser, None)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, help=help_, parents=[common]) for name, (_, help_) in COMMANDS.items()}
    parsers["equilibrium"].add_argument("--certify", action="store_true",
                                        help="also solve the LP oracle; exit 1 unless values agree")
    parsers["simulate"].add_argument("--uncoordinated", action="store_true",
                                     help="local anti-windup instead of the broadcast term")
    parsers["simulate"].add_argument("--horizon", type=float)
    st = parsers["study"]
    st.add_argument("--full", action="store_true", help="1000 systems x 100 initial conditions")
    st.add_argument("--systems", type=int)
    st.add_argument("--ics", type=int)
    st.add_argument("--workers", type=int)
    st.add_argument("--no-certify", action="store_true", help="skip the LP oracle")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command][0](args, cfg)
    except FairAWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
