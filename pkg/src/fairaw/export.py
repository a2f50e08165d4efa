"""Trajectory CSV files and JSON reports.

Trajectory files have the header ``t, x_1..x_n, z_1..z_n, u_1..u_n,
sat_u_1..sat_u_n, sum_dz`` and write every float with ``repr`` so parsing
a file back reproduces the in-memory values exactly. Reports are JSON with
sorted keys and a ``schema`` tag.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
from pathlib import Path

import numpy as np

from .equilibrium import EquilibriumReport
from .errors import IoError
from .experiments import HeatingComparison, StudyReport
from .fairness_lp import FairnessCertificate
from .simulate import SimulationResult, Trajectory


def trajectory_header(n: int) -> list[str]:
    cols = ["t"]
    for name in ("x", "z", "u", "sat_u"):
        cols += [f"{name}_{i}" for i in range(1, n + 1)]
    cols.append("sum_dz")
    return cols


def emit_trajectory(result: SimulationResult | Trajectory, path) -> Path:
    traj = result.trajectory if isinstance(result, SimulationResult) else result
    path = Path(path)
    data = np.column_stack([traj.t, traj.x, traj.z, traj.u, traj.sat_u, traj.sum_dz])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(trajectory_header(traj.n))
            for row in data:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write trajectory {path}: {exc}") from exc
    return path


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    """Return ``(header, rows)`` of a trajectory file."""
    try:
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader]
    except OSError as exc:
        raise IoError(f"cannot read trajectory {path}: {exc}") from exc
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def _plain(obj):
    """Convert report objects to JSON-compatible values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj):
        return _plain({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    return obj


def equilibrium_report_dict(report: EquilibriumReport) -> dict:
    ex = report.existence
    out = {
        "schema": "fairaw.equilibrium/1",
        "existence": {"status": ex.status.value, "lhs": ex.lhs, "rhs": ex.rhs, "gap": ex.gap},
        "maximizers": {
            "indices": list(report.maximizers.indices),
            "value": report.maximizers.value,
            "unique": report.maximizers.unique,
        },
        "assumptions": {"a1_strict": report.a1_strict, "a2_unique": report.a2_unique},
        "warnings": list(report.warnings),
        "equilibrium": None,
    }
    if report.point is not None:
        pt = report.point
        out["equilibrium"] = {
            "x0": pt.x0, "u0": pt.u0, "z0": pt.z0, "k": pt.k,
            "residual_plant": pt.residual_plant,
            "residual_integrator": pt.residual_integrator,
        }
    return out


def certificate_dict(cert: FairnessCertificate) -> dict:
    return {
        "schema": "fairaw.certificate/1",
        "gamma_star": cert.gamma_star,
        "x_star": cert.x_star,
        "u_star": cert.u_star,
        "closed_form_value": cert.closed_form_value,
        "agreement": cert.agreement,
    }


def simulation_dict(result: SimulationResult) -> dict:
    return {
        "schema": "fairaw.simulation/1",
        "converged": result.converged,
        "coordinated": result.coordinated,
        "t_final": result.t_final,
        "steps": result.steps,
        "final_x": result.final_state.x,
        "final_z": result.final_state.z,
        "distance_to_equilibrium": result.distance_to_equilibrium,
        "samples": len(result.trajectory),
    }


def report_dict(report) -> dict:
    if isinstance(report, StudyReport):
        return _plain(report.to_dict())
    if isinstance(report, EquilibriumReport):
        return _plain(equilibrium_report_dict(report))
    if isinstance(report, FairnessCertificate):
        return _plain(certificate_dict(report))
    if isinstance(report, HeatingComparison):
        return _plain(report.summary())
    if isinstance(report, SimulationResult):
        return _plain(simulation_dict(report))
    if isinstance(report, dict):
        return _plain(report)
    raise TypeError(f"cannot serialize {type(report).__name__}")


def dumps_report(report) -> str:
    return json.dumps(report_dict(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_report(report, path) -> Path:
    path = Path(path)
    text = dumps_report(report)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
    return path
