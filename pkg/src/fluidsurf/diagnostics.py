"""Error norms against a reference run, convergence orders, energy monitor."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry as geo
from .fem import FESpace, assemble_mass
from .physics import EnergyReport

METRICS = ("e_X", "e_u", "e_phi", "e_A", "e_div", "e_F")


class ComparisonError(ValueError):
    pass


@dataclass
class ErrorReport:
    level: int
    h: float
    e_X: float
    e_u: float
    e_phi: float
    e_A: float
    e_div: float
    e_F: float

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in METRICS}


def linear_mass(mesh):
    """Order-2 mass matrix on the flat reference triangulation."""
    flat = geo.build_curved_geometry(mesh, None, k=1)
    return assemble_mass(FESpace(flat, 2))


def _match_times(times_a, times_b, tol):
    pairs = []
    for i, ta in enumerate(times_a):
        j = int(np.argmin(np.abs(np.asarray(times_b) - ta)))
        if abs(times_b[j] - ta) <= tol:
            pairs.append((i, j))
    return pairs


def compute_errors(
    mesh,
    snapshots,
    ref_snapshots,
    energies: EnergyReport,
    ref_energies: EnergyReport,
    div_norms,
    level: int = -1,
    h: float = float("nan"),
    time_tol: float = 1e-10,
) -> ErrorReport:
    """Errors of a coarse trajectory against a finer reference trajectory.

    Coarse order-2 node ``j`` coincides with reference vertex ``j`` in the
    nested icosphere hierarchy, so nodal values are compared directly and
    integrated with the order-2 mass matrix of the coarse flat mesh.
    Every coarse snapshot time must have a reference snapshot at the same
    time.
    """
    t_run = [s.t for s in snapshots]
    t_ref = [s.t for s in ref_snapshots]
    pairs = _match_times(t_run, t_ref, time_tol)
    if len(pairs) != len(t_run):
        missing = sorted(set(range(len(t_run))) - {i for i, _ in pairs})
        raise ComparisonError(f"no reference snapshot at times {[t_run[i] for i in missing]}")
    M = linear_mass(mesh)
    n = M.shape[0]
    if any(len(s.phi) < n for s in ref_snapshots):
        raise ComparisonError("reference run is not finer than the compared run")

    def l2(a):
        a = np.asarray(a)
        if a.ndim == 1:
            return math.sqrt(max(a @ (M @ a), 0.0))
        return math.sqrt(max(sum(a[:, k] @ (M @ a[:, k]) for k in range(a.shape[1])), 0.0))

    eX = eu = ephi = 0.0
    for i, j in pairs:
        s, r = snapshots[i], ref_snapshots[j]
        eX = max(eX, l2(s.X - r.X[:n]))
        eu = max(eu, l2(s.u - r.u[:n]))
        ephi = max(ephi, l2(s.phi - r.phi[:n]))

    area = energies.column("area")
    eA = float(np.max(np.abs(area - area[0]))) if len(area) else 0.0
    ediv = float(np.max(div_norms)) if len(div_norms) else 0.0
    eF = 0.0
    te, tr = energies.column("t"), ref_energies.column("t")
    Fe, Fr = energies.column("F_total"), ref_energies.column("F_total")
    for i, j in _match_times(list(te), list(tr), time_tol):
        eF = max(eF, float(abs(Fe[i] - Fr[j])))
    return ErrorReport(level, h, eX, eu, ephi, eA, ediv, eF)


def eoc(errors, hs) -> list:
    """Slopes log(e_i / e_{i+1}) / log(h_i / h_{i+1}); None where saturated."""
    out = []
    for (e1, e2), (h1, h2) in zip(zip(errors, errors[1:]), zip(hs, hs[1:])):
        if e1 <= 0 or e2 <= 0 or h1 == h2:
            out.append(None)
        else:
            out.append(math.log(e1 / e2) / math.log(h1 / h2))
    return out


def eoc_table(reports: list[ErrorReport]) -> dict:
    hs = [r.h for r in reports]
    return {m: eoc([getattr(r, m) for r in reports], hs) for m in METRICS}


def write_convergence_csv(reports: list[ErrorReport], path):
    table = eoc_table(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "h", "metric", "value", "eoc"])
        for i, r in enumerate(reports):
            for m in METRICS:
                slope = table[m][i - 1] if i > 0 else None
                if i == 0:
                    s = ""
                elif slope is None:
                    s = "saturated"
                else:
                    s = f"{slope:.6g}"
                w.writerow([r.level, f"{r.h:.17g}", m, f"{getattr(r, m):.17g}", s])


def energy_monitor(report: EnergyReport, tau: float) -> dict:
    """Residuals of the discrete energy balance ``dE/dt + 2 D = 0``."""
    E = report.column("F_total")
    D = report.column("D_V") + report.column("D_R") + report.column("D_phi")
    if len(E) < 2:
        return {"residuals": np.zeros(0), "max_abs": 0.0, "mean_abs": 0.0, "mean_abs_after_first": 0.0}
    r = (E[1:] - E[:-1]) / tau + 2.0 * D[1:]
    a = np.abs(r)
    return {
        "residuals": r,
        "max_abs": float(a.max()),
        "mean_abs": float(a.mean()),
        "mean_abs_after_first": float(a[1:].mean()) if len(a) > 1 else float(a.mean()),
    }


def divergence_norm(geom, u) -> float:
    """``||div_P u||_{L2}`` on the curved surface."""
    d = geo.div_tangential(geom, u)
    return math.sqrt(max(geom.integrate(d * d), 0.0))


def report_to_dict(r: ErrorReport) -> dict:
    return asdict(r)
