"""Refinement study: a sequence of runs compared against a finer reference run."""
from __future__ import annotations

import dataclasses
import logging
import math

from .diagnostics import ErrorReport, compute_errors, eoc_table
from .mesh import generate_icosphere, mesh_size
from .timeloop import SimulationConfig, run

log = logging.getLogger(__name__)


def study_config(base: SimulationConfig, level: int, t_end: float) -> SimulationConfig:
    """Copy of ``base`` at ``level`` running to ``t_end`` with no early stop.

    Pinch-off and equilibrium detection are disabled so that every level
    reaches the common final time.
    """
    return dataclasses.replace(
        base, level=level, T_max=t_end, K0=-math.inf, eq_tol_u=0.0, eq_tol_phi=0.0, snapshot_every=0
    )


def run_level(base: SimulationConfig, level: int, t_end: float):
    cfg = study_config(base, level, t_end)
    res = run(cfg)
    div = [m["div_norm"] for m in res.monitor]
    log.info("level %d: %d steps, tau=%.4g, termination=%s", level, res.steps, res.tau, res.termination)
    return cfg, res, div


def convergence_study(base: SimulationConfig, levels, ref_level: int, t_end: float = 0.05):
    """Run every level and the reference; snapshots are compared at t = 0 and t_end.

    Returns (reports, eoc table, raw results keyed by level).
    """
    levels = sorted(levels)
    if ref_level <= levels[-1]:
        raise ValueError("reference level must be finer than every studied level")
    results = {}
    for lev in levels + [ref_level]:
        results[lev] = run_level(base, lev, t_end)
    _, ref, _ = results[ref_level]
    reports = []
    for lev in levels:
        _, res, div = results[lev]
        mesh = generate_icosphere(lev, base.radius)
        snaps = [res.snapshots[0], res.snapshots[-1]]
        ref_snaps = [ref.snapshots[0], ref.snapshots[-1]]
        # common times are 0 and t_end; the per-level step sizes differ
        for s, r in zip(snaps, ref_snaps):
            if abs(s.t - r.t) > 1e-10:
                raise ValueError(f"runs ended at different times {s.t} and {r.t}")
        # e_A uses every step, e_F only the times both runs share
        reports.append(
            compute_errors(mesh, snaps, ref_snaps, res.energies, ref.energies, div, lev, mesh_size(mesh))
        )
    return reports, eoc_table(reports), results


__all__ = ["ErrorReport", "convergence_study", "run_level", "study_config"]
