"""Semi-implicit surface Cahn-Hilliard step with bending contributions.

Unknowns (phi, mu) on the order-2 space of the current surface.  The
double-well derivative is linearized around the previous phase field,
transport by the relative velocity is implicit in phi with explicit w.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .fem import (
    AssembledSystem,
    SolverError,
    assemble_local,
    mass_local,
    solve_linear,
    stiffness_local,
)
from .physics import ModelParams


@dataclass
class CHSystemSpec:
    geom: geo.CurvedGeometry
    phi_old: np.ndarray
    w: np.ndarray
    H: np.ndarray
    tau: float
    params: ModelParams

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        n = geo.n_dofs(self.geom.mesh, 2)
        if len(self.phi_old) != n or len(self.H) != n or np.shape(self.w) != (n, 3):
            raise ValueError("fields do not match the geometry")


def convection_local(geom, w, order=2):
    """Element matrices of ``(w . Grad_S N_b, N_a)``."""
    sd = geom.shape(order)
    wq = geo.eval_vector(geom, w)
    return np.einsum("fq,qa,fqi,fqbi->fab", geom.dA, sd.values, wq, sd.grads)


def chemical_potential_rhs(spec: CHSystemSpec) -> np.ndarray:
    """Explicit part of the chemical-potential equation tested with N_a."""
    g, p = spec.geom, spec.params
    sc = p.scaled()
    phi = geo.eval_scalar(g, spec.phi_old)
    H = geo.eval_scalar(g, spec.H)
    dev = H - p.H0(phi)
    f = (sc.sigma_tilde / p.eps) * (-2.0 * phi**3)
    f = f + sc.kappa_scale * (0.5 * p.dkappa(phi) * dev**2 - p.kappa(phi) * p.dH0(phi) * dev)
    vals = g.shape(2).values
    local = np.einsum("fq,fq,qa->fa", g.dA, f, vals)
    return np.bincount(g.shape(2).dofs.ravel(), weights=local.ravel(), minlength=len(spec.phi_old))


def assemble_ch(spec: CHSystemSpec) -> AssembledSystem:
    g, p = spec.geom, spec.params
    sc = p.scaled()
    mesh = g.mesh
    sp2 = (2, 1)
    phi = geo.eval_scalar(g, spec.phi_old)
    Mloc = mass_local(g)
    M = assemble_local(mesh, sp2, sp2, Mloc)
    K = assemble_local(mesh, sp2, sp2, stiffness_local(g))
    C = assemble_local(mesh, sp2, sp2, convection_local(g, spec.w))
    Mw = assemble_local(mesh, sp2, sp2, mass_local(g, weight=3.0 * phi**2 - 1.0))
    A = sp.bmat(
        [
            [M / spec.tau + C, sc.m * K],
            [-p.eps * sc.sigma_tilde * K - (sc.sigma_tilde / p.eps) * Mw, M],
        ],
        format="csr",
    )
    rhs = np.concatenate([M @ spec.phi_old / spec.tau, chemical_potential_rhs(spec)])
    n = len(spec.phi_old)
    return AssembledSystem(A, rhs, [("phi", n), ("mu", n)])


def mass_identity_residual(geom, phi_new, phi_old, w, tau) -> float:
    """``1^T M (phi_new - phi_old) + tau (w . Grad phi_new, 1)``."""
    dphi = geo.eval_scalar(geom, np.asarray(phi_new) - phi_old)
    conv = np.einsum("fqi,fqi->fq", geo.eval_vector(geom, w), geo.grad_scalar(geom, phi_new))
    return float(geom.integrate(dphi) + tau * geom.integrate(conv))


def step_cahn_hilliard(geom, state, tau, params: ModelParams, solver=None):
    """Intermediate (phi, mu) on the current surface."""
    spec = CHSystemSpec(geom, state.phi, state.w, state.H, tau, params)
    system = assemble_ch(spec)
    try:
        x = solver.solve(system, "ch") if solver is not None else solve_linear(system)
    except SolverError as exc:
        raise SolverError(f"Cahn-Hilliard step at t={state.t:.6g}: {exc}") from exc
    parts = system.split(x)
    return parts["phi"], parts["mu"]
