"""Coupled surface Navier-Stokes, curvature and surface-update step.

Monolithic unknown layout ``[u (3N), p (V), H (N), Y (3N)]`` with vector
fields flattened component-major.  Test functions for the momentum row
are ``v = N_a e_alpha``; the relevant derived quantities are

* ``Grad_P v = P e_alpha (x) Grad N_a``,
* ``div_P v = (Grad N_a)_alpha``,
* ``Grad_S (v . n) = n_alpha Grad N_a - N_a B e_alpha``.

Two reduced systems share the same building blocks: a stationary-surface
system where the normal velocity is constrained to zero by a Lagrange
multiplier, and the overdamped (friction-dominated) system.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .ch_step import convection_local
from .fem import (
    AssembledSystem,
    SolverError,
    assemble_local,
    assemble_vector,
    mass_local,
    solve_linear,
    stiffness_local,
)
from .physics import ModelParams, double_well

V2 = (2, 1)
V2VEC = (2, 3)
V1 = (1, 1)


@dataclass
class NSSystemSpec:
    geom: geo.CurvedGeometry
    u_old: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    X_old: np.ndarray
    tau: float
    params: ModelParams
    H_fixed: np.ndarray | None = None  # stationary variant only

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")


# ----------------------------------------------------------------------
# element building blocks


def _vec(local5):
    """(F, 3, n, 3, m) -> (F, 3n, 3m) component-major."""
    f, a, n, b, m = local5.shape
    return local5.reshape(f, a * n, b * m)


def vector_mass_local(geom):
    M = mass_local(geom)
    F, n, _ = M.shape
    out = np.zeros((F, 3, n, 3, n))
    for a in range(3):
        out[:, a, :, a, :] = M
    return _vec(out)


def vector_blockdiag_local(local):
    F, n, m = local.shape
    out = np.zeros((F, 3, n, 3, m))
    for a in range(3):
        out[:, a, :, a, :] = local
    return _vec(out)


def viscous_local(geom):
    """Element matrices of ``(sigma(u), Grad_P v)``."""
    G = geom.shape(2).grads
    dA = geom.dA
    L1 = np.einsum("fq,fqab,fqxi,fqyi->faxby", dA, geom.P, G, G, optimize=True)
    L2 = np.einsum("fq,fqxb,fqya->faxby", dA, G, G, optimize=True)
    return _vec(0.5 * (L1 + L2))


def divergence_local(geom):
    """Rows P1 test q, columns vector P2 trial: ``(div_P u, q)``."""
    v1 = geom.shape(1).values
    G = geom.shape(2).grads
    L = np.einsum("fq,qi,fqbj->fijb", geom.dA, v1, G, optimize=True)
    return L.reshape(L.shape[0], L.shape[1], -1)


def normal_mass_local(geom):
    """Rows scalar P2 test, columns vector P2 trial: ``(u . n, chi)``."""
    v = geom.shape(2).values
    L = np.einsum("fq,qa,qb,fqj->fajb", geom.dA, v, v, geom.n, optimize=True)
    return L.reshape(L.shape[0], L.shape[1], -1)


def normal_test_gradient(geom):
    """``Grad_S(N_a n_alpha)`` at quadrature points, shape (F, Q, 3, n, 3)."""
    sd = geom.shape(2)
    t1 = np.einsum("fqa,fqxi->fqaxi", geom.n, sd.grads)
    t2 = np.einsum("qx,fqia->fqaxi", sd.values, geom.B)
    return t1 - t2


def bending_curvature_local(geom, kap, dkap_gphi):
    """Columns scalar H, rows vector test: ``(Grad_S(kappa N_b), Grad_S(v . n))``."""
    sd = geom.shape(2)
    Kg = kap[..., None, None] * sd.grads + sd.values[None, :, :, None] * dkap_gphi[:, :, None, :]
    T = normal_test_gradient(geom)
    L = np.einsum("fq,fqbi,fqaxi->faxb", geom.dA, Kg, T, optimize=True)
    return L.reshape(L.shape[0], -1, L.shape[-1])


def normal_weighted_local(geom, weight):
    """Columns scalar, rows vector test: ``(weight N_b, v . n)``."""
    v = geom.shape(2).values
    L = np.einsum("fq,fq,qx,qb,fqa->faxb", geom.dA, weight, v, v, geom.n, optimize=True)
    return L.reshape(L.shape[0], -1, L.shape[-1])


def _vector_load(geom, f):
    """``(f, v)`` for f (F, Q, 3), component-major."""
    v = geom.shape(2).values
    local = np.einsum("fq,fqi,qa->fia", geom.dA, f, v).reshape(geom.n_elements, -1)
    return assemble_vector(geom.mesh, V2VEC, local)


def _normal_gradient_load(geom, gf):
    """``(gf, Grad_S(v . n))`` for a tangential field gf (F, Q, 3)."""
    T = normal_test_gradient(geom)
    local = np.einsum("fq,fqi,fqaxi->fax", geom.dA, gf, T).reshape(geom.n_elements, -1)
    return assemble_vector(geom.mesh, V2VEC, local)


def bending_b(geom, H0q):
    """``|B|^2 - tr B (tr B - H0) / 2`` with the geometric shape operator."""
    trB = np.einsum("fqii->fq", geom.B)
    return geom.norm_B_squared() - 0.5 * trB * (trB - H0q)


def _flat(X):
    return np.asarray(X).T.reshape(-1)


def _unflat(x):
    return np.asarray(x).reshape(3, -1).T.copy()


# ----------------------------------------------------------------------
# full system


def _momentum_forces(spec: NSSystemSpec, include_normal=True):
    """Force blocks acting through the implicit curvature and the explicit RHS.

    Returns (H-column block or None, rhs vector).
    """
    g, p = spec.geom, spec.params
    sc = p.scaled()
    mesh = g.mesh
    phi = geo.eval_scalar(g, spec.phi)
    gphi = geo.grad_scalar(g, spec.phi)
    mu = geo.eval_scalar(g, spec.mu)
    rhs = _vector_load(g, mu[..., None] * gphi)
    if not include_normal:
        return None, rhs
    kap = sc.kappa_scale * p.kappa(phi)
    dkap = sc.kappa_scale * p.dkappa(phi)
    H0 = p.H0(phi)
    dH0 = p.dH0(phi)
    Bn = bending_b(g, H0)

    col = -bending_curvature_local(g, kap, dkap[..., None] * gphi)
    col = col + normal_weighted_local(g, kap * Bn)
    # explicit part of kappa (H - H0): f0 = -kappa H0
    f0 = -kap * H0
    gf0 = -(dkap * H0 + kap * dH0)[..., None] * gphi
    rhs = rhs + _normal_gradient_load(g, gf0) - _vector_load(g, (f0 * Bn)[..., None] * g.n)

    if p.gl_normal_force and p.variant != "one_component":
        W, _ = double_well(phi)
        gl = sc.sigma_tilde * (0.5 * p.eps * np.sum(gphi**2, -1) + W / p.eps)
        col = col - normal_weighted_local(g, gl)
        q = sc.sigma_tilde * p.eps * np.einsum("fqi,fqij,fqj->fq", gphi, g.B, gphi)
        rhs = rhs - _vector_load(g, q[..., None] * g.n)
    return assemble_local(mesh, V2VEC, V2, col), rhs


def curvature_weight(params: ModelParams, phi_q, kappa_scale=1.0):
    if params.curvature_weight == "kappa":
        k = kappa_scale * params.kappa(phi_q)
        if np.all(k == 0):
            return np.ones_like(phi_q)
        return k
    return np.ones_like(phi_q)


def assemble_ns_update(spec: NSSystemSpec) -> AssembledSystem:
    """Monolithic system in (u, p, H, Y) on the current surface."""
    g, p = spec.geom, spec.params
    mesh = g.mesh
    overdamped = p.variant == "overdamped"
    N = geo.n_dofs(mesh, 2)
    V = mesh.n_vertices

    if overdamped:
        Auu = assemble_local(mesh, V2VEC, V2VEC, vector_mass_local(g))
        rhs_u = np.zeros(3 * N)
    else:
        Mloc = mass_local(g)
        Cloc = convection_local(g, spec.w)
        diag = (1.0 / spec.tau + p.gamma) * Mloc + Cloc
        Auu = assemble_local(mesh, V2VEC, V2VEC, vector_blockdiag_local(diag) + (2.0 / p.Re) * viscous_local(g))
        M = assemble_local(mesh, V2, V2, Mloc)
        rhs_u = np.concatenate([M @ spec.u_old[:, a] for a in range(3)]) / spec.tau

    D = assemble_local(mesh, V1, V2VEC, divergence_local(g))
    Nn = assemble_local(mesh, V2, V2VEC, normal_mass_local(g))
    AuH, rhs_f = _momentum_forces(spec)
    phi_q = geo.eval_scalar(g, spec.phi)
    wK = curvature_weight(p, phi_q, p.scaled().kappa_scale)
    Ks = assemble_local(mesh, V2, V2, stiffness_local(g, weight=wK))
    Kv = sp.block_diag([Ks, Ks, Ks], format="csr")

    A = sp.bmat(
        [
            [Auu, -D.T, AuH, None],
            [-D, None, None, None],
            [-Nn, None, None, Nn / spec.tau],
            [None, None, Nn.T, Kv],
        ],
        format="csr",
    )
    rhs = np.concatenate([rhs_u + rhs_f, np.zeros(V), np.zeros(N), -(Kv @ _flat(spec.X_old))])
    return AssembledSystem(A, rhs, [("u", 3 * N), ("p", V), ("H", N), ("Y", 3 * N)])


def step_ns_update(geom, state, phi, mu, tau, params: ModelParams, solver=None):
    """Intermediate (u, p, H, Y) on the current surface."""
    if params.variant == "stationary_surface":
        u, p = step_stationary(geom, state, phi, mu, tau, params, solver)
        return u, p, np.array(state.H), np.zeros_like(state.Y)
    spec = NSSystemSpec(geom, state.u, state.w, phi, mu, state.X, tau, params)
    system = assemble_ns_update(spec)
    try:
        x = solver.solve(system, "ns") if solver is not None else solve_linear(system)
    except SolverError as exc:
        raise SolverError(f"surface flow step at t={state.t:.6g}: {exc}") from exc
    parts = system.split(x)
    return _unflat(parts["u"]), parts["p"], parts["H"], _unflat(parts["Y"])


# ----------------------------------------------------------------------
# stationary surface


def assemble_stationary(spec: NSSystemSpec) -> AssembledSystem:
    """Tangential flow on a fixed surface.

    Unknowns ``[u (3N), p (V), lam (N), c (1)]``: ``lam`` enforces
    ``(u . n, chi) = 0`` and ``c`` the zero-mean pressure gauge.
    """
    g, p = spec.geom, spec.params
    mesh = g.mesh
    N = geo.n_dofs(mesh, 2)
    V = mesh.n_vertices
    Mloc = mass_local(g)
    diag = (1.0 / spec.tau + p.gamma) * Mloc + convection_local(g, spec.w)
    Auu = assemble_local(mesh, V2VEC, V2VEC, vector_blockdiag_local(diag) + (2.0 / p.Re) * viscous_local(g))
    M = assemble_local(mesh, V2, V2, Mloc)
    rhs_u = np.concatenate([M @ spec.u_old[:, a] for a in range(3)]) / spec.tau
    _, rhs_f = _momentum_forces(spec, include_normal=False)
    D = assemble_local(mesh, V1, V2VEC, divergence_local(g))
    Nn = assemble_local(mesh, V2, V2VEC, normal_mass_local(g))
    m1 = assemble_vector(mesh, V1, np.einsum("fq,qi->fi", g.dA, g.shape(1).values))
    gauge = sp.csr_matrix(m1[None, :])
    A = sp.bmat(
        [
            [Auu, -D.T, Nn.T, None],
            [-D, None, None, gauge.T],
            [Nn, None, None, None],
            [None, gauge, None, None],
        ],
        format="csr",
    )
    rhs = np.concatenate([rhs_u + rhs_f, np.zeros(V), np.zeros(N), np.zeros(1)])
    return AssembledSystem(A, rhs, [("u", 3 * N), ("p", V), ("lam", N), ("c", 1)], constraints=["mean_p"])


def step_stationary(geom, state, phi, mu, tau, params, solver=None):
    spec = NSSystemSpec(geom, state.u, state.w, phi, mu, state.X, tau, params)
    system = assemble_stationary(spec)
    try:
        x = solver.solve(system, "stationary") if solver is not None else solve_linear(system)
    except SolverError as exc:
        raise SolverError(f"stationary flow step at t={state.t:.6g}: {exc}") from exc
    parts = system.split(x)
    return _unflat(parts["u"]), parts["p"]


# ----------------------------------------------------------------------
# residual helpers used by diagnostics and tests


def normal_constraint_residual(geom, u) -> float:
    """``max_a |(u . n, N_a)|``."""
    Nn = assemble_local(geom.mesh, V2, V2VEC, normal_mass_local(geom))
    return float(np.max(np.abs(Nn @ _flat(u))))


def divergence_residual(geom, u) -> float:
    """``max_i |(div_P u, q_i)|`` over the order-1 basis."""
    D = assemble_local(geom.mesh, V1, V2VEC, divergence_local(geom))
    return float(np.max(np.abs(D @ _flat(u))))


def update_residual(geom, u, Y, tau) -> float:
    """``max_a |(Y . n - tau u . n, N_a)|``."""
    Nn = assemble_local(geom.mesh, V2, V2VEC, normal_mass_local(geom))
    return float(np.max(np.abs(Nn @ (_flat(Y) - tau * _flat(u)))))


def divergence_matrix(geom):
    return assemble_local(geom.mesh, V1, V2VEC, divergence_local(geom))


def flatten_vector(X):
    return _flat(X)


def unflatten_vector(x):
    return _unflat(x)
