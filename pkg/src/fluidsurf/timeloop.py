"""Time stepping: phase field, flow and surface update, lift, stopping rules."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from .ch_step import assemble_ch, CHSystemSpec, mass_identity_residual, step_cahn_hilliard
from .diagnostics import divergence_norm
from .fem import (
    FESpace,
    FieldState,
    LinearSolver,
    SolverError,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    l2_norm,
    lift_fields,
)
from .mesh import generate_icosphere, mesh_size, read_off
from .nsmesh_step import step_ns_update
from .physics import (
    EnergyReport,
    ModelParams,
    ParameterError,
    compute_energies,
    double_well,
    initial_phase_field,
    initial_velocity,
)

log = logging.getLogger(__name__)

TERMINATIONS = ("reached_T_max", "equilibrium", "pinch_off", "failed")


@dataclass(frozen=True)
class SimulationConfig:
    params: ModelParams = field(default_factory=ModelParams)
    ic: str = "symmetric"
    seed: int = 0
    n_bumps: int = 100
    alpha: float = 100.0
    beta: float = 100.0
    level: int = 3
    order: int = 2
    radius: float = 1.0
    mesh_path: str | None = None
    c_tau: float = 1.0
    tau: float | None = None
    T_max: float = 1.0
    K0: float = -50.0
    eq_tol_u: float = 1e-6
    eq_tol_phi: float = 1e-6
    max_steps: int | None = None
    snapshot_every: int = 0
    reuse_factorization: bool = True

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ParameterError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        e = []
        if self.ic not in ("symmetric", "random", "uniform"):
            e.append(f"ic must be symmetric, random or uniform (got {self.ic!r})")
        if self.order != 2:
            e.append("only order 2 surfaces are supported by the time loop")
        if self.level < 0:
            e.append("level must be >= 0")
        if not self.radius > 0:
            e.append("radius must be > 0")
        if not self.c_tau > 0:
            e.append("c_tau must be > 0")
        if self.tau is not None and not self.tau > 0:
            e.append("tau must be > 0")
        if not self.T_max >= 0:
            e.append("T_max must be >= 0")
        if not self.K0 < 0:
            e.append("K0 must be < 0")
        if self.n_bumps < 0:
            e.append("n_bumps must be >= 0")
        if self.snapshot_every < 0:
            e.append("snapshot_every must be >= 0")
        return e

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        return d


@dataclass
class RunResult:
    state: FieldState
    termination: str
    critical_time: float | None
    energies: EnergyReport
    snapshots: list
    tau: float
    h: float
    steps: int
    metadata: dict = field(default_factory=dict)
    monitor: list = field(default_factory=list)
    error: str | None = None


# ----------------------------------------------------------------------


def build_mesh(config: SimulationConfig):
    if config.mesh_path:
        return read_off(config.mesh_path)
    return generate_icosphere(config.level, config.radius)


def time_step(config: SimulationConfig, h: float) -> tuple[float, int | None]:
    """Step size and number of steps to reach T_max exactly (if finite)."""
    tau0 = config.tau if config.tau is not None else config.c_tau * h**3
    if not math.isfinite(config.T_max):
        return tau0, None
    if config.T_max == 0:
        return tau0, 0
    n = max(1, math.ceil(config.T_max / tau0 - 1e-9))
    return config.T_max / n, n


def project_curvature(geom) -> np.ndarray:
    """L2 projection of the geometric mean curvature onto the order-2 space."""
    import scipy.sparse.linalg as spla

    S = FESpace(geom, 2)
    M = assemble_mass(S)
    return spla.spsolve(M.tocsc(), assemble_load(S, geom.H))


def initial_chemical_potential(geom, phi, H, params: ModelParams) -> np.ndarray:
    """Chemical potential of the initial phase field (no linearization)."""
    import scipy.sparse.linalg as spla

    sc = params.scaled()
    S = FESpace(geom, 2)
    M = assemble_mass(S)
    K = assemble_stiffness(S)
    phq = geo.eval_scalar(geom, phi)
    Hq = geo.eval_scalar(geom, H)
    _, dW = double_well(phq)
    dev = Hq - params.H0(phq)
    f = (sc.sigma_tilde / params.eps) * dW + sc.kappa_scale * (
        0.5 * params.dkappa(phq) * dev**2 - params.kappa(phq) * params.dH0(phq) * dev
    )
    rhs = params.eps * sc.sigma_tilde * (K @ phi) + assemble_load(S, f)
    return spla.spsolve(M.tocsc(), rhs)


def initial_state(config: SimulationConfig, mesh=None):
    mesh = mesh if mesh is not None else build_mesh(config)
    exact = geo.sphere_map(config.radius) if config.mesh_path is None else None
    geom = geo.build_curved_geometry(mesh, exact, k=config.order)
    X = np.array(geom.nodes)
    N = len(X)
    p = config.params
    if p.variant == "one_component":
        phi = initial_phase_field("uniform", X, value=p.phase_value)
    else:
        phi = initial_phase_field(
            config.ic, X, config.seed, config.n_bumps, config.alpha, config.beta, p.phase_value
        )
    H = project_curvature(geom)
    if p.variant == "one_component":
        mu = np.zeros(N)
    else:
        mu = initial_chemical_potential(geom, phi, H, p)
    u = initial_velocity(N)
    state = FieldState(
        t=0.0,
        X=X,
        u=u,
        p=np.zeros(mesh.n_vertices),
        phi=phi,
        mu=mu,
        H=H,
        Y=np.zeros((N, 3)),
        w=u.copy(),
    )
    return state, geom


def compute_relative_velocity(u, X_new, X_old, tau) -> np.ndarray:
    """``u - (X_new - X_old) / tau`` nodewise."""
    return np.asarray(u) - (np.asarray(X_new) - np.asarray(X_old)) / tau


def detect_pinch_off(geom, K0: float) -> bool:
    """True when the minimum Gaussian curvature over quadrature points is below K0."""
    if K0 == -math.inf:
        return False
    return bool(np.min(geom.K) < K0)


def advance(state: FieldState, geom, config: SimulationConfig, tau: float, solver=None):
    """One time step.  Returns (new state, new geometry, step info)."""
    p = config.params
    info = {}
    if p.variant == "one_component":
        phi, mu = state.phi.copy(), np.zeros_like(state.mu)
    else:
        phi, mu = step_cahn_hilliard(geom, state, tau, p, solver)
        info["mass_residual"] = mass_identity_residual(geom, phi, state.phi, state.w, tau)
    u, pr, H, Y = step_ns_update(geom, state, phi, mu, tau, p, solver)

    X_new = state.X + Y
    new_geom = geom.moved(X_new) if p.variant != "stationary_surface" else geom
    out = lift_fields(state, X_new)
    out.u, out.p, out.phi, out.mu, out.H, out.Y = u, pr, phi, mu, H, Y
    out.w = compute_relative_velocity(u, X_new, state.X, tau)
    out.step = state.step + 1
    return out, new_geom, info


def _snapshot(state):
    return state.copy()


def run(config: SimulationConfig, callback=None, snapshot_times=None) -> RunResult:
    """Advance until pinch-off, equilibrium, T_max or failure.

    ``callback(state, geom, row)`` is called after every recorded step.
    ``snapshot_times`` (if given) are the step indices at which snapshots
    are stored in addition to the regular cadence.
    """
    t_start = time.perf_counter()
    mesh = build_mesh(config)
    h = mesh_size(mesh)
    tau, n_steps = time_step(config, h)
    if config.max_steps is not None:
        n_steps = config.max_steps if n_steps is None else min(n_steps, config.max_steps)
    p = config.params
    solver = LinearSolver(reuse=config.reuse_factorization)
    state, geom = initial_state(config, mesh)
    report = EnergyReport()
    row = compute_energies(geom, state, p)
    report.append(row)
    snapshots = [_snapshot(state)]
    monitor = []
    termination, crit, error = None, None, None
    log.info(
        "run: variant=%s level=%d h=%.4g tau=%.4g steps=%s sigma_tilde=%s",
        p.variant, config.level, h, tau, n_steps, p.sigma_tilde_both(),
    )
    if callback:
        callback(state, geom, row)
    if detect_pinch_off(geom, config.K0):
        termination, crit = "pinch_off", 0.0

    step = 0
    while termination is None:
        if n_steps is not None and step >= n_steps:
            termination = "reached_T_max"
            break
        old = state
        try:
            state, geom, info = advance(state, geom, config, tau, solver)
        except (SolverError, geo.DegenerateElementError, np.linalg.LinAlgError) as exc:
            termination, error = "failed", str(exc)
            log.error("step %d failed: %s", step + 1, exc)
            break
        step += 1
        state.t = step * tau
        row = compute_energies(geom, state, p)
        report.append(row)
        u_norm = l2_norm(geom, geo.eval_vector(geom, state.u))
        phi_rate = l2_norm(geom, geo.eval_scalar(geom, state.phi - old.phi)) / tau
        info.update(step=step, t=state.t, u_norm=u_norm, phi_rate=phi_rate)
        info["div_norm"] = divergence_norm(geom, state.u)
        monitor.append(info)
        if callback:
            callback(state, geom, row)
        if config.snapshot_every and step % config.snapshot_every == 0:
            snapshots.append(_snapshot(state))
        elif snapshot_times is not None and step in snapshot_times:
            snapshots.append(_snapshot(state))
        if detect_pinch_off(geom, config.K0):
            termination, crit = "pinch_off", state.t
        elif u_norm < config.eq_tol_u and phi_rate < config.eq_tol_phi:
            termination = "equilibrium"
        elif not all(np.isfinite(v) for v in row.values()):
            termination, error = "failed", "non-finite energies"

    if snapshots[-1].step != state.step:
        snapshots.append(_snapshot(state))
    meta = {
        "config": config.to_dict(),
        "h": h,
        "tau": tau,
        "steps": step,
        "sigma_tilde": p.sigma_tilde_both(),
        "solver": dict(solver.stats),
        "wall_time_s": time.perf_counter() - t_start,
    }
    return RunResult(state, termination, crit, report, snapshots, tau, h, step, meta, monitor, error)
