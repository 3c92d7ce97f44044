import dataclasses
import math

import numpy as np
import pytest

from fluidsurf import geometry as geo
from fluidsurf import timeloop
from fluidsurf.fem import FieldState, LinearSolver, SolverError
from fluidsurf.mesh import mesh_size
from fluidsurf.physics import ModelParams, ParameterError, compute_energies
from fluidsurf.timeloop import (
    SimulationConfig,
    advance,
    compute_relative_velocity,
    detect_pinch_off,
    initial_state,
    run,
    time_step,
)

from conftest import sphere
from test_geometry import catenoid_patch


def test_config_validation():
    with pytest.raises(ParameterError, match="K0"):
        SimulationConfig(K0=1.0)
    with pytest.raises(ParameterError) as e:
        SimulationConfig(tau=-1.0, ic="blob", c_tau=0)
    assert "tau" in str(e.value) and "ic" in str(e.value) and "c_tau" in str(e.value)


def test_time_step_hits_T_max():
    cfg = SimulationConfig(T_max=0.05)
    tau, n = time_step(cfg, 0.3249196962329064)
    assert n * tau == pytest.approx(0.05, rel=1e-14)
    assert tau <= 0.3249196962329064**3
    assert time_step(SimulationConfig(T_max=0.0), 0.1)[1] == 0
    assert time_step(SimulationConfig(T_max=math.inf), 0.1) == (pytest.approx(1e-3), None)
    assert time_step(SimulationConfig(tau=0.01, T_max=0.1), 0.5) == (pytest.approx(0.01), 10)


def test_relative_velocity_eulerian_and_rest():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10, 3))
    u = rng.standard_normal((10, 3))
    assert np.array_equal(compute_relative_velocity(u, X, X, 0.1), u)
    assert np.all(compute_relative_velocity(np.zeros((10, 3)), X, X, 0.1) == 0)


def test_relative_velocity_shrinking_sphere():
    # normal velocity u = -c X on the unit sphere realized by the grid: w = 0
    g = sphere(2)
    X = np.array(g.nodes)
    c, tau = 0.3, 1e-2
    u = -c * X
    w = compute_relative_velocity(u, X + tau * u, X, tau)
    Pw = geo.eval_vector(g, w) - np.einsum("fqi,fqi->fq", geo.eval_vector(g, w), g.n)[..., None] * g.n
    assert np.max(np.abs(Pw)) <= 1e-12


def test_pinch_off_detection():
    assert not detect_pinch_off(sphere(2), -10.0)
    g, c = catenoid_patch(c=0.2, n=16)
    assert np.min(g.K) < -10.0
    assert detect_pinch_off(g, -10.0)
    assert not detect_pinch_off(g, -math.inf)


def test_initial_state():
    cfg = SimulationConfig(level=2, ic="random", seed=3)
    state, g = initial_state(cfg)
    assert np.all(state.u == 0) and np.all(state.w == 0) and np.all(state.Y == 0)
    assert len(state.p) == g.mesh.n_vertices
    assert np.max(np.abs(state.H + 2)) < 0.2
    e = compute_energies(g, state, cfg.params)
    assert e["F_K"] == 0.0


def test_run_with_zero_T_max():
    res = run(SimulationConfig(level=1, T_max=0.0))
    assert res.termination == "reached_T_max"
    assert res.steps == 0 and len(res.snapshots) == 1 and len(res.energies) == 1


def test_run_counts_steps_and_time():
    cfg = SimulationConfig(level=1, ic="symmetric", T_max=0.1, tau=0.025)
    res = run(cfg)
    assert res.termination == "reached_T_max"
    assert res.steps == 4
    assert res.state.t == pytest.approx(0.1)
    assert len(res.energies) == 5 and len(res.monitor) == 4
    assert res.metadata["solver"]["factorizations"] >= 2


def test_run_deterministic():
    cfg = SimulationConfig(level=1, ic="random", seed=7, T_max=0.05, tau=0.0125)
    a, b = run(cfg), run(cfg)
    assert a.energies.rows == b.energies.rows
    assert np.array_equal(a.state.X, b.state.X)


def test_stationary_variant_keeps_surface_and_mass():
    cfg = SimulationConfig(params=ModelParams(variant="stationary_surface"), level=2, T_max=0.02, tau=0.005)
    res = run(cfg)
    assert np.array_equal(res.state.X, res.snapshots[0].X)
    assert max(abs(m["mass_residual"]) for m in res.monitor) <= 1e-10
    F = res.energies.column("F_GL") + res.energies.column("F_H")
    assert np.all(np.diff(F) <= 0)


def test_phase_mass_drift_small():
    cfg = SimulationConfig(level=2, ic="symmetric", T_max=0.02, tau=0.005)
    res = run(cfg)
    g0 = sphere(2)
    g1 = g0.moved(res.state.X)
    m0 = g0.integrate(geo.eval_scalar(g0, res.snapshots[0].phi))
    m1 = g1.integrate(geo.eval_scalar(g1, res.state.phi))
    assert abs(m1 - m0) < 1e-2 * g0.area()


def test_pinch_off_termination_invariant():
    cfg = SimulationConfig(level=2, ic="random", seed=0, K0=-0.5, T_max=1.0, tau=0.01, max_steps=40)
    res = run(cfg)
    assert res.termination == "pinch_off"
    assert res.critical_time == pytest.approx(res.state.t)
    assert res.energies.rows[-1]["min_K"] < cfg.K0


def test_solver_failure_recorded(monkeypatch):
    def boom(*a, **k):
        raise SolverError("singular")

    monkeypatch.setattr(timeloop, "step_ns_update", boom)
    res = run(SimulationConfig(level=1, T_max=0.1, tau=0.05))
    assert res.termination == "failed"
    assert "singular" in res.error
    assert res.steps == 0


def _rest_state(g):
    N = len(g.nodes)
    return FieldState(0.0, np.array(g.nodes), np.zeros((N, 3)), np.zeros(g.mesh.n_vertices),
                      np.ones(N), np.zeros(N), np.full(N, -2.0), np.zeros((N, 3)), np.zeros((N, 3)))


@pytest.mark.xfail(strict=True, reason="order-2 curvature offset moves the resting sphere by O(tau)")
def test_equilibrium_input_is_fixed_point():
    g = sphere(2)
    cfg = SimulationConfig(params=ModelParams(variant="one_component"), level=2)
    s = _rest_state(g)
    out, _, _ = advance(s, g, cfg, 1e-3, LinearSolver())
    assert np.max(np.abs(out.X - s.X)) <= 1e-8
    assert np.max(np.abs(out.u)) <= 1e-8


def test_advance_moves_surface_by_update():
    cfg = SimulationConfig(level=2, ic="random")
    s, g = initial_state(cfg)
    tau = 1e-3
    out, g1, info = advance(s, g, cfg, tau, LinearSolver())
    assert out.step == 1
    assert np.allclose(out.X, s.X + out.Y)
    assert np.allclose(g1.nodes, out.X)
    # area rate is bounded by the surface divergence of the velocity
    assert abs(g1.area() - g.area()) <= 2 * tau * math.sqrt(g.area()) * (info.get("div_norm") or 1.0) + 1e-8


def test_friction_only_kinetic_energy_decays():
    g = sphere(2)
    cfg = SimulationConfig(params=ModelParams(kappa1=0.0, kappa2=0.0, gamma=5.0), level=2)
    s = _rest_state(g)
    s.u = np.cross([0, 0, 1.0], g.nodes)
    s.w = s.u.copy()
    solver = LinearSolver()
    F = [compute_energies(g, s, cfg.params)["F_K"]]
    for _ in range(4):
        s, g, _ = advance(s, g, cfg, 1e-2, solver)
        F.append(compute_energies(g, s, cfg.params)["F_K"])
    assert np.all(np.diff(F) < 0)
