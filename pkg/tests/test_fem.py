import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidsurf import geometry as geo
from fluidsurf.fem import (
    AssembledSystem,
    FESpace,
    FieldState,
    LinearSolver,
    SolverError,
    assemble_load,
    assemble_local,
    assemble_mass,
    assemble_stiffness,
    interpolate,
    l2_norm,
    lift_fields,
    mass_local,
    solve_linear,
    stiffness_local,
)

from conftest import sphere


def naive_assembly(dofs, local, n):
    A = np.zeros((n, n))
    for f, d in enumerate(dofs):
        A[np.ix_(d, d)] += local[f]
    return A


def test_assembly_matches_element_loop():
    g = sphere(1)
    n = geo.n_dofs(g.mesh, 2)
    loc = stiffness_local(g)
    A = assemble_local(g.mesh, (2, 1), (2, 1), loc)
    assert np.allclose(A.toarray(), naive_assembly(g.elem, loc, n), atol=1e-14)


def test_vector_assembly_component_major():
    g = sphere(1)
    n = geo.n_dofs(g.mesh, 2)
    loc = mass_local(g)
    big = np.zeros((len(loc), 18, 18))
    for a in range(3):
        big[:, 6 * a:6 * a + 6, 6 * a:6 * a + 6] = loc
    A = assemble_local(g.mesh, (2, 3), (2, 3), big).toarray()
    M = assemble_mass(FESpace(g, 2)).toarray()
    assert np.allclose(A, np.kron(np.eye(3), M), atol=1e-15)
    assert sp.issparse(assemble_mass(FESpace(g, 2, 3)))
    assert np.allclose(assemble_mass(FESpace(g, 2, 3)).toarray(), A)


def test_mass_total_is_area():
    g = sphere(3)
    M = assemble_mass(FESpace(g, 2))
    one = np.ones(M.shape[0])
    assert abs(one @ M @ one - 4 * math.pi) <= 1e-3


def test_constants_in_stiffness_kernel():
    g = sphere(3)
    K = assemble_stiffness(FESpace(g, 2))
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) <= 1e-12
    assert abs(K - K.T).max() < 1e-13


def test_first_laplace_beltrami_eigenvalue():
    # l(l+1) = 2 for l = 1 on the unit sphere
    g = sphere(2)
    S = FESpace(g, 2)
    K, M = assemble_stiffness(S).tocsc(), assemble_mass(S).tocsc()
    vals = np.sort(spla.eigsh(K, k=5, M=M, sigma=-0.5, which="LM", return_eigenvectors=False))
    assert abs(vals[0]) < 1e-8
    assert np.all(np.abs(vals[1:4] - 2.0) <= 0.05)
    assert abs(vals[4] - 6.0) <= 0.15


def test_interpolate_constant_and_nodes():
    g = sphere(2)
    S = FESpace(g, 2)
    assert np.all(interpolate(S, lambda x: np.ones(len(x))) == 1.0)
    c = interpolate(S, lambda x: x[:, 0] * x[:, 1])
    pos = S.node_positions()
    assert np.allclose(c, pos[:, 0] * pos[:, 1], atol=1e-14)


def test_load_and_l2_norm():
    g = sphere(3)
    S = FESpace(g, 2)
    b = assemble_load(S, np.ones_like(g.dA))
    assert b.sum() == pytest.approx(g.area(), rel=1e-13)
    assert l2_norm(g, np.ones_like(g.dA)) == pytest.approx(math.sqrt(g.area()), rel=1e-13)


def _system(A, b):
    return AssembledSystem(sp.csr_matrix(A), np.asarray(b, float), [("x", len(b))])


def test_identity_system():
    b = np.arange(5.0)
    assert np.allclose(solve_linear(_system(np.eye(5), b)), b)


def test_mass_system_recovers_ones():
    g = sphere(2)
    M = assemble_mass(FESpace(g, 2))
    x = solve_linear(_system(M, M @ np.ones(M.shape[0])))
    assert np.max(np.abs(x - 1)) <= 1e-10


def test_random_spd_matches_dense_oracle():
    rng = np.random.default_rng(3)
    Q = rng.standard_normal((100, 100))
    A = Q @ Q.T + 100 * np.eye(100)
    b = rng.standard_normal(100)
    x = solve_linear(_system(A, b))
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-9, rtol=0)


def test_singular_system_raises():
    A = np.zeros((3, 3))
    A[0, 0] = 1.0
    with pytest.raises(SolverError):
        solve_linear(_system(A, np.ones(3)))


def test_layout_mismatch_rejected():
    with pytest.raises(ValueError):
        AssembledSystem(sp.eye(3, format="csr"), np.ones(3), [("x", 2)])


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.3), st.integers(0, 100))
def test_reused_factorization_matches_direct(delta, seed):
    rng = np.random.default_rng(seed)
    n = 60
    A0 = sp.random(n, n, density=0.1, random_state=seed) + 10 * sp.eye(n)
    A1 = A0 + delta * sp.diags(rng.standard_normal(n))
    b = rng.standard_normal(n)
    s = LinearSolver()
    s.solve(_system(A0, b), "a")
    x = s.solve(_system(A1, b), "a")
    assert np.allclose(x, spla.spsolve(sp.csc_matrix(A1), b), atol=1e-9)


def test_reuse_statistics():
    g = sphere(2)
    M = assemble_mass(FESpace(g, 2))
    b = np.ones(M.shape[0])
    s = LinearSolver()
    for k in range(3):
        s.solve(_system(M * (1 + 1e-3 * k), b), "m")
    assert s.stats["factorizations"] == 1
    assert s.stats["gmres_solves"] == 2
    s2 = LinearSolver(reuse=False)
    for k in range(3):
        s2.solve(_system(M, b), "m")
    assert s2.stats["factorizations"] == 3


def _state(g, rng):
    N = len(g.nodes)
    V = g.mesh.n_vertices
    return FieldState(
        t=0.0, X=np.array(g.nodes), u=rng.standard_normal((N, 3)), p=rng.standard_normal(V),
        phi=rng.standard_normal(N), mu=rng.standard_normal(N), H=rng.standard_normal(N),
        Y=np.zeros((N, 3)), w=np.zeros((N, 3)),
    )


def test_lift_roundtrip_and_constants():
    g = sphere(2)
    s = _state(g, np.random.default_rng(0))
    s.phi[:] = 0.7
    moved = lift_fields(s, 1.1 * s.X)
    back = lift_fields(moved, s.X)
    for k in ("u", "p", "phi", "mu", "H"):
        assert np.array_equal(getattr(back, k), getattr(s, k))
    assert np.all(moved.phi == 0.7)
    with pytest.raises(ValueError):
        lift_fields(s, s.X[:-1])


def test_lift_changes_integral_through_area_only():
    g = sphere(3)
    rng = np.random.default_rng(1)
    s = _state(g, rng)
    Y = 1e-3 * rng.standard_normal(s.X.shape)
    g2 = g.moved(s.X + Y)
    phi = s.phi
    d = abs(g2.integrate(geo.eval_scalar(g2, phi)) - g.integrate(geo.eval_scalar(g, phi)))
    ratio = d / np.max(np.abs(Y))
    Y2 = 0.5 * Y
    g3 = g.moved(s.X + Y2)
    d2 = abs(g3.integrate(geo.eval_scalar(g3, phi)) - g.integrate(geo.eval_scalar(g, phi)))
    # linear in the displacement
    assert d2 / np.max(np.abs(Y2)) == pytest.approx(ratio, rel=0.05)
