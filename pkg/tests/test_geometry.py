import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidsurf import geometry as geo
from fluidsurf.fem import FESpace, interpolate
from fluidsurf.mesh import LinearSurfaceMesh, generate_icosphere
from fluidsurf.reference import lagrange_gradients, lagrange_hessians, lagrange_values, triangle_quadrature

from conftest import grid_patch, sphere


def catenoid_patch(c=0.5, n=8):
    """Triangulated catenoid band around the neck, analytic nodes."""
    u = np.linspace(0.0, 2 * np.pi, 4 * n, endpoint=False)
    v = np.linspace(-0.4, 0.4, n + 1)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    flat = np.column_stack([U.ravel(), Vv.ravel()])

    def emb(uv):
        r = c * np.cosh(uv[:, 1] / c)
        return np.column_stack([r * np.cos(uv[:, 0]), r * np.sin(uv[:, 0]), uv[:, 1]])

    nu = len(u)
    idx = np.arange(flat.shape[0]).reshape(nu, n + 1)
    tris = []
    for i in range(nu):
        for j in range(n):
            a, b = idx[i, j], idx[(i + 1) % nu, j]
            cc, d = idx[(i + 1) % nu, j + 1], idx[i, j + 1]
            tris += [[a, b, cc], [a, cc, d]]
    mesh = LinearSurfaceMesh(emb(flat), np.array(tris), validate=False)
    # quadratic nodes: parameter-space midpoints mapped exactly (handles the seam)
    e = mesh.edges
    ua, ub = flat[e[:, 0]], flat[e[:, 1]]
    du = ub[:, 0] - ua[:, 0]
    du = np.where(du > np.pi, du - 2 * np.pi, np.where(du < -np.pi, du + 2 * np.pi, du))
    mid = np.column_stack([ua[:, 0] + 0.5 * du, 0.5 * (ua[:, 1] + ub[:, 1])])
    nodes = np.vstack([emb(flat), emb(mid)])
    return geo.build_curved_geometry(mesh, nodes=nodes, k=2), c


def test_sphere_area_level3():
    assert abs(sphere(3).area() - 4 * math.pi) <= 1e-3


def test_mean_curvature_sign_and_bound():
    errs = [np.max(np.abs(sphere(L).H + 2.0)) for L in (2, 3, 4)]
    assert errs[1] <= 0.05
    assert errs[0] > errs[1] > errs[2]


def test_gaussian_curvature_level3():
    g = sphere(3)
    assert np.max(np.abs(g.K - 1.0)) <= 0.1
    assert np.allclose(geo.gaussian_curvature(g), g.K, atol=1e-10)


def test_outward_normal_on_sphere():
    g = sphere(2)
    x = g.xq / np.linalg.norm(g.xq, axis=-1, keepdims=True)
    assert np.min(np.einsum("fqi,fqi->fq", x, g.n)) > 0.99


def test_flat_patch_has_no_curvature():
    g = geo.build_curved_geometry(grid_patch(), None, k=1)
    assert np.max(np.abs(g.B)) == 0.0
    assert np.max(np.abs(g.K)) == 0.0
    assert g.area() == pytest.approx(4.0, rel=1e-14)


def test_catenoid_negative_gaussian_curvature():
    errs = []
    for n in (8, 16):
        g, c = catenoid_patch(n=n)
        assert np.all(g.K < 0)
        z = g.xq[..., 2]
        exact = -1.0 / (c**2 * np.cosh(z / c) ** 4)
        errs.append(np.max(np.abs(g.K - exact)) / np.max(np.abs(exact)))
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.06


def test_metric_and_projection_consistency():
    g = sphere(2)
    assert np.allclose(np.einsum("fqde,fqeg->fqdg", g.g, g.ginv), np.eye(2), atol=1e-12)
    assert np.allclose(np.einsum("fqij,fqj->fqi", g.B, g.n), 0, atol=1e-12)
    assert np.allclose(g.B, np.swapaxes(g.B, -1, -2), atol=1e-12)
    assert np.allclose(np.einsum("fqii->fq", g.B), g.H, atol=1e-12)


def test_christoffel_matches_metric_derivatives():
    # Gamma_{i k l} = (d_k g_il + d_l g_ik - d_i g_kl) / 2, metric derivatives by central differences
    g = sphere(1)
    f, q = 7, 3
    Xe = g.nodes[g.elem[f]]
    pt = g.quad.points[q]
    d = 1e-5

    def metric(p):
        T = np.einsum("ad,ai->di", lagrange_gradients(2, p[None])[0], Xe)
        return T @ T.T

    dg = np.empty((2, 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = d
        dg[k] = (metric(pt + e) - metric(pt - e)) / (2 * d)
    # dg[k, i, l] = d_k g_il; the last term is d_i g_kl = dg[i, k, l]
    low = 0.5 * (np.einsum("kil->ikl", dg) + np.einsum("lik->ikl", dg) - dg)
    ref = np.einsum("im,mkl->ikl", np.linalg.inv(metric(pt)), low)
    assert np.allclose(g.christoffel[f, q], ref, atol=1e-7)


def test_tangential_gradient_of_coordinate():
    g = sphere(3)
    f = g.nodes[:, 0]
    grad = geo.grad_scalar(g, f)
    # x0 is a coordinate of the discrete surface: exactly P_h e0
    assert np.allclose(grad, g.P[..., 0, :], atol=1e-12)
    x = g.xq / np.linalg.norm(g.xq, axis=-1, keepdims=True)
    analytic = np.array([1.0, 0, 0]) - x[..., :1] * x
    assert np.max(np.abs(grad - analytic)) < 0.02


def test_gradient_of_constant_vanishes():
    g = sphere(2)
    N = len(g.nodes)
    assert np.max(np.abs(geo.grad_scalar(g, np.full(N, 3.0)))) < 1e-12
    c = np.tile([1.0, -2.0, 0.5], (N, 1))
    assert np.max(np.abs(geo.grad_vector_componentwise(g, c))) < 1e-12


def test_div_of_constant_and_position():
    g = sphere(3)
    N = len(g.nodes)
    # constant field: Grad_C c = 0, so the tangential divergence vanishes
    assert np.max(np.abs(geo.div_tangential(g, np.tile([0.3, 1.0, -2.0], (N, 1))))) < 1e-12
    # position field: Grad_C X_h = P_h, trace 2 = -H on the unit sphere
    assert np.allclose(geo.div_tangential(g, g.nodes), 2.0, atol=1e-12)


def test_killing_field_is_divergence_free():
    g = sphere(3)
    u = np.cross([0.2, -0.7, 1.1], g.nodes)
    assert np.max(np.abs(geo.div_tangential(g, u))) < 1e-8


def rotation(a, b, c):
    def R(axis, t):
        ct, st_ = math.cos(t), math.sin(t)
        i, j = [k for k in range(3) if k != axis]
        M = np.eye(3)
        M[i, i], M[i, j], M[j, i], M[j, j] = ct, -st_, st_, ct
        return M

    return R(0, a) @ R(1, b) @ R(2, c)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 6.28), st.floats(0, 6.28), st.floats(0, 6.28))
def test_gradient_norm_rotation_invariant(a, b, c):
    g = sphere(1)
    Q = rotation(a, b, c)
    gr = g.moved(g.nodes @ Q.T)
    f = np.sin(2 * g.nodes[:, 0]) + g.nodes[:, 1] * g.nodes[:, 2]
    n1 = np.linalg.norm(geo.grad_scalar(g, f), axis=-1)
    n2 = np.linalg.norm(geo.grad_scalar(gr, f), axis=-1)
    assert np.allclose(n1, n2, atol=1e-12)
    assert np.allclose(g.H, gr.H, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 4.0))
def test_curvatures_scale_with_radius(r):
    g = geo.build_curved_geometry(generate_icosphere(2, r), geo.sphere_map(r), k=2)
    ref = sphere(2)
    assert np.allclose(g.H * r, ref.H, atol=1e-10)
    assert np.allclose(g.K * r * r, ref.K, atol=1e-10)


def test_degenerate_element_detected():
    m = generate_icosphere(1)
    nodes = geo.reference_nodes(m, 2)
    nodes[geo.element_dofs(m, 2)[0]] = nodes[m.triangles[0, 0]]
    with pytest.raises(geo.DegenerateElementError):
        geo.build_curved_geometry(m, nodes=nodes, k=2)


def test_moved_keeps_orientation():
    g = sphere(2)
    assert g.moved(0.5 * np.array(g.nodes)).orientation == g.orientation
    assert g.moved(0.5 * np.array(g.nodes)).area() == pytest.approx(0.25 * g.area(), rel=1e-12)


def test_node_count_checked():
    m = generate_icosphere(1)
    with pytest.raises(ValueError):
        geo.CurvedGeometry(m, np.zeros((m.n_vertices, 3)), order=2)


def test_reference_quadrature_exactness():
    # monomials x^a y^b on the unit triangle: a! b! / (a + b + 2)!
    for deg in (2, 6, 8):
        q = triangle_quadrature(deg)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                val = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
                ref = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                assert val == pytest.approx(ref, abs=1e-14)


def test_lagrange_basis_properties():
    from fluidsurf.reference import lagrange_nodes

    for order in (1, 2):
        nodes = lagrange_nodes(order)
        assert np.allclose(lagrange_values(order, nodes), np.eye(len(nodes)), atol=1e-14)
        pts = triangle_quadrature(6).points
        assert np.allclose(lagrange_values(order, pts).sum(axis=1), 1.0)
        assert np.allclose(lagrange_gradients(order, pts).sum(axis=1), 0.0, atol=1e-13)
    assert np.allclose(lagrange_hessians(2).sum(axis=0), 0.0, atol=1e-13)


def test_interpolation_error_order3():
    errs, hs = [], []
    from fluidsurf.mesh import mesh_size

    for L in (2, 3, 4):
        g = sphere(L)
        S = FESpace(g, 2)
        c = interpolate(S, lambda x: np.sin(x[:, 0]))
        e = geo.eval_scalar(g, c) - np.sin(g.xq[..., 0])
        errs.append(math.sqrt(g.integrate(e * e)))
        hs.append(mesh_size(g.mesh))
    slopes = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(2)]
    assert min(slopes) > 2.7
