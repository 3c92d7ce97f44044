"""Isoparametric curved surface geometry and pointwise surface operators.

A :class:`CurvedGeometry` is an order-k Lagrange parametrization over the
reference mesh together with everything evaluated at quadrature points:
tangent vectors, metric, normal, projection, shape operator, curvatures.
The shape operator comes from the second fundamental form of the element
map, so it equals minus the tangential derivative of the discrete normal
exactly on every element.

Sign convention: ``B = -Grad_P n`` with the outward normal, so the unit
sphere has ``H = tr B = -2`` and ``K = 1``.

Vector-field gradients are 3x3 arrays whose row ``A`` is the surface
gradient of the Cartesian component ``u^A``; this is the componentwise
gradient ``Grad_C u``, which annihilates the normal from the right.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .mesh import LinearSurfaceMesh
from .reference import (
    lagrange_gradients,
    lagrange_hessians,
    lagrange_nodes,
    lagrange_values,
    triangle_quadrature,
)


class DegenerateElementError(ValueError):
    pass


def element_dofs(mesh: LinearSurfaceMesh, order: int) -> np.ndarray:
    """Global node indices per element: vertices first, then edge nodes."""
    if order == 1:
        return mesh.triangles
    if order == 2:
        return np.hstack([mesh.triangles, mesh.n_vertices + mesh.face_edges])
    raise ValueError(f"unsupported order {order}")


def n_dofs(mesh: LinearSurfaceMesh, order: int) -> int:
    return mesh.n_vertices + (mesh.n_edges if order == 2 else 0)


def reference_nodes(mesh: LinearSurfaceMesh, order: int) -> np.ndarray:
    """Positions of the Lagrange nodes on the flat reference triangulation."""
    if order == 1:
        return mesh.vertices.copy()
    return np.vstack([mesh.vertices, mesh.edge_midpoints()])


def sphere_map(radius: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Radial projection onto the sphere of the given radius."""

    def project(x):
        x = np.asarray(x, dtype=float)
        return radius * x / np.linalg.norm(x, axis=-1, keepdims=True)

    return project


@dataclass(frozen=True)
class ShapeData:
    """Basis of a Lagrange space evaluated on a geometry."""

    order: int
    dofs: np.ndarray  # (F, n)
    values: np.ndarray  # (Q, n)
    ref_grads: np.ndarray  # (Q, n, 2)
    grads: np.ndarray  # (F, Q, n, 3) tangential surface gradients

    @property
    def n_local(self) -> int:
        return self.values.shape[1]


class CurvedGeometry:
    """Order-k parametrization ``X_h`` with cached quadrature-point data.

    Attributes of shape (F, Q, ...) are evaluated at the quadrature points
    of every element.  ``dA`` already includes the reference weights.
    """

    def __init__(self, mesh, nodes, order=2, quad_degree=6, orientation=None):
        if order not in (1, 2):
            raise ValueError("geometry order must be 1 or 2")
        nodes = np.array(nodes, dtype=float)
        if nodes.shape != (n_dofs(mesh, order), 3):
            raise ValueError(
                f"expected {n_dofs(mesh, order)} nodes of dimension 3, got {nodes.shape}"
            )
        nodes.setflags(write=False)
        self.mesh = mesh
        self.order = order
        self.nodes = nodes
        self.quad = triangle_quadrature(quad_degree)
        self.elem = element_dofs(mesh, order)
        self._compute(orientation)

    def _compute(self, orientation):
        pts = self.quad.points
        Xe = self.nodes[self.elem]  # (F, n, 3)
        vals = lagrange_values(self.order, pts)
        dref = lagrange_gradients(self.order, pts)
        d2 = lagrange_hessians(self.order)

        self.xq = np.einsum("qa,fai->fqi", vals, Xe)
        T = np.einsum("qad,fai->fqdi", dref, Xe)  # (F, Q, 2, 3)
        g = np.einsum("fqdi,fqei->fqde", T, T)
        detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        cross = np.cross(T[..., 0, :], T[..., 1, :])
        sqrtg = np.linalg.norm(cross, axis=-1)
        scale = np.max(sqrtg) if sqrtg.size else 1.0
        bad = sqrtg <= 1e-13 * scale
        if np.any(bad):
            f = int(np.argwhere(bad)[0, 0])
            raise DegenerateElementError(f"Jacobian rank < 2 on element {f}")
        ginv = np.empty_like(g)
        ginv[..., 0, 0] = g[..., 1, 1] / detg
        ginv[..., 1, 1] = g[..., 0, 0] / detg
        ginv[..., 0, 1] = -g[..., 0, 1] / detg
        ginv[..., 1, 0] = -g[..., 1, 0] / detg
        n = cross / sqrtg[..., None]

        if orientation is None:
            dA = self.quad.weights * sqrtg
            centre = np.einsum("fq,fqi->i", dA, self.xq) / dA.sum()
            flux = np.einsum("fq,fqi,fqi->", dA, self.xq - centre, n)
            orientation = 1 if flux >= 0 else -1
        self.orientation = int(orientation)
        n = self.orientation * n

        S = np.einsum("ade,fai->fdei", d2, Xe)  # second derivatives, (F, 2, 2, 3)
        b = np.einsum("fdei,fqi->fqde", S, n)
        Tup = np.einsum("fqde,fqei->fqdi", ginv, T)

        self.T = T
        self.g = g
        self.ginv = ginv
        self.sqrtg = sqrtg
        self.dA = self.quad.weights * sqrtg
        self.n = n
        self.Tup = Tup
        self.S = S
        self.b = b
        self.P = np.eye(3) - n[..., :, None] * n[..., None, :]
        self.B = np.einsum("fqde,fqdi,fqej->fqij", b, Tup, Tup)
        self.H = np.einsum("fqde,fqde->fq", ginv, b)
        detb = b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]
        self.K = detb / detg
        # Christoffel symbols Gamma^i_{kl} = g^{im} (d_kl X . d_m X)
        self.christoffel = np.einsum("fqim,fklj,fqmj->fqikl", ginv, S, T)

    # ------------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return self.elem.shape[0]

    @property
    def n_qp(self) -> int:
        return self.quad.points.shape[0]

    def area(self) -> float:
        return float(self.dA.sum())

    def integrate(self, values) -> float:
        """Quadrature of a (F, Q) array."""
        return float(np.einsum("fq,fq->", self.dA, values))

    def shape(self, order: int) -> ShapeData:
        if order == 1:
            return self._shape1
        if order == 2:
            return self._shape2
        raise ValueError(f"unsupported order {order}")

    def _make_shape(self, order):
        pts = self.quad.points
        vals = lagrange_values(order, pts)
        dref = lagrange_gradients(order, pts)
        grads = np.einsum("qad,fqdi->fqai", dref, self.Tup)
        return ShapeData(order, element_dofs(self.mesh, order), vals, dref, grads)

    @cached_property
    def _shape1(self):
        return self._make_shape(1)

    @cached_property
    def _shape2(self):
        return self._make_shape(2)

    def moved(self, new_nodes) -> "CurvedGeometry":
        """Geometry with the same mesh and orientation at new node positions."""
        return CurvedGeometry(
            self.mesh, new_nodes, self.order, self.quad.degree, orientation=self.orientation
        )

    def norm_B_squared(self) -> np.ndarray:
        return np.einsum("fqij,fqij->fq", self.B, self.B)


def build_curved_geometry(
    mesh: LinearSurfaceMesh,
    exact_map=None,
    k: int = 2,
    nodes=None,
    quad_degree: int = 6,
    orientation=None,
) -> CurvedGeometry:
    """Order-k surface from an analytic map (nodal interpolation) or node positions.

    Without either, the flat reference triangulation itself is used.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if nodes is None:
        nodes = reference_nodes(mesh, k)
        if exact_map is not None:
            nodes = np.asarray(exact_map(nodes), dtype=float)
    return CurvedGeometry(mesh, nodes, k, quad_degree, orientation)


# ----------------------------------------------------------------------
# fields at quadrature points


def _select(arr, element, qp):
    if element is None:
        return arr
    return arr[element] if qp is None else arr[element, qp]


def eval_scalar(geom: CurvedGeometry, coeffs, order: int = 2, element=None, qp=None):
    sd = geom.shape(order)
    out = np.einsum("qa,fa->fq", sd.values, np.asarray(coeffs)[sd.dofs])
    return _select(out, element, qp)


def eval_vector(geom: CurvedGeometry, coeffs, order: int = 2, element=None, qp=None):
    """Vector field with coefficients of shape (N, 3)."""
    sd = geom.shape(order)
    out = np.einsum("qa,fai->fqi", sd.values, np.asarray(coeffs)[sd.dofs])
    return _select(out, element, qp)


def grad_scalar(geom: CurvedGeometry, coeffs, element=None, qp=None, order: int = 2):
    """Tangential gradient ``g^ij d_j f d_i X``."""
    sd = geom.shape(order)
    out = np.einsum("fqai,fa->fqi", sd.grads, np.asarray(coeffs)[sd.dofs])
    return _select(out, element, qp)


def grad_vector_componentwise(geom: CurvedGeometry, coeffs, element=None, qp=None, order: int = 2):
    """``Grad_C u``: row A is the surface gradient of component ``u^A``."""
    sd = geom.shape(order)
    out = np.einsum("fqaj,fai->fqij", sd.grads, np.asarray(coeffs)[sd.dofs])
    return _select(out, element, qp)


def grad_vector_tangential(geom: CurvedGeometry, coeffs, element=None, qp=None, order: int = 2):
    """``Grad_P u = P Grad_C u``."""
    gc = grad_vector_componentwise(geom, coeffs, order=order)
    out = np.einsum("fqij,fqjk->fqik", geom.P, gc)
    return _select(out, element, qp)


def div_tangential(geom: CurvedGeometry, coeffs, element=None, qp=None, order: int = 2):
    """``div_P u = tr Grad_P u`` (equal to ``tr Grad_C u``)."""
    sd = geom.shape(order)
    out = np.einsum("fqai,fai->fq", sd.grads, np.asarray(coeffs)[sd.dofs])
    return _select(out, element, qp)


def gaussian_curvature(geom: CurvedGeometry, element=None, qp=None):
    """``K = (H^2 - |B|^2) / 2``."""
    K = 0.5 * (geom.H**2 - geom.norm_B_squared())
    return _select(K, element, qp)


# ----------------------------------------------------------------------
# intrinsic (covariant) route, used to cross-check the extrinsic operators


def _param_derivatives(geom, coeffs, order):
    """Field values and parametric derivatives d_k u at qp, (F,Q,3), (F,Q,2,3)."""
    sd = geom.shape(order)
    ue = np.asarray(coeffs)[sd.dofs]
    u = np.einsum("qa,fai->fqi", sd.values, ue)
    du = np.einsum("qad,fai->fqdi", sd.ref_grads, ue)
    return u, du


def covariant_gradient_tangential_part(geom: CurvedGeometry, coeffs, order: int = 2):
    """Covariant gradient of ``u_T = P u`` via Christoffel symbols.

    Contravariant components ``u^i = g^ij (u . d_j X)`` are differentiated in
    parameter space; returns (F, Q, 3, 3) with the first index the image
    direction of the tensor ``g^jk (d_k u^i + G^i_kl u^l) d_i X (x) d_j X``.
    """
    u, du = _param_derivatives(geom, coeffs, order)
    T, ginv, S = geom.T, geom.ginv, geom.S
    cov = np.einsum("fqi,fqdi->fqd", u, T)  # u . d_j X
    # d_k (u . d_j X) = d_k u . d_j X + u . d_kj X
    dcov = np.einsum("fqki,fqji->fqkj", du, T) + np.einsum("fqi,fkji->fqkj", u, S)
    # d_k g^{ij} = -g^{ia} (d_k g_ab) g^{bj},  d_k g_ab = d_ka X . d_b X + d_a X . d_kb X
    dg = np.einsum("fkai,fqbi->fqkab", S, T)
    dg = dg + np.swapaxes(dg, -1, -2)
    dginv = -np.einsum("fqia,fqkab,fqbj->fqkij", ginv, dg, ginv)
    contra = np.einsum("fqij,fqj->fqi", ginv, cov)
    dcontra = np.einsum("fqkij,fqj->fqki", dginv, cov) + np.einsum("fqij,fqkj->fqki", ginv, dcov)
    # nabla_k u^i
    nab = dcontra + np.einsum("fqikl,fql->fqki", geom.christoffel, contra)
    # tensor with components nab_k u^i g^{kj} d_i X (x) d_j X  -> row index i (image), column j
    return np.einsum("fqki,fqkj,fqia,fqjb->fqab", nab, ginv, T, T)


def covariant_divergence_tangential_part(geom: CurvedGeometry, coeffs, order: int = 2):
    """``div_S u_T = d_i u^i + G^i_ik u^k``."""
    u, du = _param_derivatives(geom, coeffs, order)
    T, ginv, S = geom.T, geom.ginv, geom.S
    cov = np.einsum("fqi,fqdi->fqd", u, T)
    dcov = np.einsum("fqki,fqji->fqkj", du, T) + np.einsum("fqi,fkji->fqkj", u, S)
    dg = np.einsum("fkai,fqbi->fqkab", S, T)
    dg = dg + np.swapaxes(dg, -1, -2)
    dginv = -np.einsum("fqia,fqkab,fqbj->fqkij", ginv, dg, ginv)
    contra = np.einsum("fqij,fqj->fqi", ginv, cov)
    div = np.einsum("fqiij,fqj->fq", dginv, cov) + np.einsum("fqij,fqij->fq", ginv, dcov)
    return div + np.einsum("fqiik,fqk->fq", geom.christoffel, contra)


def normal_component_gradient(geom: CurvedGeometry, coeffs, order: int = 2):
    """``Grad_S u_N`` from parametric derivatives and the Weingarten equation."""
    u, du = _param_derivatives(geom, coeffs, order)
    # d_k n = -b_kl g^{lm} d_m X
    dn = -np.einsum("fqkl,fqlm,fqmi->fqki", geom.b, geom.ginv, geom.T)
    duN = np.einsum("fqki,fqi->fqk", du, geom.n) + np.einsum("fqi,fqki->fqk", u, dn)
    return np.einsum("fqk,fqki->fqi", duN, geom.Tup)
