"""Lagrange finite element spaces, sparse assembly and linear solves.

Scalar coefficient vectors have length ``N`` (number of nodes of the
space).  Vector fields are stored as (N, 3) arrays and flattened
component-major (all x, then all y, then all z) inside block systems.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import CurvedGeometry, element_dofs, n_dofs
from .mesh import LinearSurfaceMesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FESpace:
    """Order-1 or order-2 Lagrange space with 1 or 3 components."""

    geometry: CurvedGeometry
    order: int = 2
    ncomp: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.ncomp not in (1, 3):
            raise ValueError("ncomp must be 1 or 3")

    @property
    def mesh(self) -> LinearSurfaceMesh:
        return self.geometry.mesh

    @property
    def n_nodes(self) -> int:
        return n_dofs(self.mesh, self.order)

    @property
    def size(self) -> int:
        return self.n_nodes * self.ncomp

    @property
    def dofs(self) -> np.ndarray:
        return element_dofs(self.mesh, self.order)

    def node_positions(self) -> np.ndarray:
        """Lagrange node positions on the current curved surface."""
        g = self.geometry
        if self.order == g.order:
            return np.array(g.nodes)
        if self.order == 1:
            return np.array(g.nodes[: self.mesh.n_vertices])
        # order-2 nodes on an order-1 geometry: flat edge midpoints
        e = self.mesh.edges
        mid = 0.5 * (g.nodes[e[:, 0]] + g.nodes[e[:, 1]])
        return np.vstack([g.nodes, mid])


def interpolate(space: FESpace, func) -> np.ndarray:
    """Nodal interpolant of ``func(x)`` for x of shape (N, 3).

    Returns shape (N,) for scalar spaces and (N, 3) for vector spaces.
    """
    x = space.node_positions()
    vals = np.asarray(func(x), dtype=float)
    if space.ncomp == 1:
        vals = np.broadcast_to(vals, (len(x),)).copy()
    else:
        vals = np.broadcast_to(vals, (len(x), 3)).copy()
    return vals


# ----------------------------------------------------------------------
# sparse assembly


class _Pattern:
    """CSR structure for a fixed (row dofs, col dofs) element coupling."""

    def __init__(self, rows, cols, shape):
        r = np.broadcast_to(rows[:, :, None], (rows.shape[0], rows.shape[1], cols.shape[1]))
        c = np.broadcast_to(cols[:, None, :], r.shape)
        key = r.ravel().astype(np.int64) * shape[1] + c.ravel()
        uniq, self.inverse = np.unique(key, return_inverse=True)
        self.indices = (uniq % shape[1]).astype(np.int32)
        rowids = uniq // shape[1]
        self.indptr = np.searchsorted(rowids, np.arange(shape[0] + 1)).astype(np.int32)
        self.shape = shape
        self.nnz = len(uniq)

    def build(self, local):
        data = np.bincount(self.inverse, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


_PATTERNS: dict = {}


def _vector_dofs(dofs, n_nodes, ncomp):
    if ncomp == 1:
        return dofs
    return np.concatenate([dofs + a * n_nodes for a in range(ncomp)], axis=1)


def assemble_local(mesh, row_space, col_space, local) -> sp.csr_matrix:
    """Sum element matrices ``local`` (F, nr, nc) into a CSR matrix.

    ``row_space``/``col_space`` are (order, ncomp) pairs; local indices are
    component-major within each element (component a, node i -> a*n + i).
    """
    key = (id(mesh), row_space, col_space)
    pat = _PATTERNS.get(key)
    if pat is None or pat[0] is not mesh:
        ro, rc = row_space
        co, cc = col_space
        nr, nc = n_dofs(mesh, ro), n_dofs(mesh, co)
        rows = _vector_dofs(element_dofs(mesh, ro), nr, rc)
        cols = _vector_dofs(element_dofs(mesh, co), nc, cc)
        pat = (mesh, _Pattern(rows, cols, (nr * rc, nc * cc)))
        _PATTERNS[key] = pat
    return pat[1].build(np.asarray(local))


def assemble_vector(mesh, space, local) -> np.ndarray:
    """Sum element vectors (F, n) into a global vector."""
    order, ncomp = space
    nn = n_dofs(mesh, order)
    dofs = _vector_dofs(element_dofs(mesh, order), nn, ncomp)
    return np.bincount(dofs.ravel(), weights=np.asarray(local).ravel(), minlength=nn * ncomp)


def _weight(geom, weight):
    if weight is None:
        return geom.dA
    return geom.dA * np.broadcast_to(weight, geom.dA.shape)


def mass_local(geom, row_order=2, col_order=2, weight=None):
    wr = geom.shape(row_order).values
    wc = geom.shape(col_order).values
    return np.einsum("fq,qa,qb->fab", _weight(geom, weight), wr, wc)


def stiffness_local(geom, order=2, weight=None):
    G = geom.shape(order).grads
    return np.einsum("fq,fqai,fqbi->fab", _weight(geom, weight), G, G)


def assemble_mass(space: FESpace, weight=None, col_order=None) -> sp.csr_matrix:
    """Scalar mass matrix ``(w N_b, N_a)``; block-diagonal for vector spaces."""
    g = space.geometry
    co = space.order if col_order is None else col_order
    M = assemble_local(g.mesh, (space.order, 1), (co, 1), mass_local(g, space.order, co, weight))
    if space.ncomp == 3:
        M = sp.block_diag([M, M, M], format="csr")
    return M


def assemble_stiffness(space: FESpace, weight=None) -> sp.csr_matrix:
    g = space.geometry
    K = assemble_local(g.mesh, (space.order, 1), (space.order, 1), stiffness_local(g, space.order, weight))
    if space.ncomp == 3:
        K = sp.block_diag([K, K, K], format="csr")
    return K


def assemble_load(space: FESpace, values) -> np.ndarray:
    """``(f, N_a)`` for f given at quadrature points, (F, Q) or (F, Q, 3)."""
    g = space.geometry
    sd = g.shape(space.order)
    values = np.asarray(values)
    if space.ncomp == 1:
        local = np.einsum("fq,fq,qa->fa", g.dA, values, sd.values)
    else:
        local = np.einsum("fq,fqi,qa->fia", g.dA, values, sd.values).reshape(g.n_elements, -1)
    return assemble_vector(g.mesh, (space.order, space.ncomp), local)


def assemble_grad_load(space: FESpace, values) -> np.ndarray:
    """``(F, Grad N_a)`` for a tangential vector F at quadrature points (scalar space)."""
    g = space.geometry
    G = g.shape(space.order).grads
    local = np.einsum("fq,fqi,fqai->fa", g.dA, np.asarray(values), G)
    return assemble_vector(g.mesh, (space.order, 1), local)


def l2_norm(geom: CurvedGeometry, values) -> float:
    """L2 norm of a (F, Q) or (F, Q, ...) quadrature-point field."""
    v = np.asarray(values)
    sq = v**2 if v.ndim == 2 else np.sum(v.reshape(v.shape[0], v.shape[1], -1) ** 2, axis=-1)
    return float(np.sqrt(max(geom.integrate(sq), 0.0)))


# ----------------------------------------------------------------------
# block systems and solves


@dataclass
class AssembledSystem:
    """Sparse block system with named unknown blocks.

    ``layout`` is a list of (name, size) in unknown order.
    """

    matrix: sp.spmatrix
    rhs: np.ndarray
    layout: list
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        n = sum(s for _, s in self.layout)
        if self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError(
                f"system of shape {self.matrix.shape} / rhs {self.rhs.shape} does not match layout size {n}"
            )

    def offsets(self) -> dict:
        out, o = {}, 0
        for name, size in self.layout:
            out[name] = slice(o, o + size)
            o += size
        return out

    def split(self, x) -> dict:
        return {name: x[s] for name, s in self.offsets().items()}

    def block_residuals(self, x) -> dict:
        r = self.matrix @ x - self.rhs
        return {name: float(np.linalg.norm(r[s])) for name, s in self.offsets().items()}


def solve_linear(system: AssembledSystem, rtol: float = 1e-10, refine: int = 3) -> np.ndarray:
    """Sparse LU solve with residual check and a few refinement sweeps."""
    A = sp.csc_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed ({exc}); layout {system.layout}") from exc
    x = lu.solve(b)
    bound = rtol * (np.linalg.norm(b) + 1.0)
    for _ in range(refine):
        r = b - A @ x
        if not np.all(np.isfinite(r)):
            break
        if np.linalg.norm(r) <= bound:
            return x
        x = x + lu.solve(r)
    res = np.linalg.norm(A @ x - b)
    if not np.isfinite(res) or res > bound:
        diag = system.block_residuals(x) if np.all(np.isfinite(x)) else "non-finite solution"
        raise SolverError(f"linear solve residual {res:.3e} exceeds {bound:.3e}; blocks: {diag}")
    return x


class LinearSolver:
    """Direct solves that recycle factorizations across time steps.

    Consecutive systems of a time loop differ only slightly, so the last
    LU factorization of each named system is kept and used as a
    preconditioner for GMRES.  When GMRES needs more than ``max_iter``
    iterations the matrix is refactorized.  With ``reuse=False`` every call
    is a fresh direct solve.
    """

    def __init__(self, reuse: bool = True, max_iter: int = 25, rtol: float = 1e-10):
        self.reuse = reuse
        self.max_iter = max_iter
        self.rtol = rtol
        self._lu: dict = {}
        self.stats = {"factorizations": 0, "gmres_solves": 0, "gmres_iterations": 0}

    def _factor(self, name, A):
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorization of {name} failed ({exc})") from exc
        self.stats["factorizations"] += 1
        self._lu[name] = (A.shape, lu)
        return lu

    def solve(self, system: AssembledSystem, name: str = "default") -> np.ndarray:
        A = sp.csc_matrix(system.matrix)
        b = np.asarray(system.rhs, dtype=float)
        bound = self.rtol * (np.linalg.norm(b) + 1.0)
        cached = self._lu.get(name)
        if self.reuse and cached is not None and cached[0] == A.shape:
            x = self._gmres(A, b, cached[1], bound)
            if x is not None:
                return x
        lu = self._factor(name, A)
        x = lu.solve(b)
        for _ in range(3):
            r = b - A @ x
            if not np.all(np.isfinite(r)) or np.linalg.norm(r) <= bound:
                break
            x = x + lu.solve(r)
        res = np.linalg.norm(A @ x - b)
        if not np.isfinite(res) or res > bound:
            diag = system.block_residuals(x) if np.all(np.isfinite(x)) else "non-finite solution"
            raise SolverError(f"{name}: residual {res:.3e} exceeds {bound:.3e}; blocks: {diag}")
        return x

    def _gmres(self, A, b, lu, bound):
        """Right-preconditioned restarted GMRES with the stale factorization."""
        n = len(b)
        m = self.max_iter
        x = lu.solve(b)
        r = b - A @ x
        beta = np.linalg.norm(r)
        if beta <= bound:
            self.stats["gmres_solves"] += 1
            return x
        Vb = np.zeros((m + 1, n))
        Hm = np.zeros((m + 1, m))
        Vb[0] = r / beta
        for j in range(m):
            wv = A @ lu.solve(Vb[j])
            for i in range(j + 1):
                Hm[i, j] = wv @ Vb[i]
                wv -= Hm[i, j] * Vb[i]
            Hm[j + 1, j] = np.linalg.norm(wv)
            e1 = np.zeros(j + 2)
            e1[0] = beta
            y, *_ = np.linalg.lstsq(Hm[: j + 2, : j + 1], e1, rcond=None)
            res = np.linalg.norm(Hm[: j + 2, : j + 1] @ y - e1)
            if res <= 0.1 * bound or Hm[j + 1, j] == 0.0:
                break
            Vb[j + 1] = wv / Hm[j + 1, j]
        else:
            return None
        x = x + lu.solve(Vb[: j + 1].T @ y)
        if np.linalg.norm(b - A @ x) > bound:
            return None
        self.stats["gmres_solves"] += 1
        self.stats["gmres_iterations"] += j + 1
        return x


# ----------------------------------------------------------------------
# discrete unknowns


@dataclass
class FieldState:
    """All discrete unknowns at one time level.

    ``X`` holds the curved node positions (order 2); ``p`` lives on the
    vertices (order 1); all other fields on the order-2 nodes.
    """

    t: float
    X: np.ndarray
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    H: np.ndarray
    Y: np.ndarray
    w: np.ndarray
    step: int = 0

    def copy(self) -> "FieldState":
        return replace(
            self,
            **{k: np.array(getattr(self, k)) for k in ("X", "u", "p", "phi", "mu", "H", "Y", "w")},
        )


def lift_fields(state: FieldState, new_nodes, mesh=None) -> FieldState:
    """Reinterpret all coefficients on the surface with nodes ``new_nodes``.

    The lift is nodal: coefficient vectors are carried over unchanged and
    only the parametrization is replaced.
    """
    new_nodes = np.asarray(new_nodes, dtype=float)
    if new_nodes.shape != np.shape(state.X):
        raise ValueError(
            f"connectivity mismatch: {new_nodes.shape} nodes vs state with {np.shape(state.X)}"
        )
    if mesh is not None and len(new_nodes) != n_dofs(mesh, 2):
        raise ValueError("node count does not match the mesh")
    out = state.copy()
    out.X = new_nodes.copy()
    return out
