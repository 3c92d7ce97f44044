"""Piecewise-linear reference triangulations of closed surfaces.

The reference mesh is immutable: time evolution moves the curved
parametrization built on top of it, never the mesh itself.  Vertex and
edge indices are the stable identity of degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_REFINEMENT = 7


class MeshError(ValueError):
    """Raised when a triangulation violates the closed-surface invariants."""


class CapacityError(MeshError):
    pass


def _build_edges(triangles):
    local = np.array([[0, 1], [1, 2], [2, 0]])
    pairs = triangles[:, local].reshape(-1, 2)
    sorted_pairs = np.sort(pairs, axis=1)
    edges, inverse, counts = np.unique(
        sorted_pairs, axis=0, return_inverse=True, return_counts=True
    )
    face_edges = inverse.reshape(-1, 3)
    return edges, face_edges, counts


@dataclass(frozen=True, eq=False)
class LinearSurfaceMesh:
    """Flat-triangle triangulation of a closed orientable surface.

    ``vertices`` is (V, 3), ``triangles`` is (F, 3) with counterclockwise
    orientation seen from outside.  ``edges`` (E, 2) are sorted vertex pairs
    in lexicographic order, and ``face_edges[f, i]`` is the edge joining
    local vertices ``i`` and ``(i + 1) % 3`` of triangle ``f``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(init=False)
    face_edges: np.ndarray = field(init=False)
    edge_faces: np.ndarray = field(init=False)
    validate: bool = True

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (F, 3)")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle index out of range")
        edges, face_edges, counts = _build_edges(triangles)
        if self.validate and np.any(counts != 2):
            raise MeshError(
                f"{int(np.sum(counts != 2))} edges are not shared by exactly two triangles"
            )
        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        flat_e = face_edges.ravel()
        flat_f = np.repeat(np.arange(len(triangles)), 3)
        order = np.argsort(flat_e, kind="stable")
        fe, ff = flat_e[order], flat_f[order]
        first = np.ones(len(fe), dtype=bool)
        first[1:] = fe[1:] != fe[:-1]
        edge_faces[fe[first], 0] = ff[first]
        edge_faces[fe[~first], 1] = ff[~first]

        for name, value in (
            ("vertices", vertices),
            ("triangles", triangles),
            ("edges", edges),
            ("face_edges", face_edges),
            ("edge_faces", edge_faces),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.validate:
            self._check()

    def _check(self):
        # consistent orientation: each undirected edge appears once in each direction
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        uniq = np.unique(directed, axis=0)
        if len(uniq) != len(directed):
            raise MeshError("inconsistent triangle orientation")
        if np.min(self.triangle_areas()) <= 0.0:
            raise MeshError("degenerate triangle with zero area")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def area(self) -> float:
        return float(np.sum(self.triangle_areas()))

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def vertex_triangles(self) -> list[np.ndarray]:
        """Triangles incident to each vertex."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        bounds = np.searchsorted(flat[order], np.arange(self.n_vertices + 1))
        faces = order // 3
        return [faces[bounds[i]:bounds[i + 1]] for i in range(self.n_vertices)]


def mesh_size(mesh: LinearSurfaceMesh) -> float:
    """Longest edge of the mesh."""
    return float(np.max(mesh.edge_lengths()))


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    p = verts[faces]
    outward = np.einsum("fi,fi->f", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p.mean(axis=1))
    faces[outward < 0] = faces[outward < 0][:, ::-1]
    return verts, faces


def subdivide(mesh: LinearSurfaceMesh, radius: float = 1.0) -> LinearSurfaceMesh:
    """One 1-to-4 refinement with new vertices projected onto the sphere.

    Old vertices keep their indices; the midpoint of coarse edge ``e`` gets
    index ``V + e``.  This matches the quadratic dof numbering of the coarse
    mesh, so coarse P2 nodes are fine-mesh vertices with the same index.
    """
    V = mesh.n_vertices
    mid = mesh.edge_midpoints()
    mid = radius * mid / np.linalg.norm(mid, axis=1, keepdims=True)
    verts = np.vstack([mesh.vertices, mid])
    t = mesh.triangles
    m = V + mesh.face_edges  # m[:, 0] on edge (0,1), m[:, 1] on (1,2), m[:, 2] on (2,0)
    faces = np.concatenate(
        [
            np.stack([t[:, 0], m[:, 0], m[:, 2]], axis=1),
            np.stack([t[:, 1], m[:, 1], m[:, 0]], axis=1),
            np.stack([t[:, 2], m[:, 2], m[:, 1]], axis=1),
            m,
        ]
    )
    return LinearSurfaceMesh(verts, faces)


def generate_icosphere(
    refinement_level: int, radius: float = 1.0, max_level: int = MAX_REFINEMENT
) -> LinearSurfaceMesh:
    """Icosahedron refined ``refinement_level`` times, vertices on the sphere."""
    if refinement_level < 0:
        raise ValueError("refinement_level must be non-negative")
    if refinement_level > max_level:
        raise CapacityError(
            f"refinement level {refinement_level} exceeds the configured maximum {max_level}"
        )
    if radius <= 0:
        raise ValueError("radius must be positive")
    verts, faces = _icosahedron()
    mesh = LinearSurfaceMesh(radius * verts, faces)
    for _ in range(refinement_level):
        mesh = subdivide(mesh, radius)
    return mesh


def read_off(path) -> LinearSurfaceMesh:
    """Read an ASCII OFF file containing a closed triangle mesh."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or not lines[0].startswith("OFF"):
        raise MeshError(f"{path}: missing OFF header")
    header_rest = lines[0][3:].split()
    body = lines[1:]
    counts = header_rest if header_rest else body.pop(0).split()
    nv, nf = int(counts[0]), int(counts[1])
    if len(body) < nv + nf:
        raise MeshError(f"{path}: expected {nv} vertices and {nf} faces")
    verts = np.array([[float(x) for x in body[i].split()[:3]] for i in range(nv)])
    faces = []
    for line in body[nv:nv + nf]:
        parts = [int(x) for x in line.split()]
        if parts[0] != 3:
            raise MeshError(f"{path}: only triangular faces are supported")
        faces.append(parts[1:4])
    return LinearSurfaceMesh(verts, np.array(faces, dtype=np.int64))


def write_off(mesh: LinearSurfaceMesh, path) -> None:
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}"]
    out += [" ".join(f"{x:.17g}" for x in v) for v in mesh.vertices]
    out += ["3 " + " ".join(str(i) for i in t) for t in mesh.triangles]
    Path(path).write_text("\n".join(out) + "\n")
