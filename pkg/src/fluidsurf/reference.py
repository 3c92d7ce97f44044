"""Reference-triangle quadrature and Lagrange shape functions.

Reference triangle: vertices (0, 0), (1, 0), (0, 1); barycentrics
l0 = 1 - x - y, l1 = x, l2 = y.  Quadratic nodes are ordered
v0, v1, v2, m01, m12, m20, which is also the VTK quadratic-triangle order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleQuadrature:
    points: np.ndarray  # (Q, 2) reference coordinates
    weights: np.ndarray  # (Q,), sums to the reference area 1/2
    degree: int


def _sym_points(orbits):
    bary, w = [], []
    for weight, (a, b, c) in orbits:
        perms = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
        for p in sorted(perms):
            bary.append(p)
            w.append(weight)
    bary = np.array(bary)
    return bary[:, 1:], 0.5 * np.array(w)


# Dunavant (1985) rules, weights normalised to 1.
_DUNAVANT = {
    2: [(1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    6: [
        (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
    8: [
        (0.144315607677787, (1 / 3, 1 / 3, 1 / 3)),
        (0.095091634267285, (0.081414823414554, 0.459292588292723, 0.459292588292723)),
        (0.103217370534718, (0.658861384496480, 0.170569307751760, 0.170569307751760)),
        (0.032458497623198, (0.898905543365938, 0.050547228317031, 0.050547228317031)),
        (0.027230314174435, (0.008394777409958, 0.263112829634638, 0.728492392955404)),
    ],
}


def triangle_quadrature(degree: int = 6) -> TriangleQuadrature:
    """Symmetric rule exact for polynomials up to ``degree`` (2, 6 or 8)."""
    if degree not in _DUNAVANT:
        raise ValueError(f"no triangle rule of degree {degree}; choose from {sorted(_DUNAVANT)}")
    pts, w = _sym_points(_DUNAVANT[degree])
    # rules are published to 15 digits; renormalise the weight sum exactly
    w = w * (0.5 / w.sum())
    return TriangleQuadrature(pts, w, degree)


def _bary(pts):
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # grad of barycentrics
_EDGES = ((0, 1), (1, 2), (2, 0))


def lagrange_values(order: int, pts) -> np.ndarray:
    """Shape function values, shape (Q, n_local)."""
    lam = _bary(pts)
    if order == 1:
        return lam
    if order == 2:
        vert = lam * (2.0 * lam - 1.0)
        edge = np.stack([4.0 * lam[:, i] * lam[:, j] for i, j in _EDGES], axis=1)
        return np.hstack([vert, edge])
    raise ValueError(f"unsupported element order {order}")


def lagrange_gradients(order: int, pts) -> np.ndarray:
    """Reference gradients, shape (Q, n_local, 2)."""
    lam = _bary(pts)
    nq = lam.shape[0]
    if order == 1:
        return np.broadcast_to(_DL, (nq, 3, 2)).copy()
    if order == 2:
        out = np.empty((nq, 6, 2))
        for i in range(3):
            out[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DL[i]
        for k, (i, j) in enumerate(_EDGES):
            out[:, 3 + k] = 4.0 * (lam[:, i, None] * _DL[j] + lam[:, j, None] * _DL[i])
        return out
    raise ValueError(f"unsupported element order {order}")


def lagrange_hessians(order: int) -> np.ndarray:
    """Reference second derivatives (constant on the element), (n_local, 2, 2)."""
    if order == 1:
        return np.zeros((3, 2, 2))
    if order == 2:
        out = np.empty((6, 2, 2))
        for i in range(3):
            out[i] = 4.0 * np.outer(_DL[i], _DL[i])
        for k, (i, j) in enumerate(_EDGES):
            out[3 + k] = 4.0 * (np.outer(_DL[i], _DL[j]) + np.outer(_DL[j], _DL[i]))
        return out
    raise ValueError(f"unsupported element order {order}")


def lagrange_nodes(order: int) -> np.ndarray:
    """Reference coordinates of the local nodes."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        return v
    return np.vstack([v, 0.5 * (v[[0, 1, 2]] + v[[1, 2, 0]])])
