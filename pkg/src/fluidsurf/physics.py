"""Material laws, energies, initial conditions and parameter scaling."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo

log = logging.getLogger(__name__)

VARIANTS = ("full", "one_component", "stationary_surface", "overdamped")

# line-tension prefactor relating sigma to the Ginzburg-Landau coefficient
SIGMA_FACTORS = {
    "definition": 3.0 / (2.0 * math.sqrt(2.0)),  # ~1.0607
    "results": 1.5 * math.sqrt(2.0),  # ~2.1213
}


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Non-dimensional model parameters.

    ``sigma`` is the physical line tension; the coefficient actually used in
    the Ginzburg-Landau energy is :attr:`sigma_tilde`.
    """

    Re: float = 1.0
    sigma: float = 1.0
    sigma_convention: str = "definition"
    eps: float = 0.02
    m: float = 0.001
    kappa1: float = 0.02
    kappa2: float = 0.02
    H01: float = 0.0
    H02: float = 0.0
    gamma: float = 0.0
    variant: str = "full"
    phase_value: float = 1.0
    gl_normal_force: bool = True
    curvature_weight: str = "unit"

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ParameterError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        e = []
        if not self.Re > 0:
            e.append(f"Re must be > 0 (got {self.Re})")
        if not self.eps > 0:
            e.append(f"eps must be > 0 (got {self.eps})")
        if not self.m > 0:
            e.append(f"m must be > 0 (got {self.m})")
        if not self.sigma > 0:
            e.append(f"sigma must be > 0 (got {self.sigma})")
        if self.kappa1 < 0 or self.kappa2 < 0:
            e.append(f"kappa1, kappa2 must be >= 0 (got {self.kappa1}, {self.kappa2})")
        if self.gamma < 0:
            e.append(f"gamma must be >= 0 (got {self.gamma})")
        if self.variant not in VARIANTS:
            e.append(f"variant must be one of {VARIANTS} (got {self.variant!r})")
        if self.variant == "overdamped" and not self.gamma > 0:
            e.append("overdamped variant requires gamma > 0")
        if self.sigma_convention not in SIGMA_FACTORS:
            e.append(f"sigma_convention must be one of {sorted(SIGMA_FACTORS)}")
        if self.curvature_weight not in ("unit", "kappa"):
            e.append("curvature_weight must be 'unit' or 'kappa'")
        return e

    @property
    def sigma_tilde(self) -> float:
        return SIGMA_FACTORS[self.sigma_convention] * self.sigma

    def sigma_tilde_both(self) -> dict:
        return {k: f * self.sigma for k, f in SIGMA_FACTORS.items()}

    def kappa(self, phi):
        return material_interpolate(self.kappa1, self.kappa2, phi)

    def dkappa(self, phi):
        return material_derivative(self.kappa1, self.kappa2, phi)

    def H0(self, phi):
        return material_interpolate(self.H01, self.H02, phi)

    def dH0(self, phi):
        return material_derivative(self.H01, self.H02, phi)

    def scaled(self) -> "ScaledCoefficients":
        """Coefficients entering the equations (overdamped rescaling applied)."""
        if self.variant == "overdamped":
            delta = 1.0 / self.gamma
            return ScaledCoefficients(self.sigma_tilde * delta, delta, self.m / delta)
        return ScaledCoefficients(self.sigma_tilde, 1.0, self.m)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScaledCoefficients:
    sigma_tilde: float
    kappa_scale: float
    m: float


def material_interpolate(f1, f2, phi):
    """C1 cubic blend: ``f1`` for phi >= 1, ``f2`` for phi <= -1."""
    phi = np.clip(phi, -1.0, 1.0)
    return 0.5 * (f1 + f2) + 0.25 * (f1 - f2) * phi * (3.0 - phi * phi)


def material_derivative(f1, f2, phi):
    """d/dphi of :func:`material_interpolate`; zero outside (-1, 1)."""
    phi = np.asarray(phi, dtype=float)
    inside = np.abs(phi) < 1.0
    return np.where(inside, 0.75 * (f1 - f2) * (1.0 - phi * phi), 0.0)


def double_well(phi):
    """``W = (phi^2 - 1)^2 / 4`` and ``W' = phi^3 - phi``."""
    phi = np.asarray(phi, dtype=float)
    return 0.25 * (phi * phi - 1.0) ** 2, phi**3 - phi


# ----------------------------------------------------------------------
# energies


@dataclass
class EnergyReport:
    """Time series of energies, dissipations and phase-averaged curvature."""

    columns: tuple = (
        "t", "F_K", "F_GL", "F_H", "F_total", "D_V", "D_R", "D_phi",
        "Hbar1", "Hbar2", "area", "min_K",
    )
    rows: list = field(default_factory=list)

    def append(self, row: dict):
        self.rows.append({c: float(row[c]) for c in self.columns})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)


def strain_rate(geom, u):
    """``sigma(u) = (Grad_P u + Grad_P u^T) / 2`` at quadrature points."""
    G = geo.grad_vector_tangential(geom, u)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def compute_energies(geom, state, params: ModelParams) -> dict:
    """Energies and dissipation rates of ``state`` on ``geom``."""
    sc = params.scaled()
    phi = geo.eval_scalar(geom, state.phi)
    gphi = geo.grad_scalar(geom, state.phi)
    H = geo.eval_scalar(geom, state.H)
    u = geo.eval_vector(geom, state.u)
    W, _ = double_well(phi)
    kap = sc.kappa_scale * params.kappa(phi)
    F_GL = geom.integrate(sc.sigma_tilde * (0.5 * params.eps * np.sum(gphi**2, -1) + W / params.eps))
    F_H = geom.integrate(0.5 * kap * (H - params.H0(phi)) ** 2)
    usq = np.sum(u**2, -1)
    F_K = 0.5 * geom.integrate(usq)
    if params.variant == "overdamped":
        F_K = 0.0
        D_V = 0.0
        D_R = 0.5 * geom.integrate(usq)
    else:
        s = strain_rate(geom, state.u)
        D_V = geom.integrate(np.einsum("fqij,fqij->fq", s, s)) / params.Re
        D_R = 0.5 * params.gamma * geom.integrate(usq)
    gmu = geo.grad_scalar(geom, state.mu)
    D_phi = 0.5 * sc.m * geom.integrate(np.sum(gmu**2, -1))
    Hbar1, Hbar2 = averaged_phase_curvature(geom, state)
    return {
        "t": state.t,
        "F_K": F_K,
        "F_GL": F_GL,
        "F_H": F_H,
        "F_total": F_K + F_GL + F_H,
        "D_V": D_V,
        "D_R": D_R,
        "D_phi": D_phi,
        "Hbar1": Hbar1,
        "Hbar2": Hbar2,
        "area": geom.area(),
        "min_K": float(np.min(geom.K)),
    }


def averaged_phase_curvature(geom, state, normalized: bool = False):
    """Integrals of the curvature field over {phi < 0} and {phi > 0}.

    With ``normalized`` the integrals are divided by the phase areas.
    """
    phi = geo.eval_scalar(geom, state.phi)
    H = geo.eval_scalar(geom, state.H)
    neg, pos = phi < 0, phi > 0
    h1 = float(np.sum(geom.dA * H * neg))
    h2 = float(np.sum(geom.dA * H * pos))
    if normalized:
        a1, a2 = float(np.sum(geom.dA * neg)), float(np.sum(geom.dA * pos))
        h1 = h1 / a1 if a1 > 0 else 0.0
        h2 = h2 / a2 if a2 > 0 else 0.0
    return h1, h2


# ----------------------------------------------------------------------
# initial conditions


def random_centres(seed: int, n_bumps: int, radius: float = 1.0) -> np.ndarray:
    """``n_bumps + 1`` points uniformly distributed on the sphere."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_bumps + 1, 3))
    return radius * x / np.linalg.norm(x, axis=1, keepdims=True)


def initial_phase_field(
    kind: str,
    nodes,
    seed: int = 0,
    n_bumps: int = 100,
    alpha: float = 100.0,
    beta: float = 100.0,
    value: float = 1.0,
):
    """Nodal phase-field values at the positions ``nodes`` (N, 3).

    ``symmetric``: tanh(alpha x0).  ``random``: sum of Gaussian bumps at
    seeded random centres shifted by -1 and clamped to [-1, 1].
    ``uniform``: constant ``value``.
    """
    x = np.asarray(nodes, dtype=float)
    if kind == "symmetric":
        return np.tanh(alpha * x[:, 0])
    if kind == "random":
        centres = random_centres(seed, n_bumps, np.linalg.norm(x, axis=1).mean())
        out = np.full(len(x), -1.0)
        for c in centres:
            out += np.exp(-0.5 * beta * np.sum((x - c) ** 2, axis=1))
        return np.clip(out, -1.0, 1.0)
    if kind == "uniform":
        return np.full(len(x), float(value))
    raise ParameterError(f"unknown initial phase field kind {kind!r}")


def initial_velocity(n_nodes: int) -> np.ndarray:
    return np.zeros((n_nodes, 3))


# ----------------------------------------------------------------------
# dimensional -> non-dimensional


def nondimensionalize(*, rho, eta, L, U, kappa, H0, m, sigma_tilde, gamma) -> dict:
    """Convert dimensional material data to the non-dimensional parameters.

    ``kappa`` and ``H0`` may be scalars or (phase 1, phase 2) pairs.
    """
    for name, v in (("rho", rho), ("eta", eta), ("L", L), ("U", U)):
        if not v > 0:
            raise ParameterError(f"{name} must be > 0 (got {v})")
    energy = rho * U**2 * L**2
    return {
        "Re": rho * L * U / eta,
        "kappa": np.asarray(kappa, dtype=float) / energy,
        "H0": np.asarray(H0, dtype=float) * L,
        "m": rho * m * U / L,
        "sigma_tilde": sigma_tilde / energy,
        "gamma": gamma * L / (rho * U),
        "time_scale": L / U,
    }
