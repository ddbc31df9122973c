"""Angular differential operators on the spherical cap, one azimuthal mode at a time.

Representation
--------------
A scalar field of azimuthal mode mu is written

    W(r, theta, phi) = f(r) * sin(theta)^|mu| * G(cos theta) * exp(i mu phi)

and only the profile G is stored, sampled at the cap collocation nodes.  The
sin^|mu| prefactor encodes pole regularity exactly, so every operator below
is a polynomial-coefficient ODE in x = cos(theta) that can be collocated at
all nodes including the pole.

A velocity field of mode m is carried in three Cartesian combination tracks

    u_plus = u_x + i u_y   (effective scalar mode m + 1),
    u_minus = u_x - i u_y  (effective scalar mode m - 1),
    u_z                    (effective scalar mode m),

which makes the vector Laplacian three independent scalar operators.

Operator calculus
-----------------
For a field r^kappa * track(mu, G), each first-order Cartesian derivative
lowers the radial exponent by one and acts on the profile as

    G  ->  (kappa * A + B) G

with constant matrices A, B returned by the ``pair_*`` functions.  The same
A, B serve the parameter-dependent solver, where kappa becomes d/dt in
t = log r.  The Laplace-Beltrami operator in factored form is the Gegenbauer
operator  L_a G = (1-x^2) G'' - 2(a+1) x G' - a(a+1) G  with a = |mu|.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import CapGrid


def track_modes(m: int) -> tuple[int, int, int]:
    """Effective scalar modes of the (plus, minus, z) tracks of a mode-m vector."""
    return (m + 1, m - 1, m)


# ---------------------------------------------------------------------------
# Operator building blocks (profile matrices)
# ---------------------------------------------------------------------------

def gegenbauer_operator(grid: CapGrid, a: int) -> np.ndarray:
    """L_a such that beltrami(sin^a theta * G) = sin^a theta * (L_a G)."""
    x, d = grid.x, grid.dmat
    d2 = d @ d
    return (np.diag(1.0 - x * x) @ d2
            - 2.0 * (a + 1) * np.diag(x) @ d
            - a * (a + 1) * np.eye(grid.n))


def pair_z(grid: CapGrid, mu: int) -> tuple[np.ndarray, np.ndarray]:
    """d/dz on a mode-mu track: profile map (kappa*A + B), mode unchanged."""
    x, d = grid.x, grid.dmat
    a = abs(mu)
    A = np.diag(x)
    B = -a * np.diag(x) + np.diag(1.0 - x * x) @ d
    return A, B


def pair_raise(grid: CapGrid, mu: int) -> tuple[np.ndarray, np.ndarray]:
    """d/dx + i d/dy on a mode-mu track: profile map to mode mu + 1."""
    x, d = grid.x, grid.dmat
    if mu >= 0:
        A = np.eye(grid.n)
        B = -np.diag(x) @ d - mu * np.eye(grid.n)
    else:
        A = np.diag(1.0 - x * x)
        B = -np.diag((1.0 - x * x) * x) @ d - mu * np.diag(1.0 + x * x)
    return A, B


def pair_lower(grid: CapGrid, mu: int) -> tuple[np.ndarray, np.ndarray]:
    """d/dx - i d/dy on a mode-mu track: profile map to mode mu - 1."""
    x, d = grid.x, grid.dmat
    if mu <= 0:
        A = np.eye(grid.n)
        B = -np.diag(x) @ d + mu * np.eye(grid.n)
    else:
        A = np.diag(1.0 - x * x)
        B = -np.diag((1.0 - x * x) * x) @ d + mu * np.diag(1.0 + x * x)
    return A, B


def radial_component_mats(grid: CapGrid, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Profile matrices (P, M, Z) with omega.u = sin^|m| theta * (P G+ + M G- + Z Gz).

    These coincide with the kappa-coefficient matrices of the divergence,
    since div(r^kappa u) = r^(kappa-1) (kappa omega.u + tangential part).
    """
    Ap, _ = pair_lower(grid, m + 1)
    Am, _ = pair_raise(grid, m - 1)
    Az, _ = pair_z(grid, m)
    return 0.5 * Ap, 0.5 * Am, Az


def divergence_mats(grid: CapGrid, m: int):
    """kappa-part and constant-part profile matrices of the divergence row."""
    Ap, Bp = pair_lower(grid, m + 1)
    Am, Bm = pair_raise(grid, m - 1)
    Az, Bz = pair_z(grid, m)
    return (0.5 * Ap, 0.5 * Am, Az), (0.5 * Bp, 0.5 * Bm, Bz)


# ---------------------------------------------------------------------------
# Field container
# ---------------------------------------------------------------------------

@dataclass
class AngularField:
    """Factored angular profile(s) of one azimuthal mode.

    ``profiles`` has shape (n,) for scalars and (3, n) for vector fields in
    (plus, minus, z) track order.  Physical node samples carry the
    sin^|mode'| prefactor of each track and are exposed by ``samples``.
    """

    grid: CapGrid
    mode: int
    kind: str  # "scalar" | "vector3"
    profiles: np.ndarray

    def __post_init__(self):
        self.profiles = np.asarray(self.profiles, dtype=complex)
        want = (self.grid.n,) if self.kind == "scalar" else (3, self.grid.n)
        if self.profiles.shape != want:
            raise ValueError(f"profile shape {self.profiles.shape} != {want}")

    def samples(self) -> np.ndarray:
        s = self.grid.sin_theta
        if self.kind == "scalar":
            return self.profiles * s ** abs(self.mode)
        out = np.empty_like(self.profiles)
        for t, mu in enumerate(track_modes(self.mode)):
            out[t] = self.profiles[t] * s ** abs(mu)
        return out

    def l2_norm(self) -> float:
        """L2(Omega) norm including the 2*pi azimuthal factor."""
        x, w = self.grid.x, self.grid.wx
        if self.kind == "scalar":
            dens = (1.0 - x * x) ** abs(self.mode) * np.abs(self.profiles) ** 2
        else:
            dens = np.zeros(self.grid.n)
            for t, (mu, fac) in enumerate(zip(track_modes(self.mode), (0.5, 0.5, 1.0))):
                dens += fac * (1.0 - x * x) ** abs(mu) * np.abs(self.profiles[t]) ** 2
        return float(np.sqrt(2.0 * np.pi * np.sum(w * dens)))


def scalar_pairing(grid: CapGrid, f: AngularField, g: AngularField,
                   conjugate_second: bool = False) -> complex:
    """Integral over the cap of f*g (modes must sum to zero, or match if conjugated)."""
    if f.kind != "scalar" or g.kind != "scalar":
        raise ValueError("scalar fields required")
    if conjugate_second:
        if f.mode != g.mode:
            raise ValueError("conjugated pairing needs equal modes")
    elif f.mode + g.mode != 0:
        raise ValueError("bilinear pairing needs opposite modes")
    gp = np.conj(g.profiles) if conjugate_second else g.profiles
    a = abs(f.mode) + abs(g.mode)
    x = grid.x
    dens = f.profiles * gp * (1.0 - x * x) ** (a // 2)
    return complex(2.0 * np.pi * np.sum(grid.wx * dens))


# ---------------------------------------------------------------------------
# Laplace-Beltrami matrices and spectra
# ---------------------------------------------------------------------------

@dataclass
class DifferentialOperatorMatrix:
    """Dense collocation matrix with its boundary-row bookkeeping."""

    mat: np.ndarray
    mass: np.ndarray
    mode: int
    tag: str
    boundary_rows: tuple[int, ...]


def beltrami_matrix(grid: CapGrid, m: int, bc: str = "dirichlet") -> DifferentialOperatorMatrix:
    """Collocation matrix of -beltrami on mode-m profiles with a boundary row.

    Acts on factored profiles G (the operator is conjugated by sin^|m|).
    For theta0 = pi (full-sphere surrogate) no boundary row is installed;
    both interval ends are pole-regular and the operator rows hold there.
    """
    if np.any(np.abs(np.diff(grid.x)) < 1e-14):
        raise ValueError("duplicate collocation nodes")
    a = abs(m)
    A = -gegenbauer_operator(grid, a)
    mass = np.eye(grid.n)
    rows: tuple[int, ...] = ()
    if grid.theta0 < np.pi - 1e-12:
        b = grid.n - 1
        if bc == "dirichlet":
            row = np.zeros(grid.n)
            row[b] = 1.0
        elif bc == "neumann":
            # normal derivative at the cap edge of sin^a theta * G
            row = -(1.0 - grid.x0 ** 2) * grid.dmat[b]
            row[b] += a * grid.x0
        else:
            raise ValueError(f"unknown bc {bc!r}")
        A[b] = row
        mass[b] = 0.0
        rows = (b,)
    return DifferentialOperatorMatrix(mat=A, mass=mass, mode=m, tag=f"-beltrami[{bc}]",
                                      boundary_rows=rows)


def beltrami_eigenvalues(grid: CapGrid, m: int, bc: str, count: int | None = None) -> np.ndarray:
    """Smallest real eigenvalues of -beltrami at mode m with the given bc."""
    op = beltrami_matrix(grid, m, bc)
    vals = sla.eig(op.mat, op.mass, right=False)
    vals = vals[np.isfinite(vals)]
    vals = np.real(vals[np.abs(vals.imag) < 1e-6 * (1.0 + np.abs(vals.real))])
    vals = np.sort(vals)
    return vals[:count] if count else vals


# ---------------------------------------------------------------------------
# Gradient / divergence operator facades
# ---------------------------------------------------------------------------

@dataclass
class TangentialGradient:
    """Maps a mode-m scalar profile to the vector3 tracks of grad on the sphere.

    This is the kappa-free part: grad(r^kappa f) = r^(kappa-1) (kappa omega f
    + tangential part); ``apply`` returns the tangential part's tracks.
    """

    grid: CapGrid
    mode: int
    mats: tuple[np.ndarray, np.ndarray, np.ndarray]

    def apply(self, f: AngularField) -> AngularField:
        if f.kind != "scalar" or f.mode != self.mode:
            raise ValueError("mode-matched scalar field required")
        tracks = np.stack([mt @ f.profiles for mt in self.mats])
        return AngularField(self.grid, self.mode, "vector3", tracks)


@dataclass
class SurfaceDivergence:
    """Maps mode-m vector3 tracks to the scalar kappa-free divergence part.

    Convention: div(r^kappa u) = r^(kappa-1) (kappa * omega.u + apply(u)),
    so apply(omega) = 2 and apply(e_z) = 0.
    """

    grid: CapGrid
    mode: int
    mats: tuple[np.ndarray, np.ndarray, np.ndarray]

    def apply(self, u: AngularField) -> AngularField:
        if u.kind != "vector3" or u.mode != self.mode:
            raise ValueError("mode-matched vector3 field required")
        g = sum(mt @ u.profiles[t] for t, mt in enumerate(self.mats))
        return AngularField(self.grid, self.mode, "scalar", g)


def tangential_gradient(grid: CapGrid, m: int) -> TangentialGradient:
    _, Bp = pair_raise(grid, m)
    _, Bm = pair_lower(grid, m)
    _, Bz = pair_z(grid, m)
    return TangentialGradient(grid, m, (Bp, Bm, Bz))


def surface_divergence(grid: CapGrid, m: int) -> SurfaceDivergence:
    _, bmats = divergence_mats(grid, m)
    return SurfaceDivergence(grid, m, bmats)


def radial_component(grid: CapGrid, u: AngularField) -> AngularField:
    """omega.u as a mode-m scalar field (profile representation)."""
    mats = radial_component_mats(grid, u.mode)
    g = sum(mt @ u.profiles[t] for t, mt in enumerate(mats))
    return AngularField(grid, u.mode, "scalar", g)
