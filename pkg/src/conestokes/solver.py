"""Direct solver for the parameter-dependent Stokes problem on the cone.

    s u - Delta u + grad p = f,   -div u = g  in K,   u = 0 on the boundary,

discretized per azimuthal mode on a tensor mesh: uniform grid in t = log r
(second-order differences) times the cap collocation grid.  Momentum rows
are scaled by r^2 and the divergence row by r, which turns every operator
entry into an O(1)-bounded coefficient times exp-weights.

Truncation: homogeneous Dirichlet at the outer radius (the solutions of
interest decay there); at the inner radius the rows extrapolate the
dominant vertex power, d/dt U = kappa_in U per velocity track and
d/dt Q = (kappa_in - 1) Q for the pressure, which also pins the discrete
constant-pressure freedom of the axisymmetric mode (a single outer
pressure pin backs it up).

The same machinery solves the dual-correction problem whose right side is
built analytically from a dual chain and the parabolic cutoff; the result
assembles the kernel pair

    v* = zeta_s v + v',   q* = zeta_s q + q'.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angular import pair_lower, pair_raise, pair_z, track_modes
from .chains import ChainFamily
from .geometry import CapGrid, CutoffZeta, make_circular_cap
from .terms import (
    Cut,
    TrackTerms,
    VecTerms,
    d_r,
    divergence,
    eval_physical_scalar,
    eval_physical_vector,
    gradient,
    laplacian,
    radial_part,
)


class WeightIntervalError(ValueError):
    """Weight exponent outside the admissible interval."""


class CompatibilityError(ValueError):
    """Mean-value condition on g violated while beta > 1/2."""


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

@dataclass
class ConeMesh:
    grid: CapGrid
    mode: int
    t: np.ndarray

    @property
    def n_t(self) -> int:
        return len(self.t)

    @property
    def n_x(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.t)

    def pressure_mesh(self) -> "ConeMesh":
        """Midpoint mesh carrying the staggered pressure samples."""
        return ConeMesh(grid=self.grid, mode=self.mode,
                        t=0.5 * (self.t[:-1] + self.t[1:]))

    def dt_matrix(self) -> sp.csr_matrix:
        """Second-order d/dt: central inside, one-sided at the ends."""
        n, h = self.n_t, self.h
        D = sp.lil_matrix((n, n))
        for i in range(1, n - 1):
            D[i, i - 1] = -0.5 / h
            D[i, i + 1] = 0.5 / h
        D[0, 0], D[0, 1], D[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
        D[n - 1, n - 1], D[n - 1, n - 2], D[n - 1, n - 3] = 1.5 / h, -2.0 / h, 0.5 / h
        return D.tocsr()

    def dtt_matrix(self) -> sp.csr_matrix:
        n, h = self.n_t, self.h
        D = sp.lil_matrix((n, n))
        for i in range(1, n - 1):
            D[i, i - 1] = 1.0 / h**2
            D[i, i] = -2.0 / h**2
            D[i, i + 1] = 1.0 / h**2
        # one-sided second differences at the ends (rows unused by interior
        # equations but kept well-defined for derivative evaluation)
        for i, sgn in ((0, 1), (n - 1, -1)):
            D[i, i] = 2.0 / h**2
            D[i, i + sgn] = -5.0 / h**2
            D[i, i + 2 * sgn] = 4.0 / h**2
            D[i, i + 3 * sgn] = -1.0 / h**2
        return D.tocsr()


def make_mesh(grid: CapGrid, mode: int, r_min: float, r_max: float,
              n_t: int) -> ConeMesh:
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    return ConeMesh(grid=grid, mode=mode,
                    t=np.linspace(np.log(r_min), np.log(r_max), n_t))


# ---------------------------------------------------------------------------
# mesh fields
# ---------------------------------------------------------------------------

@dataclass
class MeshField:
    """Factored mode-mu profile samples on the (t, x) tensor mesh."""

    mesh: ConeMesh
    mode: int
    values: np.ndarray  # (n_t, n_x)

    def _first_order(self, pair_fn, new_mode: int) -> "MeshField":
        A, B = pair_fn(self.mesh.grid, self.mode)
        Dt = self.mesh.dt_matrix()
        out = (Dt @ self.values) @ A.T + self.values @ B.T
        out = out / self.mesh.r[:, None]
        return MeshField(self.mesh, new_mode, out)

    def d_plus(self) -> "MeshField":
        return self._first_order(pair_raise, self.mode + 1)

    def d_minus(self) -> "MeshField":
        return self._first_order(pair_lower, self.mode - 1)

    def d_z(self) -> "MeshField":
        return self._first_order(pair_z, self.mode)

    def physical(self) -> np.ndarray:
        w = np.sqrt(1.0 - self.mesh.grid.x**2) ** abs(self.mode)
        return self.values * w[None, :]


@dataclass
class ConeSolution:
    """Velocity tracks + pressure of one solve, on the solver mesh."""

    mesh: ConeMesh
    s: complex
    tracks: tuple[MeshField, MeshField, MeshField]
    pressure: MeshField
    residual: float = 0.0

    @property
    def mode(self) -> int:
        return self.mesh.mode

    def track_values(self) -> np.ndarray:
        return np.stack([t.values for t in self.tracks])

    def amplitude(self) -> np.ndarray:
        """Pointwise |u| on the mesh."""
        s = np.stack([t.physical() for t in self.tracks])
        return np.sqrt(0.5 * np.abs(s[0]) ** 2 + 0.5 * np.abs(s[1]) ** 2
                       + np.abs(s[2]) ** 2)


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------

def check_weight_admissible(beta: float, lam1: float, mu2: float) -> None:
    lo = 0.5 - lam1
    hi = min(mu2 + 0.5, lam1 + 1.5)
    if not lo < beta < hi:
        raise WeightIntervalError(
            f"beta = {beta} violates the admissible interval "
            f"({lo:.6f}, {hi:.6f}) from (1/2 - lam1, min(mu2 + 1/2, lam1 + 3/2))")
    if abs(beta - 0.5) < 1e-12:
        raise WeightIntervalError("beta = 1/2 is excluded")


# ---------------------------------------------------------------------------
# assembly and solve
# ---------------------------------------------------------------------------

def _kron(tmat: sp.spmatrix, xmat: np.ndarray) -> sp.csr_matrix:
    return sp.kron(tmat, sp.csr_matrix(xmat), format="csr")


def _assemble(mesh: ConeMesh, s: complex, kappa_in: complex) -> sp.csc_matrix:
    grid, m = mesh.grid, mesh.mode
    n_t, n_x = mesh.n_t, mesh.n_x
    N1 = n_t * n_x
    r = mesh.r
    h = mesh.h
    Dt, Dtt = mesh.dt_matrix(), mesh.dtt_matrix()
    It = sp.identity(n_t, format="csr")
    e2t = sp.diags(r**2)
    e1t = sp.diags(r)

    from .angular import gegenbauer_operator

    blocks: dict[tuple[int, int], sp.csr_matrix] = {}

    def add(bi, bj, mat):
        blocks[(bi, bj)] = blocks.get((bi, bj), 0) + mat

    grad_pairs = (pair_raise(grid, m), pair_lower(grid, m), pair_z(grid, m))
    mus = track_modes(m)

    # staggered pressure: DOFs at the n_t - 1 plane midpoints; compact
    # two-point stencils couple them to the integer planes, which removes
    # the radial pressure checkerboard of the collocated layout
    n_p = n_t - 1
    M_avg = sp.lil_matrix((n_t, n_p))
    M_dt = sp.lil_matrix((n_t, n_p))
    for i in range(1, n_t - 1):
        M_avg[i, i - 1] = 0.5
        M_avg[i, i] = 0.5
        M_dt[i, i - 1] = -1.0 / h
        M_dt[i, i] = 1.0 / h
    D_avg = sp.lil_matrix((n_p, n_t))
    D_dt = sp.lil_matrix((n_p, n_t))
    for k in range(n_p):
        D_avg[k, k] = 0.5
        D_avg[k, k + 1] = 0.5
        D_dt[k, k] = -1.0 / h
        D_dt[k, k + 1] = 1.0 / h
    r_mid = np.exp(0.5 * (mesh.t[:-1] + mesh.t[1:]))

    for tr in range(3):
        La = gegenbauer_operator(grid, abs(mus[tr]))
        add(tr, tr, s * _kron(e2t, np.eye(n_x))
            - _kron(Dtt + Dt, np.eye(n_x)) - _kron(It, La))
        Ag, Bg = grad_pairs[tr]
        add(tr, 3, _kron(e1t @ M_dt.tocsr(), Ag)
            + _kron(e1t @ M_avg.tocsr(), Bg))

    from .angular import divergence_mats

    amats, bmats = divergence_mats(grid, m)
    for tr in range(3):
        add(3, tr, -_kron(D_dt.tocsr(), amats[tr])
            - _kron(D_avg.tocsr(), bmats[tr]))

    A = sp.bmat([[blocks.get((i, j)) for j in range(4)] for i in range(4)],
                format="lil", dtype=complex)

    # row replacements
    edge = n_x - 1

    def ridx(block, i, j):
        return block * N1 + i * n_x + j

    def zero_row(rr):
        A.rows[rr] = []
        A.data[rr] = []

    one_sided = {0: -1.5 / h, 1: 2.0 / h, 2: -0.5 / h}
    for tr in range(3):
        for i in range(n_t):
            rr = ridx(tr, i, edge)      # cap-edge Dirichlet
            zero_row(rr)
            A[rr, ridx(tr, i, edge)] = 1.0
        for j in range(n_x - 1):
            rr = ridx(tr, 0, j)         # inner extrapolation row
            zero_row(rr)
            for i_off, c in one_sided.items():
                A[rr, ridx(tr, i_off, j)] = c
            A[rr, ridx(tr, 0, j)] = A[rr, ridx(tr, 0, j)] - kappa_in
            rr = ridx(tr, n_t - 1, j)   # outer Dirichlet
            zero_row(rr)
            A[rr, ridx(tr, n_t - 1, j)] = 1.0
    if m == 0:
        # the axisymmetric constant pressure is invisible to every other
        # equation; pin it at the outermost midpoint
        rr = 3 * N1 + (n_p - 1) * n_x + n_x // 2
        zero_row(rr)
        A[rr, rr] = 1.0
    return A.tocsc()


def _rhs_vector(mesh: ConeMesh, f_tracks, g_vals, pin: bool) -> np.ndarray:
    n_t, n_x = mesh.n_t, mesh.n_x
    n_p = n_t - 1
    r = mesh.r
    b = np.zeros((3 * n_t + n_p) * n_x, dtype=complex)
    for tr in range(3):
        vals = (r**2)[:, None] * f_tracks[tr]
        vals = vals.copy()
        vals[0, :] = 0.0
        vals[-1, :] = 0.0
        vals[:, -1] = 0.0
        b[tr * n_t * n_x:(tr + 1) * n_t * n_x] = vals.ravel()
    r_mid = np.exp(0.5 * (mesh.t[:-1] + mesh.t[1:]))
    gv = r_mid[:, None] * g_vals
    gv = gv.copy()
    if pin:
        gv[-1, n_x // 2] = 0.0
    b[3 * n_t * n_x:] = gv.ravel()
    return b


def _eval_on_radii(obj, r: np.ndarray, n_x: int, scalar=False):
    """Sample a TermTrack/VecTerms/callable/array at the given radii."""
    if obj is None:
        zero = np.zeros((len(r), n_x), dtype=complex)
        return zero if scalar else [zero] * 3
    if isinstance(obj, VecTerms):
        interp = np.eye(n_x)
        return [tt.evaluate(r, interp) for tt in obj.tracks]
    if isinstance(obj, TrackTerms):
        return obj.evaluate(r, np.eye(n_x))
    if isinstance(obj, np.ndarray):
        return obj
    if callable(obj):
        return obj(r)
    raise TypeError(f"cannot sample {type(obj)} on the mesh")


def solve_param(grid: CapGrid, m: int, s: complex, f, g, *,
                beta: float | None = None, lam1: float | None = None,
                mu2: float | None = None, r_min: float | None = None,
                r_max: float | None = None, n_t: int = 192,
                kappa_in: complex | None = None,
                check_compat: bool = True) -> ConeSolution:
    """Solve the parameter problem at mode m with data (f, g).

    ``f`` may be a VecTerms field, a list of three (n_t, n_x) track arrays,
    or a callable of the mesh; ``g`` analogously scalar.  When ``beta`` is
    given together with lam1 and mu2, the admissible-interval and the
    mean-value condition on g (for beta > 1/2) are enforced.
    """
    if s == 0 or s.real < -1e-12:
        raise ValueError("need Re s >= 0 and s != 0")
    if beta is not None and lam1 is not None and mu2 is not None:
        check_weight_admissible(beta, lam1, mu2)
    if r_max is None:
        r_max = 8.0 / np.sqrt(abs(s))
    if r_min is None:
        r_min = 1e-4 * min(1.0, 1.0 / np.sqrt(abs(s)))
    if kappa_in is None:
        kappa_in = _default_inner_exponent(grid, m)
    mesh = make_mesh(grid, m, r_min, r_max, n_t)
    mesh_p = mesh.pressure_mesh()
    f_tracks = _eval_on_radii(f, mesh.r, mesh.n_x)
    g_vals = _eval_on_radii(g, mesh_p.r, mesh.n_x, scalar=True)

    if check_compat and beta is not None and beta > 0.5 and m == 0:
        total = _cap_integral_mode0(mesh_p, g_vals)
        scale = abs(_cap_integral_mode0(mesh_p, np.abs(g_vals))) + 1e-300
        if abs(total) > 1e-8 * scale:
            raise CompatibilityError(
                f"mean of g is {total:.3e} (relative {abs(total)/scale:.2e}); "
                "beta > 1/2 requires a zero mean")

    A = _assemble(mesh, s, kappa_in)
    b = _rhs_vector(mesh, f_tracks, g_vals, pin=(m == 0))
    # two-sided equilibration plus iterative refinement: the unknowns span
    # many decades between the vertex and the outer radius, and the small
    # far-field components would otherwise drown in factorization error
    rownorm = np.maximum(np.abs(A).max(axis=1).toarray().ravel(), 1e-300)
    As = (sp.diags(1.0 / rownorm) @ A).tocsc()
    colnorm = np.maximum(np.abs(As).max(axis=0).toarray().ravel(), 1e-300)
    As = (As @ sp.diags(1.0 / colnorm)).tocsc()
    lu = spla.splu(As)
    bs = b / rownorm
    y = lu.solve(bs)
    for _ in range(2):
        y = y + lu.solve(bs - As @ y)
    w = y / colnorm
    res = np.linalg.norm(A @ w - b) / max(np.linalg.norm(b), 1e-300)

    n1 = mesh.n_t * mesh.n_x
    vals = [w[k * n1:(k + 1) * n1].reshape(mesh.n_t, mesh.n_x) for k in range(3)]
    pvals = w[3 * n1:].reshape(mesh.n_t - 1, mesh.n_x)
    mus = track_modes(m)
    tracks = tuple(MeshField(mesh, mus[k], vals[k]) for k in range(3))
    return ConeSolution(mesh=mesh, s=s, tracks=tracks,
                        pressure=MeshField(mesh_p, m, pvals), residual=res)


def _cap_integral_mode0(mesh: ConeMesh, vals: np.ndarray) -> complex:
    # int_K vals dx for an axisymmetric scalar: 2 pi int vals r^2 dr dx
    wt = np.gradient(mesh.t)
    wx = mesh.grid.wx
    return complex(2.0 * np.pi * np.sum(
        (wt * mesh.r**3)[:, None] * wx[None, :] * vals))


_INNER_EXP_CACHE: dict = {}


def _default_inner_exponent(grid: CapGrid, m: int) -> float:
    key = (round(grid.theta0, 12), grid.n, abs(m))
    if key not in _INNER_EXP_CACHE:
        from .pencil import assemble_stokes_pencil, eigenvalues_in_strip

        pen = assemble_stokes_pencil(grid, abs(m))
        recs = eigenvalues_in_strip(pen, 1e-3, 3.5)
        pos = [r.lam.real for r in recs if r.lam.real > 1e-6]
        _INNER_EXP_CACHE[key] = min(pos) if pos else 1.0
    return _INNER_EXP_CACHE[key]


# ---------------------------------------------------------------------------
# dual correction: the kernel pair (v*, q*)
# ---------------------------------------------------------------------------

@dataclass
class KernelPair:
    """v* = zeta_s v + v', q* = zeta_s q + q' for one dual family."""

    family: ChainFamily
    s: complex
    cut: Cut
    correction: ConeSolution

    def eval_velocity(self, r: np.ndarray, x: np.ndarray) -> np.ndarray:
        """(3, nr, nx) track samples of v* (cut part exact, v' interpolated)."""
        r = np.asarray(r, dtype=float)
        v = self.family.velocity(self.s)
        out = eval_physical_vector(v, r, x)
        czs = self.cut.eval_derivs(r, 0)[0]
        out = out * czs[None, :, None]
        out = out + _interp_solution(self.correction, r, x)
        return out

    def eval_pressure(self, r: np.ndarray, x: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        q = self.family.pressure(self.s)
        out = eval_physical_scalar(q, r, x)
        czs = self.cut.eval_derivs(r, 0)[0]
        out = out * czs[:, None]
        nt_interp = _interp_solution(self.correction, r, x, pressure=True)
        return out + nt_interp


def _interp_solution(sol: ConeSolution, r: np.ndarray, x: np.ndarray,
                     pressure: bool = False) -> np.ndarray:
    """Sample solver output at arbitrary (r, x): cubic in t, barycentric in x."""
    from scipy.interpolate import CubicSpline

    interp_x = sol.mesh.grid.interp_to(np.asarray(x, dtype=float))
    sx = np.sqrt(1.0 - np.asarray(x) ** 2)

    def one(fldarr: MeshField):
        tgrid = fldarr.mesh.t
        t_new = np.clip(np.log(np.asarray(r, dtype=float)), tgrid[0], tgrid[-1])
        vals_x = fldarr.values @ interp_x.T
        spline = CubicSpline(tgrid, vals_x, axis=0)
        out = spline(t_new)
        out = out * sx[None, :] ** abs(fldarr.mode)
        # outside the mesh the correction is negligible by construction
        out[np.asarray(r) > np.exp(tgrid[-1])] = 0.0
        return out

    if pressure:
        return one(sol.pressure)
    return np.stack([one(t) for t in sol.tracks])


def dual_correction_sources(family: ChainFamily, s: complex,
                            zeta: CutoffZeta | None = None
                            ) -> tuple[VecTerms, TrackTerms, Cut]:
    """Analytic right sides F, G of the correction problem.

    F = -(s - Delta)(zeta_s v) - grad(zeta_s q),  G = div(zeta_s v),
    assembled in the term calculus (exact up to collocation accuracy).
    """
    cut = Cut(zeta=zeta or CutoffZeta(), parabolic=True, s_abs=abs(s))
    v = family.velocity(s)
    q = family.pressure(s)
    vc = v.with_cut(cut)
    qc = q.with_cut(cut)
    F = (vc.scaled(s) + laplacian(vc).scaled(-1.0) + gradient(qc)).scaled(-1.0)
    F = F.collapse()
    G = divergence(vc).collapse()
    return F, G, cut


def dual_correction(grid: CapGrid, family: ChainFamily, s: complex, *,
                    delta: float | None = None, lam1: float | None = None,
                    n_t: int = 256, r_min: float | None = None,
                    r_max: float | None = None,
                    zeta: CutoffZeta | None = None) -> KernelPair:
    """Solve for (v', q') and assemble the kernel pair (v*, q*).

    The inner extrapolation exponent follows the continuation of the dual
    series, min(lam1, 1 - Re lam_i); delta only enters diagnostics.
    """
    lam_i = -1.0 - family.lam.real  # family.lam = -1 - lam_i
    if lam1 is None:
        lam1 = _default_inner_exponent(grid, abs(family.mode))
    lo = max(0.5 - lam1, lam_i - 2 * family.n_steps - 0.5)
    if delta is not None and not lo < delta < 0.5:
        raise WeightIntervalError(
            f"delta = {delta} outside ({lo:.4f}, 0.5)")
    F, G, cut = dual_correction_sources(family, s, zeta)
    # the inner extrapolation row carries the continuation exponent of the
    # dual series exactly (error O(|s| r_min^2)), so the mesh can stop well
    # above the vertex; a deep mesh would bury the far field under the
    # near-field amplitude in finite precision
    kappa_in = min(lam1, 1.0 - lam_i)
    sabs = abs(s)
    if r_max is None:
        r_max = 16.0 / np.sqrt(sabs)
    if r_min is None:
        r_min = 3e-2 / np.sqrt(sabs)
    sol = solve_param(grid, family.mode, s, F, G, n_t=n_t, r_min=r_min,
                      r_max=r_max, kappa_in=kappa_in, check_compat=False)
    return KernelPair(family=family, s=s, cut=cut, correction=sol)
