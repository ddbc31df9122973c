"""Separable-term calculus for singular functions on the cone.

Every analytic field this package manipulates is a finite sum of terms

    coef * r^kappa * (log r)^p * c^(j)(r) * sin^|mu|(theta) G(cos theta) e^(i mu phi)

with an optional radial cutoff factor c (plain compact cutoff or the
parabolic-scaled one) differentiated j times.  The class of such sums is
closed under Cartesian first derivatives, the Laplacian, radial derivative,
and multiplication by a cutoff, which is exactly the algebra the chain
identities and pairing forms need.

Derivatives act symbolically on the radial data and through the profile
matrices of :mod:`conestokes.angular` on the angular data, so evaluation at
any (r, theta) is exact up to collocation accuracy of the stored profiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .angular import gegenbauer_operator, pair_lower, pair_raise, pair_z
from .geometry import CapGrid, CutoffZeta


# ---------------------------------------------------------------------------
# radial cutoff factors
# ---------------------------------------------------------------------------

def _smoothstep5_d3(u: np.ndarray) -> np.ndarray:
    return 60.0 * (1.0 - 6.0 * u + 6.0 * u * u)


def _zeta_derivs(zeta: CutoffZeta, arg: np.ndarray, jmax: int) -> list[np.ndarray]:
    """Derivatives of the cutoff profile with respect to its own argument."""
    if jmax > 3:
        raise ValueError("cutoff derivatives beyond order 3 are not provided")
    a, b = zeta.plateau, zeta.support
    u = np.clip((arg - a) / (b - a), 0.0, 1.0)
    inside = (arg > a) & (arg < b)
    du = 1.0 / (b - a)
    if zeta.profile == "smooth":
        from .geometry import _smoothstep_exp

        steps = _smoothstep_exp(u, jmax)
        out = [1.0 - steps[0]]
        for j in range(1, jmax + 1):
            out.append(np.where(inside, -steps[j] * du**j, 0.0))
        return out
    s = u**3 * (10.0 + u * (-15.0 + 6.0 * u))
    out = [1.0 - s]
    derivs = [30.0 * u**2 * (1.0 - u) ** 2,
              60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
              _smoothstep5_d3(u)]
    for j in range(1, jmax + 1):
        out.append(np.where(inside, -derivs[j - 1] * du**j, 0.0))
    return out


@dataclass(frozen=True)
class Cut:
    """Radial cutoff factor: plain c(r) = zeta(r) or parabolic c(r) = zeta(s_abs r^2).

    Equal to 1 towards the vertex and 0 beyond the support radius.
    """

    zeta: CutoffZeta
    parabolic: bool = False
    s_abs: float = 1.0
    vanishes_at_origin: bool = False

    def eval_derivs(self, r: np.ndarray, jmax: int = 0) -> list[np.ndarray]:
        """r-derivatives of the composed cutoff up to order jmax."""
        r = np.asarray(r, dtype=float)
        if not self.parabolic:
            return _zeta_derivs(self.zeta, r, jmax)
        arg = self.s_abs * r * r
        z = _zeta_derivs(self.zeta, arg, jmax)
        g = 2.0 * self.s_abs * r
        out = [z[0]]
        if jmax >= 1:
            out.append(z[1] * g)
        if jmax >= 2:
            out.append(z[2] * g * g + z[1] * 2.0 * self.s_abs)
        if jmax >= 3:
            out.append(z[3] * g**3 + z[2] * 3.0 * g * 2.0 * self.s_abs)
        return out

    @property
    def r_plateau(self) -> float:
        a = self.zeta.plateau
        return math.sqrt(a / self.s_abs) if self.parabolic else a

    @property
    def r_support(self) -> float:
        b = self.zeta.support
        return math.sqrt(b / self.s_abs) if self.parabolic else b

    def knots(self) -> list[float]:
        return [self.r_plateau, self.r_support]


@dataclass(frozen=True)
class GaussBump:
    """Analytic radial bump exp(-((log r - t0)/width)^2), derivatives to order 3.

    Infinitely smooth in t = log r, so finite-difference meshes see no
    derivative jumps; effectively supported on |log r - t0| <= 8.5 width.
    """

    t0: float
    width: float
    vanishes_at_origin: bool = True

    def eval_derivs(self, r: np.ndarray, jmax: int = 0) -> list[np.ndarray]:
        r = np.asarray(r, dtype=float)
        t = np.log(r)
        z = (t - self.t0) / self.width
        live = np.abs(z) <= 8.5
        c = np.where(live, np.exp(-np.clip(z * z, 0.0, 80.0)), 0.0)
        w = self.width
        ct = -(2.0 * z / w) * c
        ctt = (4.0 * z * z - 2.0) / w**2 * c
        cttt = (12.0 * z - 8.0 * z**3) / w**3 * c
        out = [c]
        if jmax >= 1:
            out.append(ct / r)
        if jmax >= 2:
            out.append((ctt - ct) / r**2)
        if jmax >= 3:
            out.append((cttt - 3.0 * ctt + 2.0 * ct) / r**3)
        return out

    @property
    def r_plateau(self) -> float:
        return math.exp(self.t0 - 8.5 * self.width)

    @property
    def r_support(self) -> float:
        return math.exp(self.t0 + 8.5 * self.width)

    def knots(self) -> list[float]:
        return [self.r_plateau, math.exp(self.t0), self.r_support]


@dataclass(frozen=True)
class BumpCut:
    """C^2 radial bump: 0 on (0, r0], 1 on [r1, r2], 0 on [r3, inf).

    Both transitions are quintic smoothsteps; derivatives available to
    order 3 like the one-sided cutoff.  Used for manufactured data with
    support away from the vertex.
    """

    r0: float
    r1: float
    r2: float
    r3: float
    vanishes_at_origin: bool = True

    def __post_init__(self):
        if not 0.0 < self.r0 < self.r1 <= self.r2 < self.r3:
            raise ValueError("need 0 < r0 < r1 <= r2 < r3")

    def eval_derivs(self, r: np.ndarray, jmax: int = 0) -> list[np.ndarray]:
        r = np.asarray(r, dtype=float)
        up = _zeta_derivs(CutoffZeta(plateau=self.r0, support=self.r1), r, jmax)
        dn = _zeta_derivs(CutoffZeta(plateau=self.r2, support=self.r3), r, jmax)
        rise = [1.0 - up[0]] + [-u for u in up[1:]]
        out = [rise[0] * dn[0]]
        if jmax >= 1:
            out.append(rise[1] * dn[0] + rise[0] * dn[1])
        if jmax >= 2:
            out.append(rise[2] * dn[0] + 2.0 * rise[1] * dn[1] + rise[0] * dn[2])
        if jmax >= 3:
            out.append(rise[3] * dn[0] + 3.0 * rise[2] * dn[1]
                       + 3.0 * rise[1] * dn[2] + rise[0] * dn[3])
        return out

    @property
    def r_plateau(self) -> float:
        return self.r0

    @property
    def r_support(self) -> float:
        return self.r3

    def knots(self) -> list[float]:
        return [self.r0, self.r1, self.r2, self.r3]


# ---------------------------------------------------------------------------
# terms and track fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """coef * r^kappa (log r)^p c^(j)(r) * [mode-mu profile]."""

    coef: complex
    kappa: complex
    p: int
    j: int
    cut: Cut | None
    prof: np.ndarray  # profile on the cap grid, shape (n,)

    def radial(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        val = self.coef * np.exp(self.kappa * np.log(r))
        if self.p:
            val = val * np.log(r) ** self.p
        if self.cut is not None:
            val = val * self.cut.eval_derivs(r, self.j)[self.j]
        elif self.j:
            raise ValueError("cut-free term with positive derivative order")
        return val


def _dt(term: Term, coef: complex, dk: complex, dp: int, dj: int, prof: np.ndarray) -> Term:
    return Term(coef=term.coef * coef, kappa=term.kappa + dk, p=term.p + dp,
                j=term.j + dj, cut=term.cut, prof=prof)


def _deriv_atoms(term: Term, prof: np.ndarray) -> list[Term]:
    """Terms of d/dr applied to the radial factor, with the given profile."""
    out = []
    if term.kappa != 0:
        out.append(_dt(term, term.kappa, -1, 0, 0, prof))
    if term.p > 0:
        out.append(_dt(term, term.p, -1, -1, 0, prof))
    if term.cut is not None:
        out.append(_dt(term, 1.0, 0, 0, 1, prof))
    return out


@dataclass
class TrackTerms:
    """Sum of terms sharing one azimuthal mode (a scalar track)."""

    grid: CapGrid
    mode: int
    terms: list[Term]

    def copy(self) -> "TrackTerms":
        return TrackTerms(self.grid, self.mode, list(self.terms))

    def scaled(self, z: complex) -> "TrackTerms":
        return TrackTerms(self.grid, self.mode,
                          [replace(t, coef=t.coef * z) for t in self.terms])

    def __add__(self, other: "TrackTerms") -> "TrackTerms":
        if other.mode != self.mode:
            raise ValueError("mode mismatch")
        return TrackTerms(self.grid, self.mode, self.terms + other.terms)

    def with_cut(self, cut: Cut) -> "TrackTerms":
        out = []
        for t in self.terms:
            if t.cut is not None:
                raise ValueError("term already carries a cutoff factor")
            out.append(replace(t, cut=cut))
        return TrackTerms(self.grid, self.mode, out)

    def evaluate(self, r: np.ndarray, interp: np.ndarray) -> np.ndarray:
        """Factored-profile values on the tensor grid (len(r), n_targets).

        ``interp`` maps collocation profiles to the angular targets; the
        sin^|mode| weight is NOT included (callers combine weights).
        """
        r = np.asarray(r, dtype=float)
        out = np.zeros((len(r), interp.shape[0]), dtype=complex)
        for t in self.terms:
            out += np.outer(t.radial(r), interp @ t.prof)
        return out

    def collapse(self, drop_rel: float = 1e-13) -> "TrackTerms":
        """Merge terms with identical radial signature; drop cancelled ones."""
        groups: dict = {}
        scales: dict = {}
        for t in self.terms:
            key = (np.round(t.kappa, 10), t.p, t.j,
                   id(t.cut) if t.cut is not None else None, t.cut)
            if key not in groups:
                groups[key] = np.zeros_like(t.prof)
                scales[key] = 0.0
            groups[key] = groups[key] + t.coef * t.prof
            scales[key] += abs(t.coef) * np.linalg.norm(t.prof)
        out = []
        for key, prof in groups.items():
            kap, p, j, _, cut = key
            if np.linalg.norm(prof) > drop_rel * max(scales[key], 1e-300):
                out.append(Term(coef=1.0, kappa=complex(kap), p=p, j=j, cut=cut,
                                prof=prof))
        return TrackTerms(self.grid, self.mode, out)


@dataclass
class VecTerms:
    """Vector field: (plus, minus, z) tracks at modes (m+1, m-1, m)."""

    grid: CapGrid
    mode: int
    plus: TrackTerms
    minus: TrackTerms
    z: TrackTerms

    @classmethod
    def zero(cls, grid: CapGrid, m: int) -> "VecTerms":
        return cls(grid, m, TrackTerms(grid, m + 1, []),
                   TrackTerms(grid, m - 1, []), TrackTerms(grid, m, []))

    @property
    def tracks(self) -> tuple[TrackTerms, TrackTerms, TrackTerms]:
        return (self.plus, self.minus, self.z)

    def scaled(self, zc: complex) -> "VecTerms":
        return VecTerms(self.grid, self.mode, self.plus.scaled(zc),
                        self.minus.scaled(zc), self.z.scaled(zc))

    def __add__(self, other: "VecTerms") -> "VecTerms":
        return VecTerms(self.grid, self.mode, self.plus + other.plus,
                        self.minus + other.minus, self.z + other.z)

    def with_cut(self, cut: Cut) -> "VecTerms":
        return VecTerms(self.grid, self.mode, self.plus.with_cut(cut),
                        self.minus.with_cut(cut), self.z.with_cut(cut))

    def collapse(self, drop_rel: float = 1e-13) -> "VecTerms":
        return VecTerms(self.grid, self.mode, self.plus.collapse(drop_rel),
                        self.minus.collapse(drop_rel), self.z.collapse(drop_rel))


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def _apply_first_order(track: TrackTerms, pair_fn, new_mode: int) -> TrackTerms:
    """One Cartesian derivative: profile map (kappa A + B) with radial shift."""
    A, B = pair_fn(track.grid, track.mode)
    out: list[Term] = []
    for t in track.terms:
        profA = A @ t.prof
        out.extend(_deriv_atoms(t, profA))          # (r d/dr f)/r with A G
        out.append(_dt(t, 1.0, -1, 0, 0, B @ t.prof))  # f/r with B G
    return TrackTerms(track.grid, new_mode, out)


def d_plus(track: TrackTerms) -> TrackTerms:
    return _apply_first_order(track, pair_raise, track.mode + 1)


def d_minus(track: TrackTerms) -> TrackTerms:
    return _apply_first_order(track, pair_lower, track.mode - 1)


def d_z(track: TrackTerms) -> TrackTerms:
    return _apply_first_order(track, pair_z, track.mode)


def d_r(track: TrackTerms) -> TrackTerms:
    """Plain radial derivative (profiles untouched)."""
    out: list[Term] = []
    for t in track.terms:
        out.extend(_deriv_atoms(t, t.prof))
    return TrackTerms(track.grid, track.mode, out)


def gradient(scalar: TrackTerms) -> VecTerms:
    m = scalar.mode
    return VecTerms(scalar.grid, m, d_plus(scalar), d_minus(scalar), d_z(scalar))


def divergence(vec: VecTerms) -> TrackTerms:
    half = 0.5
    dp = d_minus(vec.plus).scaled(half)
    dm = d_plus(vec.minus).scaled(half)
    dz = d_z(vec.z)
    return TrackTerms(vec.grid, vec.mode, dp.terms + dm.terms + dz.terms)


def curl(a: VecTerms) -> VecTerms:
    """curl in the complex track basis:

    (curl a)_plus = i (dz a_plus - d_plus a_z),
    (curl a)_minus = i (d_minus a_z - dz a_minus),
    (curl a)_z = (d_minus a_plus - d_plus a_minus) / (2i).
    """
    cp = (d_z(a.plus) + d_plus(a.z).scaled(-1.0)).scaled(1j)
    cm = (d_minus(a.z) + d_z(a.minus).scaled(-1.0)).scaled(1j)
    cz = (d_minus(a.plus) + d_plus(a.minus).scaled(-1.0)).scaled(1.0 / 2j)
    return VecTerms(a.grid, a.mode, cp, cm, cz)


def laplacian_track(track: TrackTerms) -> TrackTerms:
    """Delta(f G) = f'' G + (2 f'/r) G + (f/r^2) L_a G, all symbolic."""
    grid = track.grid
    La = gegenbauer_operator(grid, abs(track.mode))
    out: list[Term] = []
    for t in track.terms:
        first = _deriv_atoms(t, t.prof)
        for ft in first:
            out.extend(_deriv_atoms(ft, ft.prof))             # f''
            out.append(_dt(ft, 2.0, -1, 0, 0, ft.prof))       # 2 f'/r
        out.append(_dt(t, 1.0, -2, 0, 0, La @ t.prof))        # beltrami part
    return TrackTerms(grid, track.mode, out)


def laplacian(vec: VecTerms) -> VecTerms:
    return VecTerms(vec.grid, vec.mode, laplacian_track(vec.plus),
                    laplacian_track(vec.minus), laplacian_track(vec.z))


def radial_part(vec: VecTerms) -> TrackTerms:
    """omega.u as a mode-m scalar track."""
    grid, m = vec.grid, vec.mode
    Ap, _ = pair_lower(grid, m + 1)
    Am, _ = pair_raise(grid, m - 1)
    Az, _ = pair_z(grid, m)
    out: list[Term] = []
    for t in vec.plus.terms:
        out.append(replace(t, prof=0.5 * (Ap @ t.prof)))
    for t in vec.minus.terms:
        out.append(replace(t, prof=0.5 * (Am @ t.prof)))
    for t in vec.z.terms:
        out.append(replace(t, prof=Az @ t.prof))
    return TrackTerms(grid, m, out)


def omega_scalar(scalar: TrackTerms) -> VecTerms:
    """omega * f for a mode-m scalar: tracks (sin, sin, cos) shaped profiles."""
    grid, m = scalar.grid, scalar.mode
    x = grid.x
    plus_terms, minus_terms, z_terms = [], [], []
    for t in scalar.terms:
        # omega_plus = sin(theta) e^{i phi}: profile multiplier depends on the
        # factored weights: sin * sin^|m| G -> sin^|m+1| * (...)
        if m >= 0:
            plus_terms.append(replace(t, prof=t.prof.copy()))
        else:
            plus_terms.append(replace(t, prof=(1.0 - x * x) * t.prof))
        if m <= 0:
            minus_terms.append(replace(t, prof=t.prof.copy()))
        else:
            minus_terms.append(replace(t, prof=(1.0 - x * x) * t.prof))
        z_terms.append(replace(t, prof=x * t.prof))
    return VecTerms(grid, m, TrackTerms(grid, m + 1, plus_terms),
                    TrackTerms(grid, m - 1, minus_terms),
                    TrackTerms(grid, m, z_terms))


def dot_product_terms(u: VecTerms, w: VecTerms) -> list[tuple[Term, int, Term, int, float]]:
    """Bilinear u.w as (term, mode, term, mode, weight); modes must sum to zero."""
    if u.mode + w.mode != 0:
        raise ValueError("vector pairing needs opposite modes")
    out = []
    for a in u.plus.terms:
        for b in w.minus.terms:
            out.append((a, u.mode + 1, b, w.mode - 1, 0.5))
    for a in u.minus.terms:
        for b in w.plus.terms:
            out.append((a, u.mode - 1, b, w.mode + 1, 0.5))
    for a in u.z.terms:
        for b in w.z.terms:
            out.append((a, u.mode, b, w.mode, 1.0))
    return out


def scalar_product_terms(f: TrackTerms, g: TrackTerms,
                         weight: float) -> list[tuple[Term, int, Term, int, float]]:
    """Bilinear f*g as weighted term pairs; modes must sum to zero."""
    if f.mode + g.mode != 0:
        raise ValueError("scalar pairing needs opposite modes")
    return [(a, f.mode, b, g.mode, weight) for a in f.terms for b in g.terms]


# ---------------------------------------------------------------------------
# physical evaluation on tensor grids
# ---------------------------------------------------------------------------

def eval_physical_scalar(track: TrackTerms, r: np.ndarray,
                         x: np.ndarray) -> np.ndarray:
    """Physical samples including the sin^|mode| pole weight, shape (nr, nx)."""
    from .geometry import interp_matrix

    interp = interp_matrix(track.grid.x, np.asarray(x, dtype=float))
    vals = track.evaluate(np.asarray(r, dtype=float), interp)
    return vals * np.sqrt(1.0 - np.asarray(x) ** 2) ** abs(track.mode)


def eval_physical_vector(vec: VecTerms, r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Stacked (3, nr, nx) physical track samples of a vector field."""
    return np.stack([eval_physical_scalar(t, r, x) for t in vec.tracks])


def vector_amplitude(vec: VecTerms, r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean magnitude |u| from the track samples."""
    s = eval_physical_vector(vec, r, x)
    return np.sqrt(0.5 * np.abs(s[0]) ** 2 + 0.5 * np.abs(s[1]) ** 2
                   + np.abs(s[2]) ** 2)
