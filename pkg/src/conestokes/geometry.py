"""Cone geometry, cutoff functions, and quadrature rules.

The cone is K = {x in R^3 : x/|x| in Omega} with Omega a circular cap of
polar half-angle theta0 on the unit sphere.  Everything downstream works in
the variables

    r     = |x|            (radial distance from the vertex),
    theta = polar angle    (collocated through x = cos(theta)),
    phi   = azimuth        (handled analytically, one Fourier mode at a time).

Angular collocation uses Chebyshev-Lobatto points in x = cos(theta) on
[cos(theta0), 1].  Smooth fields of azimuthal mode mu behave like
sin(theta)^|mu| * (polynomial in x) near the pole, so the pole needs no
boundary row; the cap edge x = cos(theta0) is the only true boundary.

Radial integrals are composite Gauss-Legendre with optional geometric
grading toward an endpoint (power-law integrands) and automatic panel
refinement to a requested tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss


class QuadratureError(RuntimeError):
    """Raised when panel refinement fails to meet the requested tolerance."""


# ---------------------------------------------------------------------------
# Chebyshev-Lobatto collocation utilities
# ---------------------------------------------------------------------------

def chebyshev_lobatto(n: int) -> np.ndarray:
    """n Chebyshev-Lobatto points on [-1, 1], increasing."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    return -np.cos(np.pi * np.arange(n) / (n - 1))


def chebyshev_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix on Chebyshev-Lobatto points x (any affine image)."""
    n = len(x)
    c = np.ones(n)
    c[0] = 2.0
    c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    dx = x[:, None] - x[None, :] + np.eye(n)
    d = np.outer(c, 1.0 / c) / dx
    d -= np.diag(d.sum(axis=1))
    return d


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on the n Lobatto points of [-1, 1] (increasing order)."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    m = n - 1
    w = np.zeros(n)
    # w_j = (2/m) * sum'' over even k of cos(k*j*pi/m)/(1-k^2); O(n^2) is fine here.
    for j in range(n):
        s = 0.0
        for k in range(0, m + 1, 2):
            term = np.cos(k * j * np.pi / m) / (1.0 - k * k) if k != 0 else 1.0
            if k == 0 or k == m:
                term *= 0.5
            s += term
        w[j] = 4.0 * s / m
    w[0] *= 0.5
    w[-1] *= 0.5
    return w[::-1].copy()  # match increasing node order


def barycentric_weights_lobatto(n: int) -> np.ndarray:
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def interp_matrix(x_src: np.ndarray, x_tgt: np.ndarray) -> np.ndarray:
    """Barycentric interpolation matrix from Lobatto nodes x_src to x_tgt."""
    n = len(x_src)
    w = barycentric_weights_lobatto(n)
    out = np.zeros((len(x_tgt), n))
    for i, xt in enumerate(x_tgt):
        diff = xt - x_src
        hit = np.where(np.abs(diff) < 1e-14)[0]
        if hit.size:
            out[i, hit[0]] = 1.0
            continue
        q = w / diff
        out[i] = q / q.sum()
    return out


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeDomain:
    """Circular-cap cone: the cap is {theta <= theta0} on the unit sphere."""

    theta0: float
    description: str = "circular-cap"

    def __post_init__(self):
        if not 0.0 < self.theta0 < np.pi:
            raise ValueError(f"theta0 must lie in (0, pi), got {self.theta0}")


@dataclass(frozen=True)
class CapGrid:
    """Collocation grid on the cap for one-dimensional angular profiles.

    Nodes are stored with theta increasing, so ``theta[-1] == theta0`` is the
    boundary row and ``theta[0] == 0`` the pole (for theta0 = pi both ends are
    poles).  ``wx`` integrates dx = sin(theta) dtheta over the cap, exactly
    for polynomials in x up to degree n-1.
    """

    theta0: float
    theta: np.ndarray
    x: np.ndarray            # cos(theta), decreasing from 1 to cos(theta0)
    wx: np.ndarray           # quadrature weights for integral over dx
    dmat: np.ndarray         # d/dx on the nodes

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def x0(self) -> float:
        return float(np.cos(self.theta0))

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta)

    def interp_to(self, x_tgt: np.ndarray) -> np.ndarray:
        """Interpolation matrix from this grid to arbitrary x targets."""
        return interp_matrix(self.x, np.asarray(x_tgt, dtype=float))

    def quad_grid(self, oversample: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gauss-Legendre quadrature grid (x_q, w_q, interp) resolving products.

        Products of two collocation profiles have polynomial degree up to
        2(n-1); ``oversample=2`` integrates those exactly.
        """
        nq = oversample * self.n
        xg, wg = leggauss(nq)
        a, b = self.x0, 1.0
        xq = 0.5 * (b - a) * xg + 0.5 * (b + a)
        wq = 0.5 * (b - a) * wg
        return xq, wq, self.interp_to(xq)


def make_circular_cap(theta0: float, n_theta: int) -> CapGrid:
    """Collocation grid on [0, theta0] with the boundary node at theta0.

    theta0 = pi is allowed as a full-sphere surrogate (both endpoints are
    then pole-regular and no boundary row exists).
    """
    if not 0.0 < theta0 <= np.pi:
        raise ValueError(f"theta0 must lie in (0, pi], got {theta0}")
    if n_theta < 8:
        raise ValueError(f"need n_theta >= 8, got {n_theta}")
    x0 = float(np.cos(theta0))
    xi = chebyshev_lobatto(n_theta)            # increasing on [-1, 1]
    x = (0.5 * (1.0 - x0) * xi + 0.5 * (1.0 + x0))[::-1].copy()  # 1 -> x0
    x[0] = 1.0
    x[-1] = x0
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    wx = clenshaw_curtis_weights(n_theta)[::-1].copy() * 0.5 * (1.0 - x0)
    dmat = chebyshev_diff_matrix(x)
    return CapGrid(theta0=theta0, theta=theta, x=x, wx=wx, dmat=dmat)


# ---------------------------------------------------------------------------
# Cutoff functions
# ---------------------------------------------------------------------------

def _smoothstep5(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic step S with S(0)=0, S(1)=1 and vanishing S', S'' at both ends."""
    s = u**3 * (10.0 + u * (-15.0 + 6.0 * u))
    d1 = 30.0 * u**2 * (1.0 - u) ** 2
    d2 = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return s, d1, d2


def _smoothstep_exp(u: np.ndarray, jmax: int = 2) -> list[np.ndarray]:
    """Infinitely smooth step exp(-1/u)/(exp(-1/u)+exp(-1/(1-u))), derivs to jmax.

    All derivatives vanish at both endpoints, so a finite-difference grid
    never sees a derivative jump.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    inner = (u > 1e-12) & (u < 1.0 - 1e-12)
    uu = np.where(inner, u, 0.5)
    h = 1.0 / uu - 1.0 / (1.0 - uu)                     # S = sigma(-h)
    S = np.where(inner, 1.0 / (1.0 + np.exp(np.clip(h, -700, 700))), np.where(u >= 0.5, 1.0, 0.0))
    out = [S]
    if jmax >= 1:
        h1 = -1.0 / uu**2 - 1.0 / (1.0 - uu) ** 2
        S1 = np.where(inner, -S * (1.0 - S) * h1, 0.0)
        out.append(S1)
    if jmax >= 2:
        h2 = 2.0 / uu**3 - 2.0 / (1.0 - uu) ** 3
        S2 = np.where(inner, -(S1 * (1.0 - 2.0 * S) * h1 + S * (1.0 - S) * h2), 0.0)
        out.append(S2)
    if jmax >= 3:
        h3 = -6.0 / uu**4 - 6.0 / (1.0 - uu) ** 4
        S3 = np.where(
            inner,
            -(S2 * (1.0 - 2.0 * S) * h1 - 2.0 * S1**2 * h1
              + 2.0 * S1 * (1.0 - 2.0 * S) * h2 + S * (1.0 - S) * h3), 0.0)
        out.append(S3)
    return out


@dataclass(frozen=True)
class CutoffZeta:
    """C^2 radial cutoff: 1 on (0, plateau], 0 on [support, inf).

    The default transition is the unique quintic with matching value and
    first two derivatives at both knots.  ``profile="smooth"`` swaps in an
    infinitely differentiable step with the same plateaus; the two choices
    are interchangeable wherever cutoff independence holds, and the smooth
    one keeps finite-difference grids free of derivative jumps.
    """

    plateau: float = 0.5
    support: float = 1.0
    profile: str = "quintic"

    def __post_init__(self):
        if not 0.0 < self.plateau < self.support:
            raise ValueError("need 0 < plateau < support")
        if self.profile not in ("quintic", "smooth"):
            raise ValueError(f"unknown profile {self.profile!r}")

    def __call__(self, r):
        return self.eval(r)[0]

    def eval(self, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value and first two r-derivatives, vectorized."""
        r = np.asarray(r, dtype=float)
        a, b = self.plateau, self.support
        u = np.clip((r - a) / (b - a), 0.0, 1.0)
        du = 1.0 / (b - a)
        inside = (r > a) & (r < b)
        if self.profile == "smooth":
            s, d1, d2 = _smoothstep_exp(u, 2)
        else:
            s, d1, d2 = _smoothstep5(u)
        val = 1.0 - s
        dv = np.where(inside, -d1 * du, 0.0)
        d2v = np.where(inside, -d2 * du * du, 0.0)
        return val, dv, d2v

    def deriv(self, r, order: int = 1):
        return self.eval(r)[order]


def eval_zeta_s(zeta: CutoffZeta, s: complex, r):
    """zeta(|s| r^2) and its first two r-derivatives.

    The scaled cutoff localizes to the parabolic region |s| r^2 <= support.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    mod_s = abs(s)
    arg = mod_s * r * r
    v, d1, d2 = zeta.eval(arg)
    dr = d1 * 2.0 * mod_s * r
    d2r = d2 * (2.0 * mod_s * r) ** 2 + d1 * 2.0 * mod_s
    return v, dr, d2r


# ---------------------------------------------------------------------------
# Radial quadrature
# ---------------------------------------------------------------------------

@dataclass
class RadialGrid:
    """Composite Gauss-Legendre panels on [r_lo, r_hi].

    ``grading`` < 1 packs geometrically shrinking panels against r_lo
    (endpoint-singular integrands); 1.0 gives uniform panels.  Log-uniform
    panel layout is selected with ``log_panels=True`` and suits integrands
    that are power laws over many decades.
    """

    r_lo: float
    r_hi: float
    n_panels: int = 8
    order: int = 12
    grading: float = 1.0
    log_panels: bool = False
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.r_lo < self.r_hi:
            raise ValueError("need 0 <= r_lo < r_hi")
        self._build()

    def _breakpoints(self, n_panels: int) -> np.ndarray:
        if self.log_panels:
            if self.r_lo <= 0:
                raise ValueError("log panels need r_lo > 0")
            return np.exp(np.linspace(np.log(self.r_lo), np.log(self.r_hi), n_panels + 1))
        if self.grading == 1.0:
            return np.linspace(self.r_lo, self.r_hi, n_panels + 1)
        # panel widths grow geometrically away from r_lo (grading < 1 packs r_lo)
        widths = self.grading ** np.arange(n_panels)[::-1]
        t = np.concatenate(([0.0], np.cumsum(widths))) / widths.sum()
        return self.r_lo + (self.r_hi - self.r_lo) * t

    def _build(self, breakpoints: np.ndarray | None = None):
        bp = self._breakpoints(self.n_panels) if breakpoints is None else breakpoints
        self._bp = bp
        xg, wg = leggauss(self.order)
        nodes, weights = [], []
        for a, b in zip(bp[:-1], bp[1:]):
            nodes.append(0.5 * (b - a) * xg + 0.5 * (b + a))
            weights.append(0.5 * (b - a) * wg)
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        if np.any(np.diff(self.nodes) <= 0) or np.any(self.weights <= 0):
            raise ValueError("radial grid is not strictly increasing / positive")

    def _split(self) -> np.ndarray:
        """Breakpoints with every panel split (geometric midpoint away from 0)."""
        bp = self._bp
        mids = np.where(bp[:-1] > 0, np.sqrt(bp[:-1] * bp[1:]), 0.5 * (bp[:-1] + bp[1:]))
        out = np.empty(2 * len(bp) - 1)
        out[0::2] = bp
        out[1::2] = mids
        return out

    def integrate(self, f) -> complex:
        vals = f(self.nodes)
        return complex(np.sum(self.weights * np.asarray(vals)))


def radial_integral(grid: RadialGrid, integrand, rel_tol: float = 1e-10,
                    max_refine: int = 8) -> complex:
    """Composite Gauss value with panel refinement to a relative tolerance.

    Each refinement splits every panel (geometric midpoints toward r = 0),
    so the per-panel aspect ratio shrinks and power-law endpoints converge.
    Stops when successive values differ by a fifth of the tolerance; the
    margin absorbs the tail between the last increment and the true error.
    """
    grid._build()
    prev = grid.integrate(integrand)
    for _ in range(max_refine):
        grid._build(grid._split())
        cur = grid.integrate(integrand)
        if abs(cur - prev) <= 0.2 * rel_tol * max(abs(cur), 1e-300):
            grid.n_panels = len(grid._bp) - 1
            return cur
        prev = cur
    raise QuadratureError(
        f"radial quadrature did not converge: last two values {prev} and {cur}")
