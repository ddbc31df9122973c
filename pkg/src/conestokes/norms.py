"""Weighted Sobolev norms of cone fields.

The V-norm of order l and weight beta is the integral over the cone of

    sum_{|alpha| <= l} r^(2(beta - l + |alpha|)) |d^alpha u|^2,

the E-norm replaces the weight by r^(2 beta) + r^(2(beta - l + |alpha|)),
and the dual norm of order -1 is reported through its upper-bound
surrogate, the V^0 norm at weight beta + 1.

Cartesian derivatives are taken in the complex track combinations
(d_plus, d_minus, d_z); azimuthal orthogonality turns the multi-index sums
into fixed combinations of squared track magnitudes:

    order 1:  |W_+|^2/2 + |W_-|^2/2 + |W_z|^2
    order 2:  3/16 (|W_++|^2 + |W_--|^2) + 1/2 |W_+-|^2
              + 1/2 (|W_+z|^2 + |W_-z|^2) + |W_zz|^2

per scalar track; a velocity field adds its three Cartesian tracks with
weights (1/2, 1/2, 1).  Both the separable-term calculus (analytic fields)
and finite-difference mesh fields feed the same combinations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import CapGrid
from .solver import ConeMesh, ConeSolution, MeshField
from .terms import TrackTerms, VecTerms, d_minus, d_plus, d_z


@dataclass(frozen=True)
class WeightedNormReport:
    beta: float
    l: int
    kind: str       # "V" | "E" | "dual-surrogate"
    value: float

    def __float__(self):
        return self.value


_ORDER2_WEIGHTS = {"pp": 3.0 / 16.0, "mm": 3.0 / 16.0, "pm": 0.5,
                   "pz": 0.5, "mz": 0.5, "zz": 1.0}


def _derivative_tables(track, ops) -> dict[int, list[tuple[float, object]]]:
    """Weighted squared-magnitude contributions per derivative order."""
    dp, dm, dz = ops
    w1p, w1m, w1z = dp(track), dm(track), dz(track)
    out = {
        0: [(1.0, track)],
        1: [(0.5, w1p), (0.5, w1m), (1.0, w1z)],
        2: [(_ORDER2_WEIGHTS["pp"], dp(w1p)),
            (_ORDER2_WEIGHTS["mm"], dm(w1m)),
            (_ORDER2_WEIGHTS["pm"], dm(w1p)),
            (_ORDER2_WEIGHTS["pz"], dz(w1p)),
            (_ORDER2_WEIGHTS["mz"], dz(w1m)),
            (_ORDER2_WEIGHTS["zz"], dz(w1z))],
    }
    return out


def _weight_exponents(beta: float, l: int, order: int, kind: str) -> list[float]:
    if kind == "V":
        return [2.0 * (beta - l + order)]
    if kind == "E":
        return [2.0 * beta, 2.0 * (beta - l + order)]
    raise ValueError(f"unknown norm kind {kind!r}")


# ---------------------------------------------------------------------------
# analytic (separable-term) fields
# ---------------------------------------------------------------------------

def _term_quad(grid: CapGrid, r_lo: float, r_hi: float, n_panels: int,
               order: int = 16):
    xg, wg = leggauss(order)
    edges = np.geomspace(r_lo, r_hi, n_panels + 1)
    rq, wq = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rq.append(0.5 * (b - a) * xg + 0.5 * (b + a))
        wq.append(0.5 * (b - a) * wg)
    return np.concatenate(rq), np.concatenate(wq)


def weighted_norm_terms(field, beta: float, l: int, kind: str = "V", *,
                        r_lo: float = 1e-8, r_hi: float = 4.0,
                        n_panels: int = 48) -> WeightedNormReport:
    """Weighted norm of a TrackTerms / VecTerms field by tensor quadrature.

    The radial truncation [r_lo, r_hi] must cover the field support (cutoff
    fields) or be chosen by the caller for power-law fields.
    """
    if kind == "dual-surrogate":
        rep = weighted_norm_terms(field, beta + 1.0, 0, "V", r_lo=r_lo,
                                  r_hi=r_hi, n_panels=n_panels)
        return WeightedNormReport(beta=beta, l=-1, kind="dual-surrogate",
                                  value=rep.value)
    grid = field.grid
    rq, wq = _term_quad(grid, r_lo, r_hi, n_panels)
    xq, wx, interp = grid.quad_grid(oversample=2)
    sx2 = 1.0 - xq * xq

    if isinstance(field, VecTerms):
        tracks = [(0.5, field.plus), (0.5, field.minus), (1.0, field.z)]
    else:
        tracks = [(1.0, field)]

    ops = (d_plus, d_minus, d_z)
    total = 0.0
    for cw, tr in tracks:
        tabs = _derivative_tables(tr, ops)
        for order in range(l + 1):
            dens = np.zeros((len(rq), len(xq)))
            for w, fld in tabs[order]:
                vals = fld.evaluate(rq, interp)
                dens += w * np.abs(vals) ** 2 * sx2[None, :] ** abs(fld.mode)
            ang = dens @ wx
            for e in _weight_exponents(beta, l, order, kind):
                total += cw * np.sum(wq * rq ** (e + 2) * ang)
    return WeightedNormReport(beta=beta, l=l, kind=kind,
                              value=float(np.sqrt(2.0 * np.pi * total)))


# ---------------------------------------------------------------------------
# mesh fields
# ---------------------------------------------------------------------------

def _mesh_ops():
    return (MeshField.d_plus, MeshField.d_minus, MeshField.d_z)


def weighted_norm_mesh(field, beta: float, l: int,
                       kind: str = "V") -> WeightedNormReport:
    """Weighted norm of a MeshField / ConeSolution on its own mesh.

    Trapezoid in t = log r and cap quadrature in angle; accuracy is mesh
    limited, which suits the trend and ratio checks these norms feed.
    """
    if kind == "dual-surrogate":
        rep = weighted_norm_mesh(field, beta + 1.0, 0, "V")
        return WeightedNormReport(beta=beta, l=-1, kind="dual-surrogate",
                                  value=rep.value)
    if isinstance(field, ConeSolution):
        tracks = [(0.5, field.tracks[0]), (0.5, field.tracks[1]),
                  (1.0, field.tracks[2])]
        mesh = field.mesh
    else:
        tracks = [(1.0, field)]
        mesh = field.mesh
    wt = np.gradient(mesh.t)
    wx = mesh.grid.wx
    sx2 = 1.0 - mesh.grid.x**2
    dp, dm, dz = _mesh_ops()
    total = 0.0
    for cw, tr in tracks:
        tabs = _derivative_tables(tr, (dp, dm, dz))
        for order in range(l + 1):
            dens = np.zeros((mesh.n_t, mesh.n_x))
            for w, fld in tabs[order]:
                dens += w * np.abs(fld.values) ** 2 * sx2[None, :] ** abs(fld.mode)
            ang = dens @ wx
            for e in _weight_exponents(beta, l, order, kind):
                total += cw * np.sum(wt * mesh.r ** (e + 3) * ang)
    return WeightedNormReport(beta=beta, l=l, kind=kind,
                              value=float(np.sqrt(2.0 * np.pi * total)))


def weighted_norm(field, beta: float, l: int, kind: str = "V",
                  **kw) -> WeightedNormReport:
    """Dispatch on the field representation."""
    if isinstance(field, (TrackTerms, VecTerms)):
        return weighted_norm_terms(field, beta, l, kind, **kw)
    return weighted_norm_mesh(field, beta, l, kind)


def solution_energy(sol: ConeSolution, beta: float) -> dict[str, float]:
    """The left side of the a-priori estimate, split into its three parts."""
    u2 = weighted_norm_mesh(sol, beta, 2).value
    u0 = weighted_norm_mesh(sol, beta, 0).value
    p1 = weighted_norm_mesh(sol.pressure, beta, 1).value
    return {"u_V2": u2, "u_V0": u0, "p_V1": p1,
            "total": u2 + abs(sol.s) * u0 + p1}
