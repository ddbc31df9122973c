"""Pairing forms between singular families and biorthogonalization.

The basic form is

    a(u, p, v, q) = int_K [ u . (-Delta v + grad q) - p div v ] dx

evaluated with a compact radial cutoff on the second pair, and the
antisymmetrized version A(u,p,v,q) = a(u,p,v,q) - a(v,q,u,p).  Both are
computed from separable-term integrands: every term product contributes
r^kappa (log r)^p [cutoff factors] times an angular density; products are
collapsed by radial signature, which cancels the formally divergent plateau
pieces that the chain identities annihilate pointwise; the pure-power part
near the vertex is integrated in closed form and the cutoff region by Gauss
panels split at the cutoff knots.

Power counting guards every surviving plateau term: a collapsed exponent
with Re kappa + 2 <= -1 means the pairing genuinely diverges and is
reported with the offending exponent.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .chains import ChainFamily, build_chain, chain_bound_dual, chain_bound_forward
from .geometry import CapGrid, CutoffZeta
from .pencil import (
    PencilOperator,
    _normalize_eigvec,
    assemble_stokes_pencil,
    detect_generalized,
    eigenvalues_in_strip,
)
from .terms import (
    Cut,
    Term,
    TrackTerms,
    VecTerms,
    divergence,
    dot_product_terms,
    gradient,
    laplacian,
    scalar_product_terms,
)


class DivergentPairingError(ValueError):
    pass


TermPairs = list[tuple[Term, int, Term, int, float]]


# ---------------------------------------------------------------------------
# signature reduction and radial integration
# ---------------------------------------------------------------------------

def _power_int(kappa: complex, p: int, upper: float) -> complex:
    """Closed form of the vertex integral of r^kappa (log r)^p up to ``upper``."""
    b = kappa + 1.0
    if b.real <= 1e-12:
        raise DivergentPairingError(
            f"divergent vertex integral: exponent {kappa} with log power {p}")
    T = math.log(upper)
    total = 0.0 + 0.0j
    for k in range(p + 1):
        total += ((-1.0) ** (p - k) * math.factorial(p) / math.factorial(k)
                  * T**k / b ** (p - k + 1))
    return cmath.exp(b * T) * total


@dataclass
class _Signature:
    kappa: complex
    p: int
    cuts: tuple[tuple[Cut, int], ...]   # (cutoff, derivative order)
    density: complex = 0.0
    scale: float = 0.0


def _reduce_pairs(grid: CapGrid, pairs: TermPairs,
                  drop_rel: float = 3e-11) -> list[_Signature]:
    xq, wq, interp = grid.quad_grid(oversample=2)
    sig: dict = {}
    cache: dict[int, np.ndarray] = {}

    def on_quad(t: Term) -> np.ndarray:
        key = id(t.prof)
        if key not in cache:
            cache[key] = interp @ t.prof
        return cache[key]

    for a, ma, b, mb, wgt in pairs:
        if ma + mb != 0:
            raise ValueError("paired terms must have opposite modes")
        cuts = []
        if a.cut is not None:
            cuts.append((a.cut, a.j))
        if b.cut is not None:
            cuts.append((b.cut, b.j))
        cuts = tuple(sorted(cuts, key=lambda cj: (id(cj[0]), cj[1])))
        kappa = a.kappa + b.kappa
        p = a.p + b.p
        key = (np.round(kappa, 10), p, tuple((id(c), j) for c, j in cuts))
        if key not in sig:
            sig[key] = _Signature(kappa=kappa, p=p, cuts=cuts)
        s = sig[key]
        dens = np.sum(wq * (1.0 - xq * xq) ** abs(ma) * on_quad(a) * on_quad(b))
        s.density += wgt * a.coef * b.coef * dens
        s.scale += abs(wgt * a.coef * b.coef) * float(
            np.sum(wq * np.abs(on_quad(a)) * np.abs(on_quad(b))))
    return [s for s in sig.values()
            if abs(s.density) > drop_rel * max(s.scale, 1e-300)]


def _integrate_signatures(sigs: list[_Signature], gauss_order: int = 24,
                          subpanels: int = 4) -> complex:
    total = 0.0 + 0.0j
    xg, wg = leggauss(gauss_order)
    for s in sigs:
        kap = s.kappa + 2.0  # volume measure r^2 dr
        if not s.cuts:
            raise DivergentPairingError(
                "pairing integrand without compact cutoff support")
        r_hi = min(c.r_support for c, _ in s.cuts)
        knots = sorted({k for c, _ in s.cuts for k in c.knots()})
        # a differentiated cutoff or an origin-vanishing bump kills the
        # integrand below its first knot
        dead = [c.knots()[0] for c, j in s.cuts
                if j > 0 or c.vanishes_at_origin]
        if dead:
            r0 = max(dead)
            val = 0.0 + 0.0j
        else:
            r0 = min(c.r_plateau for c, _ in s.cuts)
            if kap.real <= -1.0 + 1e-12:
                raise DivergentPairingError(
                    f"pairing diverges at the vertex: collapsed exponent "
                    f"{kap} (log power {s.p}) against a cutoff plateau")
            val = _power_int(kap, s.p, r0)
        pts = [r0] + [k for k in knots if r0 < k < r_hi] + [r_hi]
        for lo, hi in zip(pts[:-1], pts[1:]):
            edges = np.linspace(lo, hi, subpanels + 1)
            for a, b in zip(edges[:-1], edges[1:]):
                rq = 0.5 * (b - a) * xg + 0.5 * (b + a)
                wq = 0.5 * (b - a) * wg
                f = np.exp(kap * np.log(rq))
                if s.p:
                    f = f * np.log(rq) ** s.p
                for c, j in s.cuts:
                    f = f * c.eval_derivs(rq, j)[j]
                val += np.sum(wq * f)
        total += s.density * val
    return 2.0 * np.pi * complex(total)


# ---------------------------------------------------------------------------
# the forms a and A
# ---------------------------------------------------------------------------

def pairing_a(grid: CapGrid, u: VecTerms, p: TrackTerms, v: VecTerms,
              q: TrackTerms, cut: Cut) -> complex:
    """a(u, p, cut v, cut q) with power-count guarding."""
    vc = v.with_cut(cut)
    w = laplacian(vc).scaled(-1.0) + gradient(q.with_cut(cut))
    dv = divergence(vc)
    pairs = dot_product_terms(u, w) + scalar_product_terms(p, dv, -1.0)
    return _integrate_signatures(_reduce_pairs(grid, pairs))


def pairing_A(grid: CapGrid, u: VecTerms, p: TrackTerms, v: VecTerms,
              q: TrackTerms, cut: Cut) -> complex:
    """A(u,p,v,q) = a(u,p,cut v,cut q) - a(cut v,cut q,u,p).

    Both halves enter one signature table before integration, so plateau
    pieces that cancel pointwise between them are collapsed away instead of
    being integrated separately (they can be individually divergent).
    """
    vc = v.with_cut(cut)
    qc = q.with_cut(cut)
    w = laplacian(vc).scaled(-1.0) + gradient(qc)
    dv = divergence(vc)
    pairs = dot_product_terms(u, w) + scalar_product_terms(p, dv, -1.0)
    wu = laplacian(u).scaled(-1.0) + gradient(p)
    du = divergence(u)
    pairs += [(a, ma, b, mb, -wgt)
              for a, ma, b, mb, wgt in dot_product_terms(vc, wu)]
    pairs += scalar_product_terms(qc, du, +1.0)
    return _integrate_signatures(_reduce_pairs(grid, pairs))


# ---------------------------------------------------------------------------
# indexed family sets and biorthogonalization
# ---------------------------------------------------------------------------

@dataclass
class FamilyEntry:
    i: int
    k: int
    mode: int
    lam: float
    forward: ChainFamily
    dual: ChainFamily


@dataclass
class FamilySet:
    grid: CapGrid
    gamma: float
    entries: list[FamilyEntry]
    pencils: dict[int, PencilOperator] = field(default_factory=dict)

    def groups(self) -> dict[tuple[float, int], list[FamilyEntry]]:
        out: dict[tuple[float, int], list[FamilyEntry]] = {}
        for e in self.entries:
            out.setdefault((round(e.lam, 9), e.mode), []).append(e)
        return out

    def entry(self, i: int, k: int) -> FamilyEntry:
        for e in self.entries:
            if e.i == i and e.k == k:
                return e
        raise KeyError((i, k))


def default_chi(plateau: float = 1.0, support: float = 2.0) -> Cut:
    return Cut(zeta=CutoffZeta(plateau=plateau, support=support), parabolic=False)


def build_family_set(grid: CapGrid, gamma: float, mode_cap: int = 2,
                     allow_logs: bool = False,
                     lam_window: tuple[float, float] | None = None) -> FamilySet:
    """All forward + dual chains for eigenvalues with 0 < Re lam < 1/2 - gamma.

    Forward chains carry N_{i,gamma} members, duals N_j members built from
    the partner eigenvalue -1-lam at the opposite azimuthal mode.  Entries
    are indexed by increasing Re lam (index i) and branch (index k).
    """
    lo, hi = lam_window if lam_window else (1e-6, 0.5 - gamma)
    pencils: dict[int, PencilOperator] = {}
    found = []   # (lam, mode, record)
    for m in range(mode_cap + 1):
        pencils[m] = assemble_stokes_pencil(grid, m)
        for rec in eigenvalues_in_strip(pencils[m], lo, hi):
            if rec.lam.real <= 0:
                continue
            found.append((float(rec.lam.real), m, rec))
    found.sort(key=lambda t: (t[0], t[1]))
    entries: list[FamilyEntry] = []
    for i, (lam, m, rec) in enumerate(found, start=1):
        chain_len, d = detect_generalized(pencils[m], rec)
        if d > 0 and not allow_logs:
            from .chains import CapabilityError

            raise CapabilityError(
                f"eigenvalue {lam} (mode {m}) carries a generalized eigenvector "
                "(log terms); construction requires allow_logs=True")
        if -m not in pencils:
            pencils[-m] = assemble_stokes_pencil(grid, -m)
        n_fwd = chain_bound_forward(lam, gamma)
        n_dual = chain_bound_dual(lam)
        dual_basis = _null_vectors(pencils[-m], -1.0 - lam)
        if len(dual_basis) != rec.kappa:
            raise RuntimeError(
                f"multiplicity mismatch at lam={lam}: forward {rec.kappa}, "
                f"dual {len(dual_basis)}")
        for k in range(1, rec.kappa + 1):
            fwd = build_chain(pencils[m], lam, rec.vectors[k - 1], n_fwd,
                              "forward", gamma, allow_logs=allow_logs)
            dual = build_chain(pencils[-m], -1.0 - lam, dual_basis[k - 1],
                               n_dual, "dual", gamma, allow_logs=allow_logs)
            entries.append(FamilyEntry(i=i, k=k, mode=m, lam=lam,
                                       forward=fwd, dual=dual))
    return FamilySet(grid=grid, gamma=gamma, entries=entries, pencils=pencils)


def _null_vectors(pencil: PencilOperator, lam: float) -> list[np.ndarray]:
    from .pencil import null_space

    right, _, s = null_space(pencil, lam, rank_tol=1e-8)
    if s[-1] > 1e-8 * pencil.scale(lam):
        raise ValueError(f"{lam} is not an eigenvalue of the mode-{pencil.mode} pencil")
    return [_normalize_eigvec(pencil, v) for v in right]


def _dual_linear_combination(fams: list[ChainFamily], coefs: np.ndarray) -> ChainFamily:
    base = fams[0]
    keys = set()
    for f in fams:
        keys |= set(f.elements)
    elements = {}
    for key in keys:
        vel = np.zeros((3, base.grid.n), dtype=complex)
        prs = np.zeros(base.grid.n, dtype=complex)
        for f, c in zip(fams, coefs):
            if key in f.elements:
                v, p = f.elements[key]
                vel = vel + c * v
                prs = prs + c * p
        elements[key] = (vel, prs)
    return ChainFamily(grid=base.grid, mode=base.mode, lam=base.lam,
                       n_steps=base.n_steps, direction="dual",
                       elements=elements, gamma=base.gamma,
                       resonances=[r for f in fams for r in f.resonances])


def biorthogonalize(fs: FamilySet, chi: Cut | None = None) -> None:
    """Normalize dual families so the A-pairing Gram is the identity.

    Level 0: per eigenvalue group, invert the a-form Gram between forward
    eigenfunctions and dual candidates.  Resonant pairs lam_j = lam_i + 2d
    are then corrected by a vertex-degree dual shift so the parametrized
    pairing vanishes off the diagonal as well.
    """
    chi = chi or default_chi()
    for (lam, m), group in fs.groups().items():
        k = len(group)
        B = np.zeros((k, k), dtype=complex)
        for a_idx, ea in enumerate(group):
            u0 = ea.forward.velocity(0.0)
            p0 = ea.forward.pressure(0.0)
            for b_idx, eb in enumerate(group):
                B[a_idx, b_idx] = pairing_a(fs.grid, u0, p0,
                                            eb.dual.velocity(0.0),
                                            eb.dual.pressure(0.0), chi)
        if np.linalg.cond(B) > 1e10:
            raise RuntimeError(
                f"singular level-0 pairing Gram at lam={lam}: discretization "
                "failure (eigenvectors not converged)")
        C = np.linalg.solve(B, np.eye(k, dtype=complex))
        duals = [e.dual for e in group]
        for l_idx, e in enumerate(group):
            e.dual = _dual_linear_combination(duals, C[:, l_idx])

    # resonance corrections between groups with lam_j = lam_i + 2d
    groups = fs.groups()
    for (lam_j, m_j), gj in groups.items():
        for (lam_i, m_i), gi in groups.items():
            if m_i != m_j or lam_j <= lam_i + 1e-9:
                continue
            d = round((lam_j - lam_i) / 2.0)
            if d < 1 or abs((lam_j - lam_i) / 2.0 - d) > 1e-7:
                continue
            if d > gj[0].dual.n_steps:
                continue
            for ej in gj:
                for ei in gi:
                    val = pairing_A(fs.grid, ei.forward.velocity(1.0),
                                    ei.forward.pressure(1.0),
                                    ej.dual.velocity(1.0),
                                    ej.dual.pressure(1.0), chi)
                    # subtract the whole shifted partner chain, so the member
                    # recursion of the corrected family still holds above
                    # level d (the level-d term alone would break it)
                    for (nu, kk), (v_el, q_el) in ei.dual.elements.items():
                        if d + nu > ej.dual.n_steps:
                            continue
                        tgt = (d + nu, kk)
                        vel_t, prs_t = ej.dual.elements.get(
                            tgt, (np.zeros((3, fs.grid.n), dtype=complex),
                                  np.zeros(fs.grid.n, dtype=complex)))
                        ej.dual.elements[tgt] = (vel_t - val * v_el,
                                                 prs_t - val * q_el)


def gram_matrix(fs: FamilySet, s: complex, chi: Cut | None = None,
                tau: float = 1.0) -> np.ndarray:
    """A-pairing Gram over all retained (i,k) x (j,l) at parameter s."""
    chi = chi or default_chi()
    n = len(fs.entries)
    G = np.zeros((n, n), dtype=complex)
    for a, ea in enumerate(fs.entries):
        u = ea.forward.velocity(s, tau)
        p = ea.forward.pressure(s, tau)
        for b, eb in enumerate(fs.entries):
            if eb.mode != ea.mode:
                continue  # azimuthal orthogonality: exact zero
            G[a, b] = pairing_A(fs.grid, u, p, eb.dual.velocity(s, tau),
                                eb.dual.pressure(s, tau), chi)
    return G
