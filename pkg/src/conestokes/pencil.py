"""Quadratic operator pencil of the Dirichlet Stokes system on the cone.

Substituting u = r^lam U(omega), p = r^(lam-1) P(omega) into the stationary
Stokes system and scaling out the radial powers leaves a lambda-quadratic
matrix family

    L(lam) = A0 + lam A1 + lam^2 A2

acting on the stacked profiles (G+, G-, Gz, Q) of one azimuthal mode:

    momentum track  : (-beltrami - lam(lam+1)) U + [grad r^(lam-1) P]-track,
    divergence row  : -(lam * omega.u + tangential divergence part),
    boundary rows   : U = 0 at the cap edge (Dirichlet).

Eigenvalues are computed by first companion linearization of the quadratic
pencil, filtered by strip membership and backward-error residual, then
polished by a bordered Newton iteration.  lam = 1 (eigenvector (0, const))
and lam = -2 are exact eigenvalues of the discrete pencil for every cap, a
useful build-time sanity anchor.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .angular import (
    AngularField,
    divergence_mats,
    gegenbauer_operator,
    pair_lower,
    pair_raise,
    pair_z,
    track_modes,
)
from .geometry import CapGrid


class StripEdgeError(ValueError):
    """An eigenvalue sits too close to a strip edge for reliable filtering."""


class SpuriousFloodError(RuntimeError):
    """Residual filter rejected almost every in-strip candidate."""


# ---------------------------------------------------------------------------
# Pencil assembly
# ---------------------------------------------------------------------------

@dataclass
class PencilOperator:
    """lambda-quadratic matrix family A0 + lam A1 + lam^2 A2."""

    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    mode: int = 0
    grid: CapGrid | None = None
    boundary_rows: tuple[int, ...] = ()
    _norms: tuple[float, float, float] = field(init=False, repr=False)

    def __post_init__(self):
        self._norms = (np.linalg.norm(self.A0, 2), np.linalg.norm(self.A1, 2),
                       np.linalg.norm(self.A2, 2))

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def eval(self, lam: complex) -> np.ndarray:
        return self.A0 + lam * self.A1 + lam * lam * self.A2

    def eval_deriv(self, lam: complex) -> np.ndarray:
        return self.A1 + 2.0 * lam * self.A2

    def scale(self, lam: complex) -> float:
        s0, s1, s2 = self._norms
        return s0 + abs(lam) * s1 + abs(lam) ** 2 * s2

    def residual(self, lam: complex, w: np.ndarray) -> float:
        return float(np.linalg.norm(self.eval(lam) @ w)
                     / (np.linalg.norm(w) * self.scale(lam)))

    def split_fields(self, w: np.ndarray) -> tuple[AngularField, AngularField]:
        """Stacked vector -> (velocity vector3 field, pressure scalar field)."""
        if self.grid is None:
            raise ValueError("synthetic pencil carries no grid")
        n = self.grid.n
        tracks = w[: 3 * n].reshape(3, n)
        vel = AngularField(self.grid, self.mode, "vector3", tracks)
        prs = AngularField(self.grid, self.mode, "scalar", w[3 * n:])
        return vel, prs


def assemble_stokes_pencil(grid: CapGrid, m: int) -> PencilOperator:
    """Discrete Stokes pencil at azimuthal mode m on the cap grid."""
    if grid.theta0 >= np.pi - 1e-12:
        raise ValueError("Stokes pencil needs a proper cap (theta0 < pi)")
    n = grid.n
    N = 4 * n
    A0 = np.zeros((N, N), dtype=complex)
    A1 = np.zeros((N, N), dtype=complex)
    A2 = np.zeros((N, N), dtype=complex)

    sl = [slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n), slice(3 * n, 4 * n)]
    grad_pairs = (pair_raise(grid, m), pair_lower(grid, m), pair_z(grid, m))

    for t, mu in enumerate(track_modes(m)):
        # momentum: (-beltrami - lam(lam+1)) U_t
        A0[sl[t], sl[t]] = -gegenbauer_operator(grid, abs(mu))
        A1[sl[t], sl[t]] -= np.eye(n)
        A2[sl[t], sl[t]] -= np.eye(n)
        # pressure gradient at radial exponent lam - 1: (lam-1) A + B
        Ag, Bg = grad_pairs[t]
        A1[sl[t], sl[3]] += Ag
        A0[sl[t], sl[3]] += Bg - Ag

    # divergence row: -(lam * omega.u + tangential part)
    amats, bmats = divergence_mats(grid, m)
    for t in range(3):
        A1[sl[3], sl[t]] -= amats[t]
        A0[sl[3], sl[t]] -= bmats[t]

    # Dirichlet rows at the cap edge for each velocity track
    b = n - 1
    rows = []
    for t in range(3):
        i = sl[t].start + b
        A0[i, :] = 0.0
        A1[i, :] = 0.0
        A2[i, :] = 0.0
        A0[i, i] = 1.0
        rows.append(i)
    return PencilOperator(A0=A0, A1=A1, A2=A2, mode=m, grid=grid,
                          boundary_rows=tuple(rows))


# ---------------------------------------------------------------------------
# Eigenvalue computation
# ---------------------------------------------------------------------------

@dataclass
class EigenRecord:
    lam: complex
    kappa: int                      # geometric multiplicity
    mode: int
    residual: float
    vectors: np.ndarray             # (kappa, N) null basis, rows normalized
    chain_len: int = 1
    d: int = 0                      # max log exponent = chain_len - 1

    def eigenpairs(self, pencil: PencilOperator):
        return [pencil.split_fields(v) for v in self.vectors]


def _companion(pencil: PencilOperator) -> tuple[np.ndarray, np.ndarray]:
    n = pencil.n
    A = np.zeros((2 * n, 2 * n), dtype=complex)
    B = np.zeros((2 * n, 2 * n), dtype=complex)
    A[:n, :n] = pencil.A0
    A[:n, n:] = pencil.A1
    A[n:, n:] = np.eye(n)
    B[:n, n:] = -pencil.A2
    B[n:, :n] = np.eye(n)
    return A, B


def newton_refine(pencil: PencilOperator, lam: complex, w: np.ndarray,
                  tol: float = 1e-13, max_iter: int = 12) -> tuple[complex, np.ndarray]:
    """Bordered Newton polish of an eigenpair seed."""
    n = pencil.n
    w = w / np.linalg.norm(w)
    c = w.conj()
    for _ in range(max_iter):
        L = pencil.eval(lam)
        r = L @ w
        if np.linalg.norm(r) / pencil.scale(lam) < tol:
            break
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = L
        J[:n, n] = pencil.eval_deriv(lam) @ w
        J[n, :n] = c
        rhs = np.concatenate([-r, [0.0]])
        try:
            upd = sla.solve(J, rhs)
        except sla.LinAlgError:
            break
        w = w + upd[:n]
        lam = lam + upd[n]
        w = w / np.linalg.norm(w)
    return lam, w


def null_space(pencil: PencilOperator, lam: complex,
               rank_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right null basis, left null basis, singular values of L(lam)."""
    L = pencil.eval(lam)
    u, s, vh = sla.svd(L)
    cut = rank_tol * pencil.scale(lam)
    k = int(np.sum(s < cut))
    if k == 0:
        k = 1  # keep the closest-to-null direction for diagnostics
    right = vh[-k:].conj()
    left = u[:, -k:].conj().T
    return right, left, s


def _normalize_eigvec(pencil: PencilOperator, w: np.ndarray) -> np.ndarray:
    """Velocity-L2 normalization with a deterministic phase.

    Falls back to pressure normalization for velocity-free eigenvectors
    (the constant-pressure family at lam = 1).
    """
    if pencil.grid is None:
        w = w / np.linalg.norm(w)
    else:
        w = w.copy()
        vel, prs = pencil.split_fields(w)
        nv = vel.l2_norm()
        if nv > 1e-9 * np.linalg.norm(w):
            w = w / nv
        else:
            # velocity-free eigenvector: remove sub-tolerance velocity noise
            w[: 3 * pencil.grid.n] = 0.0
            w = w / prs.l2_norm()
    i = int(np.argmax(np.abs(w)))
    w = w * (np.abs(w[i]) / w[i])
    return w


def eigenvalues_in_strip(pencil: PencilOperator, re_min: float, re_max: float,
                         lam_cap: float = 50.0, res_tol: float = 1e-8,
                         merge_tol: float = 1e-6, edge_tol: float = 1e-6,
                         refine: bool = True) -> list[EigenRecord]:
    """Converged eigenvalues of one pencil with Re lam in [re_min, re_max].

    Companion linearization seeds, residual filter, cluster merge, Newton
    polish, then an SVD rank count for the geometric multiplicity.
    """
    if re_min >= re_max:
        raise ValueError("re_min must be below re_max")
    A, B = _companion(pencil)
    vals, vecs = sla.eig(A, B)
    n = pencil.n
    finite = np.isfinite(vals) & (np.abs(vals) < lam_cap)
    vals, vecs = vals[finite], vecs[:, finite]
    margin = 10 * merge_tol
    in_strip = (vals.real >= re_min - margin) & (vals.real <= re_max + margin)
    vals, vecs = vals[in_strip], vecs[:, in_strip]

    passed: list[tuple[complex, np.ndarray]] = []
    n_checked = 0
    for lam, z in zip(vals, vecs.T):
        w = z[:n]
        if np.linalg.norm(w) < 1e-12 * np.linalg.norm(z):
            w = z[n:]
        n_checked += 1
        if pencil.residual(lam, w) < res_tol:
            passed.append((lam, w))
    if n_checked >= 10 and len(passed) < 0.1 * n_checked:
        raise SpuriousFloodError(
            f"residual filter rejected {n_checked - len(passed)}/{n_checked} "
            "candidates; refine the angular grid")

    # cluster by eigenvalue
    passed.sort(key=lambda t: (t[0].real, t[0].imag))
    clusters: list[list[tuple[complex, np.ndarray]]] = []
    for lam, w in passed:
        if clusters and abs(lam - clusters[-1][-1][0]) < merge_tol:
            clusters[-1].append((lam, w))
        else:
            clusters.append([(lam, w)])

    # a defective real eigenvalue splits under rounding into a conjugate pair
    # wider than merge_tol; the real pencil's spectrum is conjugation
    # symmetric, so near-conjugate sibling clusters are one real eigenvalue
    merged: list[list[tuple[complex, np.ndarray]]] = []
    for cl in clusters:
        lam = complex(np.mean([l for l, _ in cl]))
        if merged:
            prev = complex(np.mean([l for l, _ in merged[-1]]))
            if (abs(lam - np.conj(prev)) < 20 * merge_tol
                    and abs(lam.imag) < 20 * merge_tol):
                merged[-1].extend(cl)
                continue
        merged.append(list(cl))
    clusters = merged

    records = []
    for cl in clusters:
        lam0 = complex(np.mean([l for l, _ in cl]))
        w0 = cl[0][1]
        if refine:
            lam0, w0 = newton_refine(pencil, lam0, w0)
        # prefer the real axis when a refined value is a rounding-level
        # conjugate remnant and the real point passes the residual filter
        if 0 < abs(lam0.imag) < 10 * merge_tol:
            lam_re = complex(lam0.real)
            right, _, s = null_space(pencil, lam_re, rank_tol=res_tol)
            if pencil.residual(lam_re, right[0]) < res_tol:
                lam0, w0 = lam_re, right[0]
        if not (re_min - merge_tol <= lam0.real <= re_max + merge_tol):
            continue
        for edge in (re_min, re_max):
            if abs(lam0.real - edge) < edge_tol:
                raise StripEdgeError(
                    f"eigenvalue {lam0} within {edge_tol} of strip edge {edge}; "
                    "choose a different strip")
        right, _, _ = null_space(pencil, lam0, rank_tol=max(res_tol, 1e-9))
        basis = np.stack([_normalize_eigvec(pencil, v) for v in right])
        rec = EigenRecord(lam=lam0, kappa=basis.shape[0], mode=pencil.mode,
                          residual=pencil.residual(lam0, basis[0]), vectors=basis)
        records.append(rec)
    records.sort(key=lambda r: (r.lam.real, r.lam.imag))
    return records


def eigenvector(pencil: PencilOperator, lam: complex,
                rank_tol: float = 1e-8) -> list[tuple[AngularField, AngularField]]:
    """Null-space basis of L(lam) as (velocity, pressure) field pairs.

    Rejects lam that is not a converged eigenvalue: the candidate null
    direction is Newton-polished and must not move away from lam.
    """
    right, _, s = null_space(pencil, lam, rank_tol)
    cut = rank_tol * pencil.scale(lam)
    if s[-1] > cut:
        raise ValueError(f"lam = {lam} is not a converged eigenvalue "
                         f"(smallest singular value {s[-1]:.2e})")
    lam_ref, _ = newton_refine(pencil, lam, right[0])
    if abs(lam_ref - lam) > 1e-7 * (1.0 + abs(lam)):
        raise ValueError(f"lam = {lam} is not a converged eigenvalue "
                         f"(nearest eigenvalue {lam_ref})")
    return [pencil.split_fields(_normalize_eigvec(pencil, v)) for v in right]


def detect_generalized(pencil: PencilOperator, rec: EigenRecord,
                       solve_tol: float = 1e-6) -> tuple[int, int]:
    """Jordan-chain length above the first eigenvector of the record.

    For a quadratic pencil the chain recursion is

        L(lam) w_k = -L'(lam) w_{k-1} - A2 w_{k-2},

    solvable iff the right side is orthogonal to the left null space (up to
    the eigenvector freedom in w_{k-1}).  Each solvable step adds one log
    power to the singular functions.
    """
    lam = rec.lam
    right, left, _ = null_space(pencil, lam, rank_tol=1e-8)
    # first step: exists a null combination w0 = N c with left^H L'(lam) w0 = 0
    M = left @ (pencil.eval_deriv(lam) @ right.T)
    um, sm, vmh = np.linalg.svd(M)
    scale = max(sm[0], np.linalg.norm(pencil.eval_deriv(lam) @ right[0]))
    if sm[-1] > solve_tol * scale:
        rec.chain_len, rec.d = 1, 0
        return 1, 0
    w0 = right.T @ vmh[-1].conj()
    w0 /= np.linalg.norm(w0)
    L = pencil.eval(lam)
    chain = [w0, np.linalg.lstsq(L, -pencil.eval_deriv(lam) @ w0, rcond=None)[0]]
    length = 2
    for _ in range(3):  # chains longer than 5 are outside the supported regime
        rhs = -pencil.eval_deriv(lam) @ chain[-1] - pencil.A2 @ chain[-2]
        incompat = np.linalg.norm(left @ rhs) / max(np.linalg.norm(rhs), 1e-300)
        if incompat > solve_tol:
            break
        chain.append(np.linalg.lstsq(L, rhs, rcond=None)[0])
        length += 1
    rec.chain_len = length
    rec.d = length - 1
    return length, rec.d


def scan_modes(grid: CapGrid, mode_cap: int, re_min: float, re_max: float,
               detect_chains: bool = False, **kw) -> list[EigenRecord]:
    """Eigenvalues aggregated over azimuthal modes 0..mode_cap.

    Modes m and -m share their spectrum by reflection symmetry; records
    carry the nonnegative mode index.
    """
    out: list[EigenRecord] = []
    for m in range(mode_cap + 1):
        pencil = assemble_stokes_pencil(grid, m)
        recs = eigenvalues_in_strip(pencil, re_min, re_max, **kw)
        if detect_chains:
            for r in recs:
                detect_generalized(pencil, r)
        out.extend(recs)
    out.sort(key=lambda r: (r.lam.real, r.lam.imag, r.mode))
    return out


def merged_eigenvalues(records: list[EigenRecord], merge_tol: float = 1e-6) -> list[complex]:
    """Distinct eigenvalues across a record list."""
    vals: list[complex] = []
    for r in sorted(records, key=lambda r: (r.lam.real, r.lam.imag)):
        if vals and abs(r.lam - vals[-1]) < merge_tol:
            continue
        vals.append(r.lam)
    return vals


def smallest_positive_eigenvalue(grid: CapGrid, mode_cap: int = 3,
                                 search_max: float = 1.5) -> tuple[float, int]:
    """lambda_1 and the mode carrying it (always <= 1: lam = 1 is universal)."""
    recs = scan_modes(grid, mode_cap, 1e-3, search_max)
    pos = [r for r in recs if r.lam.real > 1e-6]
    if not pos:
        raise RuntimeError("no positive eigenvalue found below search_max")
    best = min(pos, key=lambda r: r.lam.real)
    return float(best.lam.real), best.mode
