"""Construction of singular-function chains and their parametrized sums.

A forward family grows from an eigenvalue lam with eigenvector (Phi, Psi):
element (mu, k) holds the angular profiles of the (log r)^k part of the
mu-th chain member, so the member fields are

    r^(lam + 2 mu) sum_k (log r)^k Phi_k(omega),
    r^(lam - 1 + 2 mu) sum_k (log r)^k Psi_k(omega).

Successive members solve the Stokes pencil at the shifted exponent
lam + 2 mu with the previous velocity as source; when the shifted exponent
hits another eigenvalue (resonance) the solve is bordered, one extra log
power appears, and the free null-space basis is recorded.  Dual families
run the same recursion from the partner eigenvalue -1-lam at the opposite
azimuthal mode.

The parameter-dependent sums u(x, s) = sum_mu (s r^2)^mu u^(mu)(x) plus
their log(tau r)-shifted variants are assembled as term fields; the shift
is the exact binomial transform of the log powers.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import CapGrid
from .pencil import PencilOperator, newton_refine, null_space
from .terms import Term, TrackTerms, VecTerms


class ResonanceError(RuntimeError):
    """Resonant chain step whose bordered system is not solvable."""


class CapabilityError(RuntimeError):
    """Chain construction would need log terms with allow_logs=False."""


# ---------------------------------------------------------------------------
# chain-length bounds
# ---------------------------------------------------------------------------

def chain_bound_forward(lam: complex, gamma: float) -> int:
    """Smallest N >= 0 with gamma + Re lam + 2N > -3/2."""
    re = lam.real if isinstance(lam, complex) else float(lam)
    if gamma >= 0.5 - re:
        raise ValueError(f"gamma = {gamma} not below 1/2 - Re lam = {0.5 - re}")
    deficit = -1.5 - gamma - re
    if deficit < 0:
        return 0
    return int(math.floor(deficit / 2.0)) + 1


def chain_bound_dual(lam: complex) -> int:
    """Smallest N >= 0 with 2N > Re lam - 1."""
    re = lam.real if isinstance(lam, complex) else float(lam)
    if re <= 0:
        raise ValueError("dual chains are built for eigenvalues with Re lam > 0")
    if re - 1.0 < 0:
        return 0
    return int(math.floor((re - 1.0) / 2.0)) + 1


# ---------------------------------------------------------------------------
# family container
# ---------------------------------------------------------------------------

@dataclass
class ChainFamily:
    """One chain: base exponent, angular profile table, resonance records."""

    grid: CapGrid
    mode: int
    lam: complex                 # velocity exponent of the mu = 0 member
    n_steps: int
    direction: str               # "forward" | "dual"
    elements: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]
    gamma: float | None = None
    resonances: list[dict] = field(default_factory=list)

    @property
    def d(self) -> int:
        return max(k for (_, k) in self.elements)

    def logpows(self, mu: int) -> list[int]:
        return sorted(k for (m, k) in self.elements if m == mu)

    def element(self, mu: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.elements[(mu, k)]

    # -- parametrized assembly ---------------------------------------------

    def velocity(self, s: complex, tau: float = 1.0) -> VecTerms:
        return self._assemble(s, tau, pressure=False)

    def pressure(self, s: complex, tau: float = 1.0) -> TrackTerms:
        return self._assemble(s, tau, pressure=True)

    def _assemble(self, s: complex, tau: float, pressure: bool):
        grid, m = self.grid, self.mode
        base = self.lam - (1 if pressure else 0)
        ltau = math.log(tau)
        tracks: list[list[Term]] = [[], [], []]
        prs_terms: list[Term] = []
        for (mu, k), (vel, prs) in self.elements.items():
            kap = base + 2 * mu
            for jj in range(k + 1):
                c = (s ** mu) * math.comb(k, jj) * ltau ** (k - jj)
                if c == 0:
                    continue
                if pressure:
                    prs_terms.append(Term(coef=c, kappa=kap, p=jj, j=0,
                                          cut=None, prof=prs))
                else:
                    for t in range(3):
                        tracks[t].append(Term(coef=c, kappa=kap, p=jj, j=0,
                                              cut=None, prof=vel[t]))
        if pressure:
            return TrackTerms(grid, m, prs_terms)
        return VecTerms(grid, m, TrackTerms(grid, m + 1, tracks[0]),
                        TrackTerms(grid, m - 1, tracks[1]),
                        TrackTerms(grid, m, tracks[2]))

    def tail_velocity(self, s: complex, tau: float = 1.0) -> VecTerms:
        """s (s r^2)^N u^(N): the residual source of the chain identity."""
        grid, m = self.grid, self.mode
        N = self.n_steps
        ltau = math.log(tau)
        tracks: list[list[Term]] = [[], [], []]
        for k in self.logpows(N):
            vel, _ = self.elements[(N, k)]
            for jj in range(k + 1):
                c = s * (s ** N) * math.comb(k, jj) * ltau ** (k - jj)
                for t in range(3):
                    tracks[t].append(Term(coef=c, kappa=self.lam + 2 * N, p=jj,
                                          j=0, cut=None, prof=vel[t]))
        return VecTerms(grid, m, TrackTerms(grid, m + 1, tracks[0]),
                        TrackTerms(grid, m - 1, tracks[1]),
                        TrackTerms(grid, m, tracks[2]))

    def scale(self) -> float:
        return max(np.linalg.norm(v) + np.linalg.norm(p)
                   for v, p in self.elements.values())


# ---------------------------------------------------------------------------
# chain construction
# ---------------------------------------------------------------------------

def _nearest_eigen_distance(pencil: PencilOperator, kappa: complex) -> float:
    """Distance from kappa to the closest pencil eigenvalue (inf if far)."""
    right, _, svals = null_space(pencil, kappa, rank_tol=1e-8)
    if svals[-1] / pencil.scale(kappa) > 1e-4:
        return np.inf
    lam_near, w = newton_refine(pencil, kappa, right[0])
    if pencil.residual(lam_near, w) > 1e-8:
        return np.inf
    return abs(lam_near - kappa)


def _stack(vel: np.ndarray, prs: np.ndarray) -> np.ndarray:
    return np.concatenate([vel.ravel(), prs])


def _unstack(w: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return w[: 3 * n].reshape(3, n), w[3 * n:]


def _momentum_rhs(pencil: PencilOperator, vel: np.ndarray) -> np.ndarray:
    b = np.zeros(pencil.n, dtype=complex)
    b[: vel.size] = -vel.ravel()
    for i in pencil.boundary_rows:
        b[i] = 0.0
    return b


def extend_chain(pencil: PencilOperator, family: ChainFamily, step: int,
                 allow_logs: bool = False, res_tol: float = 1e-7,
                 warn_band: float = 1e-3) -> None:
    """Append chain member ``step`` to the family (in place).

    Solves the pencil at the shifted exponent; at resonance the bordered
    log-lifted system is solved, the minimal-norm particular solution is
    kept and the free null basis recorded.
    """
    if step != max(m for (m, _) in family.elements) + 1:
        raise ValueError("chain must be extended one step at a time")
    n = family.grid.n
    kappa = family.lam + 2 * step
    prev_pows = family.logpows(step - 1)
    P = max(prev_pows)

    rhs = {k: _momentum_rhs(pencil, family.elements[(step - 1, k)][0])
           for k in prev_pows}
    src_scale = max(np.linalg.norm(b) for b in rhs.values())
    if src_scale < 1e-10 * family.scale():
        family.elements[(step, 0)] = (np.zeros((3, n), dtype=complex),
                                      np.zeros(n, dtype=complex))
        return

    dist = _nearest_eigen_distance(pencil, kappa)
    resonant = dist < res_tol
    if res_tol <= dist < warn_band:
        warnings.warn(
            f"near-resonant chain step at exponent {kappa} "
            f"(eigenvalue distance {dist:.2e}); solve conditioning ~ {1.0 / dist:.2e}")

    L = pencil.eval(kappa)
    Lp = pencil.eval_deriv(kappa)

    def rhs_at(k: int, sol: dict[int, np.ndarray]) -> np.ndarray:
        b = rhs.get(k, np.zeros(pencil.n, dtype=complex)).copy()
        if k + 1 in sol:
            b -= (k + 1) * (Lp @ sol[k + 1])
        if k + 2 in sol:
            b -= (k + 1) * (k + 2) * (pencil.A2 @ sol[k + 2])
        return b

    sol: dict[int, np.ndarray] = {}
    if not resonant:
        import scipy.linalg as sla

        lu = sla.lu_factor(L)
        for k in range(P, -1, -1):
            sol[k] = sla.lu_solve(lu, rhs_at(k, sol))
    else:
        right, left, _ = null_space(pencil, kappa, rank_tol=1e-8)
        top_b = rhs_at(P, {})
        solvable = (np.linalg.norm(left @ top_b)
                    < 1e-9 * max(np.linalg.norm(top_b), 1e-300))
        log_lift = not solvable
        if log_lift:
            if not allow_logs:
                raise CapabilityError(
                    f"resonant chain step at exponent {kappa}: log lifting "
                    "required; pass allow_logs=True")
            # top equation L w_{P+1} = 0: the null combination is fixed by
            # solvability of the level below
            M = (P + 1) * (left @ (Lp @ right.T))
            if np.linalg.cond(M) > 1e10:
                raise ResonanceError(
                    f"bordered system rank failure at exponent {kappa}: "
                    "resonance with generalized eigenvectors is unsupported")
            sol[P + 1] = right.T @ np.linalg.solve(M, left @ top_b)
        for k in range(P, -1, -1):
            b = rhs_at(k, sol)
            if k + 1 in sol:
                # spend the null freedom of the level above on solvability
                Madj = (k + 1) * (left @ (Lp @ right.T))
                cadj = np.linalg.lstsq(Madj, left @ b, rcond=None)[0]
                sol[k + 1] = sol[k + 1] + right.T @ cadj
                b = rhs_at(k, sol)
            incompat = np.linalg.norm(left @ b) / max(np.linalg.norm(b), 1e-300)
            if incompat > 1e-6:
                raise ResonanceError(
                    f"unsolvable log level {k} at exponent {kappa} "
                    f"(incompatibility {incompat:.2e})")
            sol[k] = np.linalg.lstsq(L, b, rcond=None)[0]
        family.resonances.append({
            "mu": step, "exponent": kappa, "distance": dist,
            "log_lift": log_lift, "free_basis": right.copy(),
        })

    for k, w in sol.items():
        if np.linalg.norm(w) > 1e-11 * src_scale:
            family.elements[(step, k)] = _unstack(w, n)


def chain_identity_residual(family: ChainFamily, s: complex,
                            r: np.ndarray, x: np.ndarray,
                            tau: float = 1.0) -> tuple[float, float]:
    """Relative residuals of the chain identity on a sample grid.

    Returns (momentum, divergence): the first measures
    (s - Delta) u + grad p - s (s r^2)^N u^(N) against the field scale, the
    second measures div u pointwise against |grad u| scale.
    """
    from .terms import eval_physical_vector, gradient, laplacian, divergence, \
        eval_physical_scalar

    r = np.asarray(r, dtype=float)
    u = family.velocity(s, tau)
    p = family.pressure(s, tau)
    resid = u.scaled(s) + laplacian(u).scaled(-1.0) + gradient(p) \
        + family.tail_velocity(s, tau).scaled(-1.0)
    rv = eval_physical_vector(resid, r, x)
    uv = eval_physical_vector(u, r, x)
    lv = eval_physical_vector(laplacian(u), r, x)
    scale = max(abs(s) * np.max(np.abs(uv)), np.max(np.abs(lv)))
    mom = float(np.max(np.abs(rv)) / max(scale, 1e-300))
    dv = eval_physical_scalar(divergence(u), r, x)
    # per-radius gradient scale: |u| (1 + |lam| + 2N) / r
    amp = np.max(np.abs(uv), axis=(0, 2))
    gscale = amp * (1.0 + abs(family.lam) + 2 * family.n_steps) / r
    div = float(np.max(np.max(np.abs(dv), axis=1) / np.maximum(gscale, 1e-300)))
    return mom, div


def build_chain(pencil: PencilOperator, lam: complex, eigvec: np.ndarray,
                n_steps: int, direction: str, gamma: float | None = None,
                allow_logs: bool = False) -> ChainFamily:
    """Family from an eigenpair: mu = 0 member plus ``n_steps`` extensions.

    ``eigvec`` is the stacked (velocity tracks, pressure) null vector of the
    pencil at lam; for dual families the pencil must be assembled at the
    opposite azimuthal mode and lam is the partner exponent -1-lam_j.
    """
    n = pencil.grid.n
    vel, prs = _unstack(np.asarray(eigvec, dtype=complex), n)
    fam = ChainFamily(grid=pencil.grid, mode=pencil.mode, lam=lam,
                      n_steps=n_steps, direction=direction,
                      elements={(0, 0): (vel, prs)}, gamma=gamma)
    for mu in range(1, n_steps + 1):
        extend_chain(pencil, fam, mu, allow_logs=allow_logs)
    return fam


# ---------------------------------------------------------------------------
# serialization (versioned text format with CSV blocks)
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def save_family(fam: ChainFamily, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# conestokes-chain v{FORMAT_VERSION}\n")
        fh.write(f"theta0 = {float(fam.grid.theta0)!r}\n")
        fh.write(f"n_theta = {fam.grid.n}\n")
        fh.write(f"mode = {fam.mode}\n")
        fh.write(f"lam = {complex(fam.lam)!r}\n")
        fh.write(f"n_steps = {fam.n_steps}\n")
        fh.write(f"direction = {fam.direction}\n")
        fh.write(f"gamma = {'None' if fam.gamma is None else repr(float(fam.gamma))}\n")
        for (mu, k), (vel, prs) in sorted(fam.elements.items()):
            fh.write(f"[element mu={mu} logpow={k}]\n")
            block = np.vstack([vel, prs[None, :]])
            for row in block:
                fh.write(",".join(f"{float(z.real)!r}{float(z.imag):+}j"
                                  for z in row) + "\n")


def load_family(path: str, grid: CapGrid) -> ChainFamily:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines[0].startswith("# conestokes-chain v"):
        raise ValueError("not a chain file")
    if int(lines[0].rsplit("v", 1)[1]) != FORMAT_VERSION:
        raise ValueError("unsupported chain format version")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("["):
        key, val = lines[i].split("=", 1)
        meta[key.strip()] = val.strip()
        i += 1
    if int(meta["n_theta"]) != grid.n or abs(float(meta["theta0"]) - grid.theta0) > 1e-12:
        raise ValueError("grid mismatch for chain file")
    elements = {}
    while i < len(lines):
        head = lines[i].strip()
        mu = int(head.split("mu=")[1].split()[0])
        k = int(head.split("logpow=")[1].rstrip("]"))
        rows = [np.array([complex(z) for z in lines[i + 1 + rr].split(",")])
                for rr in range(4)]
        elements[(mu, k)] = (np.vstack(rows[:3]), rows[3])
        i += 5
    return ChainFamily(grid=grid, mode=int(meta["mode"]), lam=complex(meta["lam"]),
                       n_steps=int(meta["n_steps"]), direction=meta["direction"],
                       elements=elements,
                       gamma=None if meta["gamma"] == "None" else float(meta["gamma"]))
