"""Spectrum of the Neumann-Laplacian pencil on the cap.

The pencil acts as (-beltrami - lam(lam+1)) with a Neumann edge condition,
so its eigenvalues come in pairs mu, -1-mu solving mu(mu+1) = M, where M
runs through the Neumann eigenvalues of -beltrami aggregated over azimuthal
modes.  The smallest positive eigenvalue mu_2 bounds the admissible weight
interval of the parameter-dependent solver from above.

The source text states the relation with the opposite sign, mu(mu+1) = -M;
for M > 0 that equation has no real roots while the listed values
(mu_1 = 0 for M = 0, ordering with mu_2 > 0) force mu(mu+1) = +M, which is
what this module implements.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .angular import beltrami_eigenvalues
from .geometry import CapGrid


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class NeumannSpectrum:
    theta0: float
    M: np.ndarray          # nonnegative Beltrami Neumann eigenvalues, sorted
    mu: np.ndarray         # nonnegative roots of mu(mu+1) = M
    mu_neg: np.ndarray     # partner roots -1 - mu
    modes: tuple[int, ...]  # azimuthal mode contributing each M

    @property
    def mu2(self) -> float:
        """Smallest positive root; the critical weight exponent."""
        pos = self.mu[self.mu > 1e-10]
        if pos.size == 0:
            raise EigensolverError("no positive Neumann exponent found; increase count")
        return float(pos[0])

    def rows(self):
        for j, (M, mu, mun, m) in enumerate(
                zip(self.M, self.mu, self.mu_neg, self.modes), start=1):
            yield {"j": j, "mode": m, "M": M, "mu": mu, "mu_neg": mun}


def mu_from_m(M: float) -> tuple[float, float]:
    """Roots of mu(mu+1) = M with mu >= 0; M = 0 gives the pair (0, -1)."""
    mu = 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * M))
    return mu, -1.0 - mu


def neumann_spectrum(grid: CapGrid, mode_cap: int = 3, count: int = 6,
                     dedupe_rel: float = 1e-8) -> NeumannSpectrum:
    """Smallest ``count`` Neumann eigenvalues across modes |m| <= mode_cap.

    Values merged across modes at relative tolerance ``dedupe_rel``.  A
    computed eigenvalue below -1e-8 signals a discretization failure.
    """
    found: list[tuple[float, int]] = []
    for m in range(mode_cap + 1):
        vals = beltrami_eigenvalues(grid, m, "neumann", count=count + 2)
        if vals.size == 0:
            raise EigensolverError(f"Neumann eigensolve returned nothing at mode {m}")
        if np.any(vals < -1e-8):
            raise EigensolverError(
                f"negative Neumann eigenvalue {vals.min():.3e} at mode {m}")
        for v in np.clip(vals, 0.0, None):
            found.append((float(v), m))
    found.sort()
    merged: list[tuple[float, int]] = []
    for v, m in found:
        if merged and abs(v - merged[-1][0]) <= dedupe_rel * max(1.0, abs(v)):
            continue
        merged.append((v, m))
    merged = merged[:count]
    M = np.array([v for v, _ in merged])
    if abs(M[0]) > 1e-10:
        raise EigensolverError(f"lowest Neumann eigenvalue {M[0]:.3e} is not 0")
    mus = np.array([mu_from_m(v)[0] for v in M])
    return NeumannSpectrum(theta0=grid.theta0, M=M, mu=mus, mu_neg=-1.0 - mus,
                           modes=tuple(m for _, m in merged))
