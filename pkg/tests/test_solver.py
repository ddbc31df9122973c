import numpy as np
import pytest

from conestokes.geometry import CutoffZeta, make_circular_cap
from conestokes.norms import weighted_norm_mesh
from conestokes.solver import (
    CompatibilityError,
    ConeSolution,
    MeshField,
    WeightIntervalError,
    check_weight_admissible,
    dual_correction,
    solve_param,
)
from conestokes.terms import GaussBump, Term, TrackTerms, VecTerms, curl, gradient, laplacian


@pytest.fixture(scope="module")
def cap32():
    return make_circular_cap(2 * np.pi / 3, 32)


def manufactured(grid, m=1, s=1.0):
    """Solenoidal bump velocity (curl of a potential) + bump pressure."""
    bump = GaussBump(t0=np.log(0.25), width=0.7)
    x = grid.x
    prof = (x - grid.x0) ** 2 * (1.0 + 0.3 * x)
    Az = TrackTerms(grid, m, [Term(1.0, 0.0, 0, 0, bump, prof.astype(complex))])
    A = VecTerms(grid, m, TrackTerms(grid, m + 1, []),
                 TrackTerms(grid, m - 1, []), Az)
    u = curl(A).collapse()
    p = TrackTerms(grid, m, [Term(0.7, 0.0, 0, 0, bump, (1 + x).astype(complex))])
    f = (u.scaled(s) + laplacian(u).scaled(-1.0) + gradient(p)).collapse()
    return u, p, f


def rel_v0_error(sol, u_exact):
    mesh = sol.mesh
    I = np.eye(mesh.grid.n)
    ut = [tt.evaluate(mesh.r, I) for tt in u_exact.tracks]
    diff = tuple(MeshField(mesh, sol.tracks[k].mode,
                           sol.tracks[k].values - ut[k]) for k in range(3))
    ref = tuple(MeshField(mesh, sol.tracks[k].mode, ut[k]) for k in range(3))
    num = weighted_norm_mesh(ConeSolution(mesh, sol.s, diff, sol.pressure), 0.0, 0).value
    den = weighted_norm_mesh(ConeSolution(mesh, sol.s, ref, sol.pressure), 0.0, 0).value
    return num / den


# ---------------------------------------------------------------------------
# admissibility and compatibility guards
# ---------------------------------------------------------------------------

def test_weight_interval_guard():
    check_weight_admissible(0.3, lam1=0.5, mu2=0.86)
    with pytest.raises(WeightIntervalError):
        check_weight_admissible(-0.2, lam1=0.5, mu2=0.86)
    with pytest.raises(WeightIntervalError):
        check_weight_admissible(1.5, lam1=0.5, mu2=0.86)
    with pytest.raises(WeightIntervalError):
        check_weight_admissible(0.5, lam1=0.9, mu2=2.0)


def test_compatibility_refusal(cap32):
    grid = cap32
    bump = GaussBump(t0=np.log(0.3), width=0.4)
    g = TrackTerms(grid, 0, [Term(1.0, 0.0, 0, 0, bump,
                                  np.ones(grid.n, dtype=complex))])
    with pytest.raises(CompatibilityError):
        solve_param(grid, 0, 1.0, None, g, beta=0.8, lam1=0.505, mu2=0.856,
                    n_t=64, r_min=1e-2, r_max=4.0)


def test_zero_data_zero_solution(cap32):
    sol = solve_param(cap32, 1, 2.0 + 1.0j, None, None, n_t=64,
                      r_min=1e-2, r_max=4.0)
    assert np.max(np.abs(sol.track_values())) < 1e-12
    assert np.max(np.abs(sol.pressure.values)) < 1e-12


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

def test_manufactured_recovery_and_convergence(cap32):
    grid = cap32
    u, p, f = manufactured(grid)
    errs = []
    for n_t in (96, 192, 384):
        sol = solve_param(grid, 1, 1.0, f, None, n_t=n_t, r_min=0.02, r_max=4.0)
        errs.append(rel_v0_error(sol, u))
    assert errs[-1] < 1e-4
    # second order in the radial step
    assert errs[0] / errs[1] > 3.0
    assert errs[1] / errs[2] > 3.0


def test_manufactured_complex_s(cap32):
    grid = cap32
    u, p, f = manufactured(grid, s=4j)
    sol = solve_param(grid, 1, 4j, f, None, n_t=256, r_min=0.02, r_max=4.0)
    assert rel_v0_error(sol, u) < 3e-4


def test_apriori_estimate_stable_across_s(cap32):
    # left side of the a-priori bound stays proportional to the data norms
    # over a decade sweep in |s| for the scaled data family
    grid = cap32
    beta = 0.3
    ratios = []
    for sval in (1.0, 10.0, 100.0):
        u, p, f = manufactured(grid, s=sval)
        sol = solve_param(grid, 1, sval, f, None, n_t=192,
                          r_min=0.02, r_max=min(4.0, 8.0 / np.sqrt(sval)))
        u2 = weighted_norm_mesh(sol, beta, 2).value
        u0 = weighted_norm_mesh(sol, beta, 0).value
        p1 = weighted_norm_mesh(sol.pressure, beta, 1).value
        from conestokes.norms import weighted_norm_terms

        f0 = weighted_norm_terms(f, beta, 0, r_lo=1e-3, r_hi=4.0).value
        ratios.append((u2 + sval * u0 + p1) / f0)
    top, bot = max(ratios), min(ratios)
    assert top / bot < 3.0


def test_truncation_independence(cap32):
    # dyadic grids anchored at a common r_min nest exactly, which isolates
    # the outer-truncation effect from the discretization error
    grid = cap32
    u, p, f = manufactured(grid)
    sol1 = solve_param(grid, 1, 1.0, f, None, n_t=257, r_min=4 / 256, r_max=4.0)
    sol2 = solve_param(grid, 1, 1.0, f, None, n_t=289, r_min=8 / 512, r_max=8.0)
    assert np.max(np.abs(sol1.mesh.r - sol2.mesh.r[:257])) < 1e-12
    d = np.max(np.abs(sol1.track_values() - sol2.track_values()[:, :257, :]))
    scale = np.max(np.abs(sol1.track_values()))
    assert d / scale < 1e-6


def test_infsup_trend(cap32):
    # smallest singular value of the divergence block, normalized, does not
    # collapse under refinement (logged stability indicator)
    from conestokes.solver import _assemble, make_mesh
    import scipy.sparse.linalg as spla

    grid = cap32
    vals = []
    for n_t in (24, 48):
        mesh = make_mesh(grid, 1, 0.05, 4.0, n_t)
        A = _assemble(mesh, 1.0, 0.505)
        n1 = mesh.n_t * mesh.n_x
        div_block = A[3 * n1:, :3 * n1]
        sv = spla.svds(div_block.tocsc(), k=1, which="SM",
                       return_singular_vectors=False, maxiter=5000, tol=1e-6)
        vals.append(sv[0])
    assert vals[-1] > 1e-8
    assert vals[-1] > 0.1 * vals[0]


# ---------------------------------------------------------------------------
# dual corrections
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lam1_entry(cap32):
    from conestokes.pairing import biorthogonalize, build_family_set

    fs = build_family_set(cap32, gamma=-0.4, mode_cap=1)
    biorthogonalize(fs)
    return fs.entries[0]


def test_dual_correction_compatibility_integral(lam1_entry, cap32):
    # int_K G dx = 0 for lam_i not an odd integer; G lives at mode -1 here,
    # so the azimuthal integral vanishes structurally -- check the m = 0
    # reduction of the radial-angular factor instead on a mode-0 family
    from conestokes.pairing import biorthogonalize, build_family_set
    from conestokes.solver import dual_correction_sources
    from conestokes.terms import eval_physical_scalar

    grid = make_circular_cap(np.pi / 2, 32)
    fs = build_family_set(grid, gamma=-2.7, mode_cap=0, allow_logs=True)
    biorthogonalize(fs)
    by_lam = {round(e.lam): e for e in fs.entries if e.mode == 0}
    # lam = 2 (even): zero mean; lam = 1 and 3 (odd): no vanishing claim
    e2 = by_lam[2]
    _, G, _ = dual_correction_sources(e2.dual, 1.0)
    rr = np.geomspace(0.05, 1.2, 400)
    xs, wx, interp = grid.quad_grid(oversample=2)
    vals = G.evaluate(rr, interp) * np.sqrt(1 - xs**2)[None, :] ** abs(G.mode)
    wts = np.gradient(rr) * rr**2
    total = 2 * np.pi * np.sum(wts[:, None] * wx[None, :] * vals)
    scale = 2 * np.pi * np.sum(wts[:, None] * wx[None, :] * np.abs(vals))
    assert abs(total) / scale < 1e-6
    e1 = by_lam[1]
    _, G1, _ = dual_correction_sources(e1.dual, 1.0)
    vals1 = G1.evaluate(rr, interp) * np.sqrt(1 - xs**2)[None, :] ** abs(G1.mode)
    total1 = 2 * np.pi * np.sum(wts[:, None] * wx[None, :] * vals1)
    scale1 = 2 * np.pi * np.sum(wts[:, None] * wx[None, :] * np.abs(vals1))
    assert abs(total1) / scale1 > 1e-3  # odd eigenvalue: mean does not vanish


def test_dual_correction_near_field(lam1_entry, cap32):
    # on the plateau v* tracks the dual chain: slope -(1 + lam)
    kp = dual_correction(cap32, lam1_entry.dual, 1.0,
                         zeta=CutoffZeta(profile="smooth"), n_t=256)
    xs = np.linspace(cap32.x0, 1.0, 24)
    rr = np.geomspace(0.04, 0.2, 8)
    amp = np.sqrt(np.sum(np.abs(kp.eval_velocity(rr, xs)) ** 2, axis=(0, 2)))
    slope = np.polyfit(np.log(rr), np.log(amp), 1)[0]
    assert slope == pytest.approx(-(1.0 + lam1_entry.lam), abs=0.02)


@pytest.mark.slow
def test_dual_correction_far_field_envelope(lam1_entry, cap32):
    from conestokes.neumann import neumann_spectrum

    mu2 = neumann_spectrum(cap32, 2, 4).mu2
    kp = dual_correction(cap32, lam1_entry.dual, 1.0,
                         zeta=CutoffZeta(profile="smooth"), n_t=1600,
                         r_max=32.0, r_min=0.03)
    xs = np.linspace(cap32.x0, 1.0, 24)
    rr = np.geomspace(4.0, 12.0, 12)
    amp = np.sqrt(np.sum(np.abs(kp.eval_velocity(rr, xs)) ** 2, axis=(0, 2)))
    slope = np.polyfit(np.log(rr), np.log(amp), 1)[0]
    assert abs(slope - (-(2.0 + mu2))) < 0.15


def test_dual_correction_discrete_homogeneity(lam1_entry, cap32):
    # the correction satisfies its discrete system to solver precision and
    # the chain part satisfies the member identity exactly, so the kernel
    # pair solves the homogeneous problem on the plateau
    from conestokes.chains import chain_identity_residual

    kp = dual_correction(cap32, lam1_entry.dual, 2.0 + 1.0j,
                         zeta=CutoffZeta(profile="smooth"), n_t=256)
    assert kp.correction.residual < 1e-10
    r = np.geomspace(0.05, 0.4, 24)
    x = np.linspace(cap32.x0, 1.0, 24)
    mom, div = chain_identity_residual(lam1_entry.dual, 2.0 + 1.0j, r, x)
    assert mom < 1e-8
    assert div < 1e-8
