import numpy as np
import pytest

from conestokes.angular import (
    AngularField,
    beltrami_eigenvalues,
    beltrami_matrix,
    pair_lower,
    pair_raise,
    pair_z,
    gegenbauer_operator,
    radial_component,
    scalar_pairing,
    surface_divergence,
    tangential_gradient,
    track_modes,
)
from conestokes.geometry import make_circular_cap


def cap(theta0=np.pi / 2, n=32):
    return make_circular_cap(theta0, n)


# ---------------------------------------------------------------------------
# first-order calculus identities on known fields
# ---------------------------------------------------------------------------

def test_pair_rules_on_coordinate_fields():
    grid = cap(2 * np.pi / 3, 24)
    x = grid.x
    one = np.ones(grid.n)
    # field r (kappa=1, mu=0, G=1): d/dz -> cos(theta), d+ -> sin e^{i phi}
    Az, Bz = pair_z(grid, 0)
    assert np.allclose(1.0 * (Az @ one) + Bz @ one, x)
    Ap, Bp = pair_raise(grid, 0)
    assert np.allclose(1.0 * (Ap @ one) + Bp @ one, one)
    # field z = r cos (kappa=1, mu=0, G=x): d+ -> 0, d/dz -> 1
    Gz = x.copy()
    assert np.max(np.abs(1.0 * (Ap @ Gz) + Bp @ Gz)) < 1e-11
    assert np.allclose(1.0 * (Az @ Gz) + Bz @ Gz, one)
    # field x+iy (kappa=1, mu=1, G=1): d- -> 2, d+ -> 0
    Am, Bm = pair_lower(grid, 1)
    assert np.allclose(1.0 * (Am @ one) + Bm @ one, 2.0 * one)
    Ap1, Bp1 = pair_raise(grid, 1)
    assert np.max(np.abs(1.0 * (Ap1 @ one) + Bp1 @ one)) < 1e-11


def test_second_derivatives_compose_to_laplacian():
    # Delta = dz dz + d+ d- on scalar tracks; on r^kappa sin^a G e^{i mu phi}
    # this must equal r^(kappa-2) [kappa(kappa+1) + L_a] G
    grid = cap(0.8 * np.pi, 40)
    rng = np.random.default_rng(3)
    for mu in (-2, -1, 0, 1, 3):
        kappa = 1.7
        G = rng.standard_normal(grid.n) @ np.linalg.matrix_power(np.eye(grid.n), 1)
        G = np.polynomial.chebyshev.chebvander(grid.x, 8) @ rng.standard_normal(9)
        Az, Bz = pair_z(grid, mu)
        step1 = (kappa * Az + Bz) @ G
        Az2, Bz2 = pair_z(grid, mu)
        dzz = ((kappa - 1) * Az2 + Bz2) @ step1
        Am, Bm = pair_lower(grid, mu)          # to mode mu-1 at kappa
        step2 = (kappa * Am + Bm) @ G
        Ap, Bp = pair_raise(grid, mu - 1)      # back to mode mu at kappa-1
        dpm = ((kappa - 1) * Ap + Bp) @ step2
        lap = dzz + dpm
        La = gegenbauer_operator(grid, abs(mu))
        expect = (kappa * (kappa + 1)) * G + La @ G
        scale = np.max(np.abs(expect)) + 1.0
        assert np.max(np.abs(lap - expect)) / scale < 1e-9


# ---------------------------------------------------------------------------
# Laplace-Beltrami spectra
# ---------------------------------------------------------------------------

def test_full_sphere_spectrum_mode0():
    grid = cap(np.pi, 48)
    vals = beltrami_eigenvalues(grid, 0, "dirichlet", count=4)
    assert np.allclose(vals, [0.0, 2.0, 6.0, 12.0], atol=1e-8)


def test_half_sphere_dirichlet_mode0():
    grid = cap(np.pi / 2, 40)
    vals = beltrami_eigenvalues(grid, 0, "dirichlet", count=3)
    # odd-degree Legendre: l = 1, 3, 5
    assert np.allclose(vals, [2.0, 12.0, 30.0], atol=1e-8)


def test_half_sphere_neumann_mode0_constant_ground_state():
    grid = cap(np.pi / 2, 40)
    op = beltrami_matrix(grid, 0, "neumann")
    import scipy.linalg as sla

    vals, vecs = sla.eig(op.mat, op.mass)
    finite = np.isfinite(vals)
    vals, vecs = vals[finite], vecs[:, finite]
    i = np.argmin(np.abs(vals))
    assert abs(vals[i]) < 1e-8
    v = vecs[:, i]
    v = v / v[np.argmax(np.abs(v))]
    assert np.max(np.abs(v - 1.0)) < 1e-8  # constant eigenfunction


def test_half_sphere_neumann_mode1():
    # P_1^1 = -sin(theta) satisfies the edge Neumann condition at pi/2: M = 2
    grid = cap(np.pi / 2, 40)
    vals = beltrami_eigenvalues(grid, 1, "neumann", count=2)
    assert vals[0] == pytest.approx(2.0, abs=1e-8)


def test_spectral_convergence_of_eigenvalues():
    errs = []
    for n in (16, 32, 64):
        grid = cap(2 * np.pi / 3, n)
        v = beltrami_eigenvalues(grid, 0, "dirichlet", count=1)[0]
        errs.append(v)
    # n=32 and n=64 agree far better than n=16 and n=32
    e1 = abs(errs[1] - errs[2])
    e0 = abs(errs[0] - errs[1])
    assert e1 < 1e-10 or e1 < 1e-3 * e0


def test_beltrami_symmetry_in_weighted_inner_product():
    # <(-delta) u, v> = <grad u, grad v> for profiles vanishing at the edge
    grid = cap(2 * np.pi / 3, 36)
    m = 1
    op = beltrami_matrix(grid, m, "dirichlet")
    rng = np.random.default_rng(11)
    w = (1.0 - grid.x**2) ** abs(m) * grid.wx
    for _ in range(3):
        u = np.polynomial.chebyshev.chebvander(grid.x, 7) @ rng.standard_normal(8)
        v = np.polynomial.chebyshev.chebvander(grid.x, 7) @ rng.standard_normal(8)
        u = u * (grid.x - grid.x0)
        v = v * (grid.x - grid.x0)
        lhs = np.sum(w * (op.mat @ u) * v)
        rhs = np.sum(w * u * (op.mat @ v))
        assert lhs == pytest.approx(rhs, abs=1e-8 * (1 + abs(lhs)))


# ---------------------------------------------------------------------------
# gradient / divergence consistency
# ---------------------------------------------------------------------------

def test_gradient_of_constant_is_zero():
    grid = cap(np.pi / 2, 24)
    g = tangential_gradient(grid, 0)
    out = g.apply(AngularField(grid, 0, "scalar", np.ones(grid.n)))
    assert np.max(np.abs(out.profiles)) < 1e-12


def test_gradient_of_cos_theta():
    # tangential part of grad(z/r): z-track profile is sin^2(theta) = 1 - x^2
    grid = cap(np.pi / 2, 24)
    g = tangential_gradient(grid, 0)
    out = g.apply(AngularField(grid, 0, "scalar", grid.x.astype(complex)))
    assert np.max(np.abs(out.profiles[2] - (1.0 - grid.x**2))) < 1e-11
    # and it is tangent: omega . grad = 0
    rad = radial_component(grid, out)
    assert np.max(np.abs(rad.profiles)) < 1e-11


def test_divergence_of_constant_ez():
    # div(e_z) = 0 and omega.e_z = cos(theta); at kappa = 0 the kappa-free
    # part must therefore vanish
    grid = cap(np.pi / 2, 24)
    div = surface_divergence(grid, 0)
    ez = AngularField(grid, 0, "vector3",
                      np.stack([np.zeros(grid.n), np.zeros(grid.n), np.ones(grid.n)]))
    out = div.apply(ez)
    assert np.max(np.abs(out.profiles)) < 1e-11
    rad = radial_component(grid, ez)
    assert np.allclose(rad.profiles, grid.x)


def test_divergence_of_radial_field():
    # div(r omega) = 3 with omega.omega = 1, so the kappa-free part is 2
    grid = cap(2 * np.pi / 3, 24)
    div = surface_divergence(grid, 0)
    omega = AngularField(grid, 0, "vector3",
                         np.stack([np.ones(grid.n), np.ones(grid.n), grid.x.astype(complex)]))
    out = div.apply(omega)
    assert np.max(np.abs(out.profiles - 2.0)) < 1e-11
    rad = radial_component(grid, omega)
    assert np.max(np.abs(rad.profiles - 1.0)) < 1e-12


def test_gradient_divergence_adjointness():
    # <grad_w P, V> = -<P, div_w V - 2 omega.V> for V vanishing at the edge
    grid = cap(2 * np.pi / 3, 40)
    rng = np.random.default_rng(5)
    m = 1
    g = tangential_gradient(grid, m)
    dv = surface_divergence(grid, m)
    P = AngularField(grid, -m, "scalar",
                     np.polynomial.chebyshev.chebvander(grid.x, 6) @ rng.standard_normal(7))
    cut = grid.x - grid.x0
    tracks = np.stack([
        cut * (np.polynomial.chebyshev.chebvander(grid.x, 6) @ rng.standard_normal(7))
        for _ in range(3)
    ])
    V = AngularField(grid, m, "vector3", tracks)
    gradP = tangential_gradient(grid, -m).apply(P)
    # vector pairing: u.v = (u+ v- + u- v+)/2 + uz vz, modes sum to zero
    x = grid.x
    s2 = 1.0 - x * x
    wplus = s2 ** ((abs(-m + 1) + abs(m - 1)) // 2)
    wminus = s2 ** ((abs(-m - 1) + abs(m + 1)) // 2)
    wz = s2 ** abs(m)
    lhs = 2 * np.pi * np.sum(grid.wx * (
        0.5 * wplus * gradP.profiles[0] * V.profiles[1]
        + 0.5 * wminus * gradP.profiles[1] * V.profiles[0]
        + wz * gradP.profiles[2] * V.profiles[2]))
    divV = dv.apply(V)
    radV = radial_component(grid, V)
    rhs_field = AngularField(grid, m, "scalar", divV.profiles - 2.0 * radV.profiles)
    rhs = -scalar_pairing(grid, P, rhs_field)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-8)


def test_divergence_of_gradient_is_beltrami():
    # composing grad (kappa=0) with div (kappa=-1) on the profile level gives
    # the factored Beltrami operator; collocation matrices realize this on
    # polynomials resolved by the grid, so compare actions
    grid = cap(0.7 * np.pi, 32)
    from conestokes.angular import divergence_mats

    rng = np.random.default_rng(7)
    for m in (0, 1, 2):
        gmats = tangential_gradient(grid, m).mats
        amats, bmats = divergence_mats(grid, m)
        comp = sum((-1.0 * a + b) @ gm for a, b, gm in zip(amats, bmats, gmats))
        La = gegenbauer_operator(grid, abs(m))
        G = np.polynomial.chebyshev.chebvander(grid.x, 9) @ rng.standard_normal(10)
        err = np.max(np.abs(comp @ G - La @ G))
        assert err < 1e-9 * (1 + np.max(np.abs(La @ G)))


def test_mode_bookkeeping_closure():
    grid = cap(np.pi / 2, 16)
    m = 2
    f = AngularField(grid, m, "scalar", np.ones(grid.n, dtype=complex))
    v = tangential_gradient(grid, m).apply(f)
    assert v.mode == m
    assert track_modes(v.mode) == (m + 1, m - 1, m)
    back = surface_divergence(grid, m).apply(v)
    assert back.mode == m


def test_pole_regularity_of_samples():
    # a mode-2 track must vanish like theta^2 at the pole
    grid = cap(np.pi / 2, 48)
    f = AngularField(grid, 2, "scalar", np.ones(grid.n, dtype=complex))
    s = f.samples()
    th = grid.theta[1:4]
    ratio = np.abs(s[1:4]) / th**2
    assert np.max(np.abs(ratio - ratio[0])) < 1e-2
