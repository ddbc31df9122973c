import numpy as np
import pytest

from conestokes.geometry import (
    ConeDomain,
    CutoffZeta,
    QuadratureError,
    RadialGrid,
    eval_zeta_s,
    interp_matrix,
    make_circular_cap,
    radial_integral,
)


def test_cone_domain_validates_angle():
    ConeDomain(np.pi / 2)
    with pytest.raises(ValueError):
        ConeDomain(0.0)
    with pytest.raises(ValueError):
        ConeDomain(np.pi)


def test_cap_nodes_contain_endpoint():
    grid = make_circular_cap(np.pi / 2, 32)
    assert grid.theta.shape == (32,)
    assert grid.theta[-1] == pytest.approx(np.pi / 2, abs=1e-15)
    assert grid.theta[0] == pytest.approx(0.0, abs=1e-15)


def test_cap_nodes_strictly_increasing():
    grid = make_circular_cap(np.pi / 3, 8)
    assert np.all(np.diff(grid.theta) > 0)


@pytest.mark.parametrize("n", [16, 24, 64])
def test_cap_quadrature_integrates_sin_theta(n):
    # integral of sin(theta) over [0, pi/2] is exactly 1
    grid = make_circular_cap(np.pi / 2, n)
    assert np.sum(grid.wx) == pytest.approx(1.0, abs=1e-12)


def test_cap_quadrature_polynomial_exactness():
    grid = make_circular_cap(2 * np.pi / 3, 20)
    for k in range(0, 18):
        exact = (1.0 - grid.x0 ** (k + 1)) / (k + 1)
        assert np.sum(grid.wx * grid.x**k) == pytest.approx(exact, abs=1e-13)


def test_diff_matrix_on_polynomials():
    grid = make_circular_cap(0.9 * np.pi, 24)
    p = grid.x**5 - 2 * grid.x**2
    dp = 5 * grid.x**4 - 4 * grid.x
    assert np.max(np.abs(grid.dmat @ p - dp)) < 1e-10


def test_interp_matrix_reproduces_polynomials():
    grid = make_circular_cap(np.pi / 2, 16)
    xt = np.linspace(grid.x0, 1.0, 37)
    M = interp_matrix(grid.x, xt)
    f = grid.x**7 - 3 * grid.x**3 + 1
    assert np.max(np.abs(M @ f - (xt**7 - 3 * xt**3 + 1))) < 1e-11


# ---------------------------------------------------------------------------
# cutoff functions
# ---------------------------------------------------------------------------

def test_zeta_plateau_and_support():
    zeta = CutoffZeta()
    assert eval_zeta_s(zeta, 4.0, 0.3)[0] == pytest.approx(1.0)   # arg 0.36 < 1/2
    assert eval_zeta_s(zeta, 1.0, 2.0)[0] == pytest.approx(0.0)   # arg 4 > 1
    v = eval_zeta_s(zeta, 1.0, 0.85)[0]
    assert 0.0 < v < 1.0


def test_zeta_is_c2_across_knots():
    # C^2 scan: the second derivative obtained by central-differencing the
    # first derivative is continuous through both knots and matches the
    # analytic value to 1e-6
    zeta = CutoffZeta()
    h = 1e-6
    r = np.linspace(0.6, 1.1, 501)  # crosses 1/sqrt(2) and 1 for |s| = 1
    knots = [1.0 / np.sqrt(2.0), 1.0]
    keep = np.all([np.abs(r - k) > 5 * h for k in knots], axis=0)
    r = r[keep]
    d1p = eval_zeta_s(zeta, 1.0, r + h)[1]
    d1m = eval_zeta_s(zeta, 1.0, r - h)[1]
    d2_fd = (d1p - d1m) / (2 * h)
    d2 = eval_zeta_s(zeta, 1.0, r)[2]
    assert np.max(np.abs(d2_fd - d2)) < 1e-6
    # exact one-sided limits at the knots: second derivative tends to zero
    for knot in (1.0 / np.sqrt(2.0), 1.0):
        for side in (-1e-9, 1e-9):
            assert abs(eval_zeta_s(zeta, 1.0, knot + side)[2]) < 1e-5


def test_zeta_support_and_plateau_sets():
    zeta = CutoffZeta()
    s = 3.7
    r = np.linspace(1e-3, 2.0, 2000)
    v = eval_zeta_s(zeta, s, r)[0]
    arg = s * r * r
    assert np.all(v[arg <= 0.5] == 1.0)
    assert np.all(v[arg >= 1.0] == 0.0)
    assert np.all((v[(arg > 0.5) & (arg < 1.0)] > 0) & (v[(arg > 0.5) & (arg < 1.0)] < 1))


def test_zeta_derivative_integrates_to_minus_one():
    zeta = CutoffZeta()
    grid = RadialGrid(0.5, 1.0, n_panels=4)
    val = radial_integral(grid, lambda r: zeta.eval(r)[1])
    assert val == pytest.approx(-1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# radial quadrature
# ---------------------------------------------------------------------------

def test_radial_integral_polynomial():
    grid = RadialGrid(0.0, 1.0, n_panels=2)
    assert radial_integral(grid, lambda r: r**2) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_radial_integral_endpoint_singular():
    grid = RadialGrid(0.0, 1.0, n_panels=16, grading=0.15)
    val = radial_integral(grid, lambda r: r ** (-0.4))
    assert val == pytest.approx(1.0 / 0.6, rel=1e-10)


def test_radial_integral_reports_nonconvergence():
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(4096)

    def rough(r):
        idx = np.minimum((np.asarray(r) * 4096).astype(int), 4095)
        return noise[idx]

    grid = RadialGrid(0.0, 1.0, n_panels=2, order=2)
    with pytest.raises(QuadratureError):
        radial_integral(grid, rough, rel_tol=1e-14, max_refine=3)


def test_radial_scaling_substitution():
    # integral of f(c r) over (0, inf) equals integral of f(r) / c
    c = np.sqrt(7.3)
    f = lambda r: r**2 * np.exp(-(r**2))
    g1 = RadialGrid(1e-8, 20.0, n_panels=32, log_panels=True)
    base = radial_integral(g1, f)
    g2 = RadialGrid(1e-8 / c, 20.0 / c, n_panels=32, log_panels=True)
    scaled = radial_integral(g2, lambda r: f(c * r))
    assert scaled == pytest.approx(base / c, rel=1e-10)
