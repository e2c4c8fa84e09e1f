import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokesmoments.bergman import (
    DEFAULT_LEVELS, bergman_coeffs, theta_contours, theta_eval, theta_grid, write_contours_csv,
)
from stokesmoments.errors import InvalidInputError
from stokesmoments.geometry import ParamCurve, circle, discretize
from stokesmoments.grid import GridSpec
from stokesmoments.moments import MomentWarning, oracle_moments

ELLIPSE = ParamCurve("ellipse", 0.1 - 0.05j, {"a": 0.3, "b": 0.15})


def ellipse_quadrature(curve, order=40):
    """Gauss-Legendre nodes and weights on the ellipse in polar coordinates."""
    a, b, c = curve.params["a"], curve.params["b"], curve.center
    x, w = np.polynomial.legendre.leggauss(order)
    rho, wr = 0.5 * (x + 1), 0.5 * w
    phi = 2 * np.pi * np.arange(2 * order) / (2 * order)
    R, P = np.meshgrid(rho, phi, indexing="ij")
    z = c + R * (a * np.cos(P) + 1j * b * np.sin(P))
    weights = (wr[:, None] * a * b * R) * (2 * np.pi / (2 * order))
    return z.ravel(), weights.ravel()


def disk_theta(z, c, r, n):
    j = np.arange(n + 1)
    s = np.abs(z - c) ** 2 / r**2
    return 1 / np.sqrt(np.sum((j + 1) * s ** j / r**2))


def test_single_entry():
    basis = bergman_coeffs(np.array([[np.pi]]))
    assert basis.degree == 0
    assert basis.coeffs[0, 0] == pytest.approx(1 / np.sqrt(np.pi))
    assert theta_eval(basis, 0.3 + 0.1j) == pytest.approx(1.0)


def test_unit_disk_basis_is_monomial():
    basis = bergman_coeffs(np.diag(np.pi / np.arange(1, 7)))
    np.testing.assert_allclose(np.abs(basis.coeffs), np.diag(np.sqrt(np.arange(1, 7) / np.pi)), atol=1e-12)


def test_factor_reproduces_matrix():
    mom = oracle_moments([ELLIPSE], 6, 6).matrix
    basis = bergman_coeffs(mom)
    L = basis.factor
    np.testing.assert_allclose(L.conj().T @ L, mom, atol=1e-10 * np.abs(mom).max())
    np.testing.assert_allclose(np.tril(L, -1), 0)


def test_orthonormal_on_ellipse():
    basis = bergman_coeffs(oracle_moments([ELLIPSE], 6, 6))
    z, w = ellipse_quadrature(ELLIPSE)
    P = basis.evaluate(z)
    gram = (np.conj(P) * w[:, None]).T @ P
    np.testing.assert_allclose(gram, np.eye(basis.degree + 1), atol=1e-6)


@pytest.mark.parametrize("c,r", [(0, 0.5), (0.2 + 0.2j, 0.3)])
def test_disk_theta_closed_form(c, r):
    basis = bergman_coeffs(oracle_moments([circle(c, r)], 8, 8))
    z = c + np.array([0, 0.1, 0.2j, -0.25]) * r
    expected = [disk_theta(p, c, r, 8) for p in z]
    np.testing.assert_allclose(theta_eval(basis, z), expected, rtol=1e-8)
    assert theta_eval(basis, c) == pytest.approx(r, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(0.0, 0.99), phi=st.floats(0, 2 * np.pi), which=st.integers(0, 1))
def test_interior_distance_bound(rho, phi, which):
    # the Bergman kernel of O is dominated by that of any inscribed disk
    curve = [circle(0.1, 0.4), ELLIPSE][which]
    basis = bergman_coeffs(oracle_moments([curve], 7, 7))
    if which == 0:
        z = 0.1 + 0.4 * rho * np.exp(1j * phi)
    else:
        z = ELLIPSE.center + rho * (0.3 * np.cos(phi) + 0.15j * np.sin(phi))
    boundary = discretize(curve, 1024).nodes
    dist = np.abs(boundary - z).min()
    assert dist <= theta_eval(basis, z) * (1 + 1e-9) + 1e-6


def test_theta_decreases_outside_the_hull():
    basis = bergman_coeffs(oracle_moments([ELLIPSE], 7, 7))
    for phi in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        t = np.linspace(0.5, 3.0, 40)
        vals = theta_eval(basis, ELLIPSE.center + t * np.exp(1j * phi))
        assert np.all(np.diff(vals) < 0)


def test_boundary_scaling_band():
    ratios = []
    for n in range(5, 21):
        basis = bergman_coeffs(np.diag(np.pi / np.arange(1, n + 2)))
        vals = theta_eval(basis, np.exp(1j * np.linspace(0, 2 * np.pi, 16)))
        ratios.extend(n * vals)
    assert max(ratios) / min(ratios) < 3


def test_rank_deficient_matrix_drops_degree():
    # a single point mass has a rank-one moment matrix
    z0 = 0.3 + 0.1j
    v = z0 ** np.arange(4)
    with pytest.warns(MomentWarning, match="rank deficient"):
        basis = bergman_coeffs(np.outer(np.conj(v), v))
    assert basis.degree == 0


def test_negative_eigenvalue_is_clamped():
    m = np.diag([1.0, 0.5, -1e-3]).astype(complex)
    with pytest.warns(MomentWarning):
        basis = bergman_coeffs(m)
    assert basis.degree == 1
    assert basis.diagnostics["clamped_mass"] == pytest.approx(1e-3)


@pytest.mark.parametrize("bad", [np.zeros((0, 0)), np.ones((2, 3)), np.array([[np.nan]]), np.zeros((2, 2))])
def test_invalid_matrices(bad):
    with pytest.raises(InvalidInputError):
        bergman_coeffs(bad)


def test_disk_contours_are_concentric_circles():
    c, r = 0.2 + 0.1j, 0.3
    basis = bergman_coeffs(oracle_moments([circle(c, r)], 8, 8))
    spec = GridSpec.square(256)
    contours = theta_contours(basis, spec, DEFAULT_LEVELS)
    assert len(contours) == len(DEFAULT_LEVELS)
    for con in contours:
        assert con.closed
        assert con.level == pytest.approx(con.lam / 8)
        radii = np.abs(con.points - c)
        assert radii.max() - radii.min() < 2 * spec.hx
    assert theta_contours(basis, spec, [1e6]) == []


def test_theta_grid_and_csv(tmp_path):
    basis = bergman_coeffs(oracle_moments([circle(0, 0.4)], 5, 5))
    spec = GridSpec.square(64)
    grid = theta_grid(basis, spec)
    assert grid.values.shape == (64, 64)
    assert grid.values[32, 32] == pytest.approx(theta_eval(basis, spec.points()[32, 32]))
    path = tmp_path / "c.csv"
    write_contours_csv(theta_contours(basis, spec, [0.4]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "level,lambda,polyline,vertex,x,y"
    assert len(lines) > 10
