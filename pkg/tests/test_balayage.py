import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image
from skimage import measure

from stokesmoments.balayage import (
    BalayageWarning, balayage, complementarity_residual, potential_U, select_masses,
    solve_obstacle_problem, write_contours_csv, write_pgm,
)
from stokesmoments.errors import ConvergenceError, InvalidInputError
from stokesmoments.grid import GridSpec
from stokesmoments.moments import oracle_moments
from stokesmoments.prony import prony_solve

from conftest import CROSS

C = np.pi * 0.09


@pytest.fixture(scope="module")
def disk_256():
    return balayage([0.3], [C], GridSpec.square(256))


def symmetric_difference(ind, center, radius):
    spec = ind.field.spec
    disk = np.abs(spec.points() - center) < radius
    return np.logical_xor(disk, ind.field.values > 0.5).sum() * spec.hx * spec.hy


def test_potential_vanishes_on_unit_circle_around_node():
    spec = GridSpec.square(201)
    u = potential_U([0.0], [2.0], spec, domain_radius=1.0)
    pts = spec.points()
    ring = np.isclose(np.abs(pts), 1.0, atol=1e-12)
    assert ring.any()
    np.testing.assert_allclose(u.values[ring], 0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.complex_numbers(max_magnitude=0.6), b=st.complex_numbers(max_magnitude=0.6),
       ca=st.floats(0.01, 1), cb=st.floats(0.01, 1))
def test_potential_superposition(a, b, ca, cb):
    spec = GridSpec.square(33)
    both = potential_U([a, b], [ca, cb], spec).values
    single = potential_U([a], [ca], spec).values + potential_U([b], [cb], spec).values
    np.testing.assert_allclose(both, single, atol=1e-12)


def test_potential_far_field():
    spec = GridSpec(5, 5, 40, 50, 40, 50)
    nodes, weights = [0.1, -0.2j], [0.5, 0.3]
    u = potential_U(nodes, weights, spec, domain_radius=1.0).values
    far = -0.8 / (2 * np.pi) * np.log(np.abs(spec.points()))
    np.testing.assert_allclose(u, far, atol=1e-2)


def test_potential_is_clamped_near_nodes():
    spec = GridSpec.square(65)
    u = potential_U([0.0], [1.0], spec).values
    assert np.all(np.isfinite(u))
    assert u.max() == pytest.approx(-np.log(spec.hx) / (2 * np.pi))


def test_node_outside_domain():
    with pytest.raises(InvalidInputError):
        potential_U([1.2], [1.0], GridSpec.square(17))
    with pytest.raises(InvalidInputError):
        potential_U([0.1, 0.2], [1.0], GridSpec.square(17))


def test_select_masses():
    nodes, weights = select_masses([0.1, 0.2, 0.3, 0.4], [1.0, -0.5, 1e-5, 0.5])
    np.testing.assert_array_equal(nodes, [0.1, 0.4])
    np.testing.assert_array_equal(weights, [1.0, 0.5])


def test_disk_law(disk_256):
    assert symmetric_difference(disk_256, 0.3, 0.3) < 0.02 * C
    assert disk_256.area == pytest.approx(C, rel=0.02)
    assert disk_256.diagnostics["laplacian_mass"] == pytest.approx(C, rel=1e-3)
    assert len(disk_256.contours) == 1


def test_centroid_is_first_moment(disk_256):
    h = disk_256.field.spec.hx
    assert abs(disk_256.centroid - 0.3) < 2 * h


def test_complementarity(disk_256):
    assert disk_256.diagnostics["complementarity"] < 10 * 1e-9


def test_monotone_refinement():
    sd = [symmetric_difference(balayage([0.3], [C], GridSpec.square(n)), 0.3, 0.3) for n in (256, 512)]
    assert sd[1] <= sd[0] / 2


def test_mass_at_fine_grid():
    ind = balayage([0.3], [C], GridSpec.square(512))
    assert ind.area == pytest.approx(C, rel=0.01)


def test_two_separated_nodes_give_two_disks():
    c = np.pi * 0.04
    ind = balayage([0.5, -0.5], [c, c], GridSpec.square(256))
    labels, count = measure.label(ind.field.values > 0.5, return_num=True)
    assert count == 2
    h2 = ind.field.spec.hx ** 2
    for k in (1, 2):
        assert (labels == k).sum() * h2 == pytest.approx(c, rel=0.02)


def test_cross_model_is_one_component():
    sol = prony_solve(oracle_moments([CROSS], 0, 9), 5)
    ind = balayage(sol.nodes, sol.weights, GridSpec.square(256))
    _, count = measure.label(ind.field.values > 0.5, return_num=True)
    assert count == 1
    assert ind.area == pytest.approx(sol.weights.real.sum(), rel=0.02)


def test_no_mass_gives_empty_indicator():
    ind = balayage([0.1], [0.0], GridSpec.square(64))
    assert ind.area == 0 and ind.contours == []
    ind = balayage([], [], GridSpec.square(64))
    assert ind.area == 0


def test_body_reaching_boundary_warns():
    with pytest.warns(BalayageWarning):
        balayage([0.7], [C], GridSpec.square(128))


def test_non_convergence():
    u = potential_U([0.0], [C], GridSpec.square(64))
    with pytest.raises(ConvergenceError) as info:
        solve_obstacle_problem(u, max_sweeps=3)
    assert info.value.residual > 0
    with pytest.raises(InvalidInputError):
        solve_obstacle_problem(u, omega=2.5)


def test_obstacle_constraint_and_boundary_values():
    u = potential_U([0.2], [0.1], GridSpec.square(64))
    sol = solve_obstacle_problem(u)
    v = sol.field.values
    assert np.all(v <= u.values + 1e-15)
    outside = ~u.mask
    np.testing.assert_array_equal(v[outside], u.values[outside])
    assert complementarity_residual(sol.field, u, [0.2]) < 1e-8


def test_outputs(disk_256, tmp_path):
    pgm = tmp_path / "i.pgm"
    write_pgm(disk_256, pgm)
    assert pgm.read_bytes()[:2] == b"P5"
    img = np.asarray(Image.open(pgm))
    assert img.shape == (256, 256)
    np.testing.assert_array_equal(img[::-1] > 0, disk_256.field.values > 0.5)
    csv_path = tmp_path / "c.csv"
    write_contours_csv(disk_256.contours, csv_path)
    assert csv_path.read_text().splitlines()[0] == "polyline,vertex,x,y"
