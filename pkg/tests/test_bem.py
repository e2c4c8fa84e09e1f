import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokesmoments.bem import (
    BlockSystem, BoundaryField, GramFactorization, MeasurementSet, apply_noise, assemble_trace,
    biharmonic_probe, eval_potential, forward_measurements, kress_weights, laplacian_jump, pair,
    relative_l2, solve_block_system,
)
from stokesmoments.errors import AccuracyError, InvalidInputError
from stokesmoments.geometry import circle, discretize, unit_disk_scenario
from stokesmoments.kernel import KernelConstants

from conftest import CROSS

K = KernelConstants.for_radius(1.0)


@pytest.mark.parametrize("n", [16, 64])
def test_kress_weights_on_fourier_modes(n):
    # ln(4 sin^2(x/2)) = -2 sum_k cos(k x) / k
    R = kress_weights(n)
    t = 2 * np.pi * np.arange(n) / n
    np.testing.assert_allclose(R @ np.ones(n), 0, atol=1e-12)
    for k in range(1, n // 2):
        np.testing.assert_allclose(R @ np.cos(k * t), -2 * np.pi / k * np.cos(k * t), atol=1e-12)
        np.testing.assert_allclose(R @ np.sin(k * t), -2 * np.pi / k * np.sin(k * t), atol=1e-12)


def test_gram_is_symmetric_on_smooth_curve():
    mesh = discretize(CROSS, 128)
    gram = assemble_trace(mesh, mesh, K).gram()
    assert np.abs(gram - gram.T).max() / np.abs(gram).max() < 1e-10


def test_cross_operator_is_not_a_gram():
    a, b = discretize(circle(0, 1), 32), discretize(circle(0.1, 0.3), 32)
    with pytest.raises(InvalidInputError):
        assemble_trace(a, b, K).gram()


def test_pairing_is_bilinear():
    mesh = discretize(circle(0, 1), 32)
    rng = np.random.default_rng(0)
    q = BoundaryField.density(mesh, rng.standard_normal(32), rng.standard_normal(32))
    p = BoundaryField.trace(mesh, rng.standard_normal(32), rng.standard_normal(32))
    expected = np.sum(mesh.quad_weights * (q.normal_part * p.dirichlet_part + q.dirichlet_part * p.normal_part))
    assert pair(q, p) == pytest.approx(expected)
    with pytest.raises(InvalidInputError):
        pair(p, q)


def test_zero_density_gives_zero_potential():
    mesh = discretize(circle(0, 1), 64)
    v, lap = eval_potential(BoundaryField.density(mesh, 0, 0), 0.2j, K)
    assert v == 0 and lap == 0


@pytest.mark.parametrize("fn,lap_fn", [
    (lambda z: (z**2).real, lambda z: 0.0),
    (lambda z: np.abs(z) ** 2, lambda z: 4.0),
    (lambda z: (np.conj(z) * z**2).real, lambda z: 8 * z.real),
])
def test_potential_reproduces_biharmonic_functions(fn, lap_fn):
    mesh = discretize(circle(0, 1), 256)
    z, nrm = mesh.nodes, mesh.normals
    h = 1e-6
    dn = (fn(z + h * nrm) - fn(z - h * nrm)) / (2 * h)
    gram = GramFactorization(mesh, K)
    dens = BoundaryField.from_stack(mesh, gram.solve(np.concatenate([fn(z), dn])), "density")
    x = 0.3 + 0.1j
    v, lap = eval_potential(dens, x, K)
    assert v.real == pytest.approx(fn(x), abs=1e-6)
    assert lap.real == pytest.approx(lap_fn(x), abs=1e-5)


def test_evaluation_too_close_raises():
    mesh = discretize(circle(0, 1), 64)
    dens = BoundaryField.density(mesh, 1, 0)
    with pytest.raises(AccuracyError):
        eval_potential(dens, mesh.nodes[0] * (1 - 0.5 * mesh.spacing), K)


@pytest.mark.parametrize("which", [0, 1])
def test_block_solutions_match_uniqueness(which):
    # unit Dirichlet data on one curve and zero on the other; inside the
    # obstacle the potential solves a Dirichlet problem with constant data
    meshes = [discretize(circle(0, 1), 256), discretize(circle(0.2 + 0.1j, 0.3), 128)]
    traces = [BoundaryField.trace(m, 1.0 if j == which else 0.0, 0.0) for j, m in enumerate(meshes)]
    dens = solve_block_system(meshes, traces, K)
    v, lap = eval_potential(dens, 0.2 + 0.1j, K)
    assert v.real == pytest.approx(1.0 if which == 1 else 0.0, abs=1e-9)
    assert abs(lap) < 1e-8


def test_block_system_requires_one_trace_per_mesh():
    meshes = [discretize(circle(0, 1), 32)]
    with pytest.raises(InvalidInputError):
        solve_block_system(meshes, [], K)


def test_block_condition_is_reported():
    system = BlockSystem([discretize(circle(0, 1), 64), discretize(circle(0.1, 0.3), 64)], K)
    assert np.isfinite(system.condition) and system.condition > 1


def test_laplacian_jump_recovers_qd():
    mesh = discretize(circle(0.1, 0.5), 256)
    qd = np.cos(3 * mesh.theta) + 0.5 * np.sin(mesh.theta)
    dens = BoundaryField.density(mesh, np.zeros(256), qd)
    jump = laplacian_jump(dens, K)
    w = mesh.quad_weights
    err = np.sqrt(np.sum(w * np.abs(jump - qd) ** 2) / np.sum(w * qd**2))
    assert err < 1e-3


@settings(max_examples=30, deadline=None)
@given(index=st.integers(1, 9), r=st.floats(0.2, 1.0), a=st.floats(0, 2 * np.pi), b=st.floats(0, 2 * np.pi))
def test_probe_normal_derivative(index, r, a, b):
    z, nrm = r * np.exp(1j * a), np.exp(1j * b)
    f, dn = biharmonic_probe(index, 5, z, nrm)
    h = 1e-6
    fd = (biharmonic_probe(index, 5, z + h * nrm, nrm)[0] - biharmonic_probe(index, 5, z - h * nrm, nrm)[0]) / (2 * h)
    assert dn == pytest.approx(fd, abs=1e-7)


def test_probe_laplacian_is_lower_monomial():
    # Lap (conj(z) z^j / (4 j)) = z^(j - 1)
    z, h = 0.3 + 0.2j, 1e-4
    for j in range(1, 5):
        f = lambda p: biharmonic_probe(5 + j, 5, p, 1)[0]
        lap = (f(z + h) + f(z - h) + f(z + 1j * h) + f(z - 1j * h) - 4 * f(z)) / h**2
        assert lap == pytest.approx(z ** (j - 1), abs=1e-6)


def test_forward_counts_and_flux(disk_ms):
    assert disk_ms.count == 15
    assert disk_ms.q_normal.shape == (15, 256)
    assert disk_ms.provenance["flux_residual"] < 1e-10
    w = disk_ms.mesh.quad_weights
    assert np.abs(disk_ms.q_normal @ w).max() < 1e-10 * np.abs(disk_ms.q_normal).max()


def test_forward_without_obstacle_inverts_outer_operator(empty_ms):
    gram = GramFactorization(empty_ms.mesh, empty_ms.constants)
    expected = gram.solve(empty_ms.trace_stack())
    np.testing.assert_allclose(empty_ms.density_stack(), expected, atol=1e-9 * np.abs(expected).max())


def test_forward_mesh_convergence():
    obstacle = circle(0.2 + 0.2j, 0.3)
    coarse = forward_measurements(unit_disk_scenario([obstacle], 128, [128]), 4)
    fine = forward_measurements(unit_disk_scenario([obstacle], 256, [256]), 4)
    a, b = coarse.density_stack(), fine.density_stack()
    b = np.concatenate([b[:, :256:2], b[:, 256::2]], axis=1)  # shared nodes
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-6


def test_forward_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        forward_measurements(unit_disk_scenario([]), 2)


def test_measurement_round_trip(small_ms, tmp_path):
    path = tmp_path / "ms.json"
    small_ms.save(path)
    back = MeasurementSet.load(path)
    assert back.m == small_ms.m
    np.testing.assert_array_equal(back.density_stack(), small_ms.density_stack())
    np.testing.assert_array_equal(back.trace_stack(), small_ms.trace_stack())
    assert back.constants == small_ms.constants


def test_noise_statistics(small_ms):
    assert apply_noise(small_ms, 0.0, 1) is small_ms
    a, b = apply_noise(small_ms, 0.01, 7), apply_noise(small_ms, 0.01, 7)
    np.testing.assert_array_equal(a.density_stack(), b.density_stack())
    clean = small_ms.density_stack()
    norms = relative_l2(small_ms.mesh, clean)
    rel = []
    for seed in range(50):
        noisy = apply_noise(small_ms, 0.01, seed).density_stack()
        rel.append(relative_l2(small_ms.mesh, noisy - clean) / norms)
    mean = np.mean(rel)
    assert 0.009 < mean < 0.011
    assert a.provenance["seed"] == 7 and a.provenance["noise_level"] == 0.01
    with pytest.raises(InvalidInputError):
        apply_noise(small_ms, -0.1, 0)
