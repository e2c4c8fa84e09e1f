import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stokesmoments.errors import InvalidInputError, SingularDiagonalError
from stokesmoments.kernel import (
    KernelConstants, eval_G, eval_gradient_G, eval_kernel_block, eval_laplacian_block,
)

K = KernelConstants.for_radius(1.0)
coord = st.floats(-1.0, 1.0)
angle = st.floats(0, 2 * np.pi)
H = 1e-4


def fd_laplacian(f, x, h=H):
    return (f(x + h) + f(x - h) + f(x + 1j * h) + f(x - 1j * h) - 4 * f(x)) / h**2


def test_constants():
    assert K.kappa0 == 3.0 and K.kappa1 == 2.0
    assert K.is_elliptic_for(1.0)
    assert not KernelConstants(2.0, 2.0).is_elliptic_for(1.0)
    with pytest.raises(InvalidInputError):
        KernelConstants(0.0, 1.0)
    with pytest.raises(InvalidInputError):
        KernelConstants(1.0, float("inf"))


def test_G_at_kappa0_and_origin():
    assert eval_G(K.kappa0, 0.0, K) == pytest.approx(K.kappa1 / (8 * np.pi))
    assert eval_G(0.3, 0.3, K) == pytest.approx(K.kappa1 / (8 * np.pi))


@settings(max_examples=40, deadline=None)
@given(x1=coord, x2=coord, y1=coord, y2=coord)
def test_laplacian_closed_form_and_biharmonic(x1, x2, y1, y2):
    x, y = complex(x1, x2), complex(y1, y2)
    assume(abs(x - y) > 0.1)
    lap, _ = eval_laplacian_block(x, y, 1.0, K)
    assert fd_laplacian(lambda p: eval_G(p, y, K), x) == pytest.approx(lap, abs=1e-6)
    # Lap G is harmonic away from y, so G is biharmonic
    lap_of_lap = fd_laplacian(lambda p: eval_laplacian_block(p, y, 1.0, K)[0], x, h=1e-3)
    # truncation error of the stencil grows like h^2 / r^4
    assert abs(lap_of_lap) < 1e-5 / abs(x - y) ** 4


@settings(max_examples=40, deadline=None)
@given(x1=coord, x2=coord, y1=coord, y2=coord, ax=angle, ay=angle)
def test_normal_derivatives_match_finite_differences(x1, x2, y1, y2, ax, ay):
    x, y = complex(x1, x2), complex(y1, y2)
    assume(abs(x - y) > 0.1)
    nx, ny = np.exp(1j * ax), np.exp(1j * ay)
    g, dny, dnx, dnxny = eval_kernel_block(x, nx, y, ny, K)
    assert g == pytest.approx(eval_G(x, y, K), abs=1e-15)
    c = lambda f, v, n: (f(v + H * n) - f(v - H * n)) / (2 * H)
    assert dny == pytest.approx(c(lambda q: eval_G(x, q, K), y, ny), abs=1e-8)
    assert dnx == pytest.approx(c(lambda p: eval_G(p, y, K), x, nx), abs=1e-8)
    mixed = c(lambda p: eval_kernel_block(p, nx, y, ny, K)[1], x, nx)
    assert dnxny == pytest.approx(mixed, abs=1e-7)
    grad = eval_gradient_G(x, y, K)
    assert (np.conj(grad) * nx).real == pytest.approx(dnx, abs=1e-14)
    _, lap_dny = eval_laplacian_block(x, y, ny, K)
    assert lap_dny == pytest.approx(fd_laplacian(lambda p: eval_kernel_block(p, 1, y, ny, K)[1], x), abs=1e-5)


def test_singular_diagonal_refused():
    with pytest.raises(SingularDiagonalError):
        eval_kernel_block(np.array([0.1, 0.2]), 1.0, np.array([0.3, 0.2]), 1.0, K)
    with pytest.raises(SingularDiagonalError):
        eval_laplacian_block(0.5j, 0.5j, 1.0, K)


def test_broadcasting():
    x = np.linspace(0, 1, 5)[:, None]
    y = 2j + np.linspace(0, 1, 3)[None, :]
    g, dny, dnx, dnxny = eval_kernel_block(x, 1.0, y, 1j, K)
    assert g.shape == dny.shape == dnx.shape == dnxny.shape == (5, 3)
