"""Bergman polynomials of the obstacle set and the Theta level-set indicator.

With ``M[j, k] = int conj(z)^j z^k dm`` and ``M = L^H L`` (``L`` upper
triangular), the polynomials ``P_j(z) = sum_i C[i, j] z^i`` with
``C = L^-1`` are orthonormal in ``L^2`` of the obstacles.  ``Theta_n`` is
``(pi sum_j |P_j|^2)^(-1/2)``; inside the obstacles it behaves like the
distance to the boundary and it decays like ``1/n`` on the boundary.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from skimage import measure

from .errors import InvalidInputError, StokesMomentsError
from .grid import GridField, GridSpec
from .moments import MomentTable, MomentWarning, clamp_eigenvalues

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True, eq=False)
class BergmanBasis:
    """Cholesky factor and monomial coefficients of ``P_0 .. P_degree``.

    ``factor`` is the upper triangular ``L`` with ``L^H L = M`` (clamped);
    column ``j`` of ``coeffs`` holds the coefficients of ``P_j`` on
    ``1, z, .., z^degree``.
    """

    factor: np.ndarray
    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def evaluate(self, z) -> np.ndarray:
        """Values ``P_j(z)`` stacked along the last axis (Horner per column)."""
        z = np.asarray(z, dtype=complex)
        vals = np.broadcast_to(self.coeffs[-1], z.shape + (self.degree + 1,)).astype(complex)
        for row in self.coeffs[-2::-1]:
            vals = vals * z[..., None] + row
        return vals


def _cholesky_upper(matrix: np.ndarray, floor: float):
    """Upper Cholesky factor, stopping at the first pivot below ``floor``.

    Returns the leading ``r x r`` factor, where ``r`` is the number of
    accepted pivots.
    """
    n = matrix.shape[0]
    lower = np.zeros_like(matrix, dtype=complex)
    for j in range(n):
        pivot = (matrix[j, j] - np.vdot(lower[j, :j], lower[j, :j])).real
        if not pivot > floor:
            return lower[:j, :j].conj().T, j
        lower[j, j] = np.sqrt(pivot)
        lower[j + 1:, j] = (matrix[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j].conj()) / lower[j, j]
    return lower.conj().T, n


def bergman_coeffs(moments: MomentTable | np.ndarray, clamp_eps: float = 1e-8,
                   pivot_floor: float = 1e-14) -> BergmanBasis:
    """Orthonormal polynomial basis from a moment matrix.

    The matrix is symmetrized, negative eigenvalues are clamped to zero and
    the Cholesky factorization stops at the first pivot below
    ``pivot_floor * trace``; the basis degree then drops with a warning.
    """
    matrix = moments.matrix if isinstance(moments, MomentTable) else np.asarray(moments, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise InvalidInputError(f"moment matrix must be square and non-empty, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("moment matrix has non-finite entries")
    clamped, eigs = clamp_eigenvalues(matrix, clamp_eps)
    trace = float(np.trace(clamped).real)
    if trace <= 0:
        raise InvalidInputError("moment matrix has non-positive trace (no obstacle mass)")
    factor, rank = _cholesky_upper(clamped, pivot_floor * trace)
    if rank == 0:
        raise InvalidInputError("moment matrix has no admissible pivot")
    if rank < matrix.shape[0]:
        warnings.warn(f"moment matrix rank deficient: Bergman degree reduced to {rank - 1}",
                      MomentWarning, stacklevel=2)
    coeffs = sla.solve_triangular(factor, np.eye(rank), lower=False)
    diag = {
        "requested_degree": matrix.shape[0] - 1,
        "degree": rank - 1,
        "min_eigenvalue": float(eigs.min()),
        "clamped_mass": float(np.abs(np.minimum(eigs, 0)).sum()),
        "pivot_floor": pivot_floor * trace,
    }
    log.info("Bergman basis of degree %d (clamped mass %.2e)", rank - 1, diag["clamped_mass"])
    return BergmanBasis(factor, coeffs, diag)


def theta_eval(basis: BergmanBasis, z) -> np.ndarray:
    """``Theta_n(z) = (pi sum_j |P_j(z)|^2)^(-1/2)``."""
    total = np.sum(np.abs(basis.evaluate(z)) ** 2, axis=-1)
    if np.any(total <= 0):
        raise StokesMomentsError("Bergman polynomials vanish simultaneously; basis is invalid")
    return 1.0 / np.sqrt(np.pi * total)


def theta_grid(basis: BergmanBasis, spec: GridSpec) -> GridField:
    return GridField(spec, theta_eval(basis, spec.points()))


@dataclass(frozen=True)
class Contour:
    level: float
    lam: float
    points: np.ndarray  # complex vertices

    @property
    def closed(self) -> bool:
        return len(self.points) > 2 and self.points[0] == self.points[-1]


def field_contours(grid: GridField, level: float) -> list:
    """Marching-squares polylines of ``grid.values`` at ``level`` as complex arrays."""
    out = []
    for path in measure.find_contours(grid.values, level):
        x, y = grid.spec.index_to_xy(path[:, 0], path[:, 1])
        out.append(x + 1j * y)
    return out


def theta_contours(basis: BergmanBasis, spec: GridSpec, lambdas=DEFAULT_LEVELS,
                   grid: GridField | None = None) -> list:
    """Level sets ``Theta_n = lambda / n`` for each ``lambda``; ``n`` is the degree."""
    grid = theta_grid(basis, spec) if grid is None else grid
    n = max(basis.degree, 1)
    contours = []
    for lam in lambdas:
        level = float(lam) / n
        for pts in field_contours(grid, level):
            contours.append(Contour(level, float(lam), pts))
    return contours


def write_contours_csv(contours, path) -> None:
    """CSV rows ``level, lambda, polyline, vertex, x, y``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "lambda", "polyline", "vertex", "x", "y"])
        for pid, c in enumerate(contours):
            for vid, z in enumerate(c.points):
                writer.writerow([repr(c.level), repr(c.lam), pid, vid, repr(float(z.real)), repr(float(z.imag))])
