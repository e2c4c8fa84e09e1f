"""Partial balayage of a point-mass measure on a grid.

The quadrature domain of ``sum_j c_j delta_(z_j)`` is the non-contact set of
the obstacle problem

    minimize 1/2 int |grad v|^2 - int v   subject to  v <= U,  v = U on the ring,

with ``U = -(1/2 pi) sum_j c_j ln|x - z_j|``.  Where ``v < U`` the solution
satisfies ``-Lap v = 1``; where ``v = U`` it is harmonic away from the nodes.
The problem is discretized with the five-point Laplacian on a uniform grid
and solved by projected successive over-relaxation.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from PIL import Image

from .errors import ConvergenceError, InvalidInputError
from .grid import GridField, GridSpec
from .bergman import field_contours

log = logging.getLogger(__name__)


class BalayageWarning(UserWarning):
    pass


def select_masses(nodes, weights, rel_floor: float = 1e-3):
    """Drop non-positive weights and those below ``rel_floor * sum(c)``."""
    nodes = np.asarray(nodes, dtype=complex)
    weights = np.real(np.asarray(weights))
    positive = weights > 0
    total = weights[positive].sum()
    keep = positive & (weights >= rel_floor * total) if total > 0 else positive
    if np.any(~keep):
        log.info("dropping %d of %d point masses", int((~keep).sum()), weights.size)
    return nodes[keep], weights[keep]


def potential_U(nodes, weights, spec: GridSpec, domain_radius: float = 1.0) -> GridField:
    """Logarithmic potential ``-(1/2 pi) sum c_j ln|x - z_j|`` on the grid.

    Samples closer than one grid cell to a node take the value at distance
    one cell, the nearest resolved sample.
    """
    nodes = np.asarray(nodes, dtype=complex)
    weights = np.real(np.asarray(weights))
    if nodes.shape != weights.shape:
        raise InvalidInputError("nodes and weights differ in length")
    if np.any(np.abs(nodes) >= domain_radius):
        raise InvalidInputError("Prony node lies outside the domain")
    pts = spec.points()
    h = max(spec.hx, spec.hy)
    u = np.zeros(pts.shape)
    for z, c in zip(nodes, weights):
        r = np.maximum(np.abs(pts - z), h)
        u -= c * np.log(r) / (2 * np.pi)
    return GridField(spec, u, spec.disk_mask(domain_radius))


@numba.njit(cache=True)
def _projected_sor(v, upper, free, h2, omega, tol, max_sweeps):
    ny, nx = v.shape
    for sweep in range(max_sweeps):
        delta = 0.0
        for i in range(1, ny - 1):
            for j in range(1, nx - 1):
                if not free[i, j]:
                    continue
                gs = 0.25 * (v[i - 1, j] + v[i + 1, j] + v[i, j - 1] + v[i, j + 1] + h2)
                new = (1.0 - omega) * v[i, j] + omega * gs
                if new > upper[i, j]:
                    new = upper[i, j]
                d = abs(new - v[i, j])
                if d > delta:
                    delta = d
                v[i, j] = new
        if delta < tol:
            return sweep + 1, delta
    return max_sweeps, delta


@dataclass(frozen=True, eq=False)
class ObstacleSolution:
    field: GridField
    sweeps: int
    last_update: float


def solve_obstacle_problem(u: GridField, omega: float = 1.8, tol: float = 1e-9,
                           max_sweeps: int = 100_000) -> ObstacleSolution:
    """Projected SOR for the discrete obstacle problem with upper obstacle ``U``.

    Cells outside ``u.mask`` (and the outermost grid ring) keep ``v = U``.
    Iteration stops when the largest update falls below ``tol * h^2``, so the
    discrete Laplacian residual on free cells is of order ``tol``.
    """
    if not 0 < omega < 2:
        raise InvalidInputError("SOR relaxation factor must lie in (0, 2)")
    spec = u.spec
    if not np.isclose(spec.hx, spec.hy, rtol=1e-12):
        raise InvalidInputError("obstacle solver needs square cells")
    h2 = spec.hx * spec.hy
    free = u.mask.copy()
    free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
    v = u.values.copy()
    sweeps, last = _projected_sor(v, u.values, free, h2, omega, tol * h2, max_sweeps)
    if last >= tol * h2:
        raise ConvergenceError(f"projected SOR did not converge in {sweeps} sweeps", residual=last / h2)
    log.info("projected SOR converged in %d sweeps", sweeps)
    return ObstacleSolution(GridField(spec, v, u.mask), sweeps, last)


def discrete_laplacian(values: np.ndarray, h2: float) -> np.ndarray:
    """Five-point ``-Lap_h`` on interior samples; zero on the outer ring."""
    out = np.zeros_like(values)
    out[1:-1, 1:-1] = (4 * values[1:-1, 1:-1] - values[:-2, 1:-1] - values[2:, 1:-1]
                       - values[1:-1, :-2] - values[1:-1, 2:]) / h2
    return out


def node_patch(spec: GridSpec, nodes, half_width: int = 1) -> np.ndarray:
    """Cells in the ``3 x 3`` (by default) patch around each node."""
    patch = np.zeros((spec.ny, spec.nx), dtype=bool)
    for z in np.atleast_1d(nodes):
        j = int(round((z.real - spec.xmin) / spec.hx))
        i = int(round((z.imag - spec.ymin) / spec.hy))
        patch[max(i - half_width, 0): i + half_width + 1, max(j - half_width, 0): j + half_width + 1] = True
    return patch


@dataclass(frozen=True, eq=False)
class Indicator:
    field: GridField
    contours: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def area(self) -> float:
        return float(self.field.values.sum() * self.field.spec.hx * self.field.spec.hy)

    @property
    def centroid(self) -> complex:
        vals = self.field.values
        if vals.sum() == 0:
            return complex("nan")
        pts = self.field.spec.points()
        return complex((pts * vals).sum() / vals.sum())


def indicator(v: GridField, u: GridField, contact_eps: float | None = None) -> Indicator:
    """Cells carrying at least half a unit of source, ``-Lap_h v`` in ``[0.5, 1.5]``.

    On free cells (``v < U - eps``) the discrete equation gives exactly 1.
    Contact cells on the free boundary carry a fraction of a cell of mass;
    those holding at least half are counted, which removes the inward bias
    of about half a cell that the strict contact test shows.  The node
    patches, where ``U`` is not resolved, need no special treatment.
    """
    spec = v.spec
    h2 = spec.hx * spec.hy
    if contact_eps is None:
        contact_eps = 1e-6 * h2
    lap = discrete_laplacian(v.values, h2)
    interior = v.mask.copy()
    interior[0, :] = interior[-1, :] = interior[:, 0] = interior[:, -1] = False
    source_like = (lap >= 0.5) & (lap <= 1.5)
    gap = v.values < u.values - contact_eps
    ind = interior & source_like
    # fractional mass from the discrete Laplacian
    mass = float(np.clip(lap[interior], 0.0, 1.5).sum() * h2)
    diag = {"cells": int(ind.sum()), "free_cells": int((interior & gap & source_like).sum()),
            "contact_eps": contact_eps, "laplacian_mass": mass}
    # warn when the body reaches within two cells of the domain boundary
    near = v.mask & ~_erode(v.mask, 2)
    if np.any(ind & near):
        diag["touches_boundary"] = True
        warnings.warn("balayage indicator reaches the outer boundary; the domain may be too small",
                      BalayageWarning, stacklevel=2)
    field_ = GridField(spec, ind.astype(float), v.mask)
    contours = field_contours(field_, 0.5) if ind.any() else []
    return Indicator(field_, contours, diag)


def _erode(mask: np.ndarray, steps: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(steps):
        inner = out.copy()
        inner[1:, :] &= out[:-1, :]
        inner[:-1, :] &= out[1:, :]
        inner[:, 1:] &= out[:, :-1]
        inner[:, :-1] &= out[:, 1:]
        inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
        out = inner
    return out


def complementarity_residual(v: GridField, u: GridField, nodes=(), contact_eps: float | None = None) -> float:
    """Largest ``|-Lap_h v - 1|`` over free interior cells away from the nodes."""
    spec = v.spec
    h2 = spec.hx * spec.hy
    if contact_eps is None:
        contact_eps = 1e-6 * h2
    lap = discrete_laplacian(v.values, h2)
    free = _erode(v.mask, 1) & (v.values < u.values - contact_eps) & ~node_patch(spec, nodes, 1)
    return float(np.abs(lap[free] - 1).max()) if free.any() else 0.0


def balayage(nodes, weights, spec: GridSpec, omega: float = 1.8, tol: float = 1e-9,
             max_sweeps: int = 100_000, rel_floor: float = 1e-3) -> Indicator:
    """Quadrature domain of the positive point masses as a grid indicator."""
    nodes, weights = select_masses(nodes, weights, rel_floor)
    u = potential_U(nodes, weights, spec)
    if nodes.size == 0:
        empty = GridField(spec, np.zeros((spec.ny, spec.nx)), u.mask)
        return Indicator(empty, [], {"cells": 0, "sweeps": 0, "masses": 0})
    sol = solve_obstacle_problem(u, omega, tol, max_sweeps)
    ind = indicator(sol.field, u)
    ind.diagnostics.update(
        sweeps=sol.sweeps,
        last_update=sol.last_update,
        masses=int(nodes.size),
        total_mass=float(weights.sum()),
        area=ind.area,
        complementarity=complementarity_residual(sol.field, u, nodes),
    )
    return ind


def write_pgm(ind: Indicator, path) -> None:
    """Binary PGM, 255 inside; the first image row is the top of the domain."""
    img = (ind.field.values[::-1] > 0.5).astype(np.uint8) * 255
    Image.fromarray(img, mode="L").save(path, format="PPM")


def write_contours_csv(contours, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["polyline", "vertex", "x", "y"])
        for pid, pts in enumerate(contours):
            for vid, z in enumerate(pts):
                writer.writerow([pid, vid, repr(float(z.real)), repr(float(z.imag))])
