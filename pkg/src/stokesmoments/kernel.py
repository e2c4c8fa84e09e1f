"""Biharmonic fundamental solution and its derivatives.

``G(x, y) = (|x - y|^2 ln(|x - y| / kappa0) + kappa1) / (8 pi)``.  Points and
unit normals are complex numbers; all functions broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularDiagonalError

EIGHT_PI = 8 * np.pi


@dataclass(frozen=True)
class KernelConstants:
    kappa0: float
    kappa1: float

    def __post_init__(self):
        if not (np.isfinite(self.kappa0) and self.kappa0 > 0 and np.isfinite(self.kappa1)):
            raise InvalidInputError("kernel constants must be finite with kappa0 > 0")

    @classmethod
    def for_radius(cls, radius: float, scale0: float = 3.0, scale1: float = 2.0) -> "KernelConstants":
        """Default constants ``kappa0 = 3 R``, ``kappa1 = 2 R^2``."""
        return cls(scale0 * radius, scale1 * radius**2)

    def is_elliptic_for(self, radius: float) -> bool:
        """True when ``kappa0 > e R`` and ``kappa1 > R^2``."""
        return self.kappa0 > np.e * radius and self.kappa1 > radius**2


def _dot(a, b):
    """Euclidean dot product of complex-encoded vectors."""
    return (np.conj(a) * b).real


def eval_G(x, y, k: KernelConstants):
    r2 = np.abs(np.asarray(x) - np.asarray(y)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(r2 > 0, 0.5 * r2 * np.log(r2 / k.kappa0**2), 0.0)
    return (log_term + k.kappa1) / EIGHT_PI


def eval_kernel_block(x, n_x, y, n_y, k: KernelConstants):
    """Return ``(G, d_ny G, d_nx G, d_nx d_ny G)``.

    The first three are continuous; the mixed derivative has a logarithmic
    singularity and is refused at coincident points.
    """
    d = np.asarray(x) - np.asarray(y)
    r2 = np.abs(d) ** 2
    if np.any(r2 == 0):
        raise SingularDiagonalError("mixed normal derivative requested at x == y")
    log = np.log(r2 / k.kappa0**2)  # 2 ln(r / kappa0)
    g = (0.5 * r2 * log + k.kappa1) / EIGHT_PI
    dn_x = _dot(d, n_x)
    dn_y = _dot(d, n_y)
    dny = -dn_y * (log + 1) / EIGHT_PI
    dnx = dn_x * (log + 1) / EIGHT_PI
    dnxny = -(_dot(n_x, n_y) * (log + 1) + 2 * dn_x * dn_y / r2) / EIGHT_PI
    return g, dny, dnx, dnxny


def eval_gradient_G(x, y, k: KernelConstants):
    """Gradient of ``G`` with respect to ``x`` as a complex number."""
    d = np.asarray(x) - np.asarray(y)
    r2 = np.abs(d) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(r2 > 0, np.log(r2 / k.kappa0**2) + 1, 0.0)
    return d * factor / EIGHT_PI


def eval_laplacian_block(x, y, n_y, k: KernelConstants):
    """Return ``(Lap_x G, Lap_x d_ny G)`` for ``x != y``."""
    d = np.asarray(x) - np.asarray(y)
    r2 = np.abs(d) ** 2
    if np.any(r2 == 0):
        raise SingularDiagonalError("Laplacian of G is singular at x == y")
    lap = (0.5 * np.log(r2 / k.kappa0**2) + 1) / (2 * np.pi)
    lap_dny = -_dot(d, n_y) / r2 / (2 * np.pi)
    return lap, lap_dny
