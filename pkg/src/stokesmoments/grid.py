"""Uniform Cartesian grids over the bounding square of the unit disk."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class GridSpec:
    """Node-centred grid with ``nx * ny`` samples on ``[xmin, xmax] x [ymin, ymax]``.

    ``values[i, j]`` sits at ``x = xmin + j h_x``, ``y = ymin + i h_y``.
    """

    nx: int = 256
    ny: int = 256
    xmin: float = -1.0
    xmax: float = 1.0
    ymin: float = -1.0
    ymax: float = 1.0

    def __post_init__(self):
        if int(self.nx) < 3 or int(self.ny) < 3:
            raise InvalidInputError("grid needs at least 3 samples per axis")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidInputError("grid bounds are empty")

    @classmethod
    def square(cls, n: int, radius: float = 1.0) -> "GridSpec":
        return cls(n, n, -radius, radius, -radius, radius)

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)

    def points(self) -> np.ndarray:
        """Complex sample points, shape ``(ny, nx)``."""
        return self.x[None, :] + 1j * self.y[:, None]

    def index_to_xy(self, rows, cols):
        """Map fractional (row, col) indices to coordinates."""
        return self.xmin + np.asarray(cols) * self.hx, self.ymin + np.asarray(rows) * self.hy

    def disk_mask(self, radius: float = 1.0, center: complex = 0j) -> np.ndarray:
        return np.abs(self.points() - center) < radius

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "xmin": self.xmin, "xmax": self.xmax,
                "ymin": self.ymin, "ymax": self.ymax}


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar samples on a grid together with the mask of the domain."""

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = (self.spec.ny, self.spec.nx)
        values = np.asarray(self.values, dtype=float)
        if values.shape != shape:
            raise InvalidInputError(f"grid values have shape {values.shape}, expected {shape}")
        mask = self.spec.disk_mask() if self.mask is None else np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
