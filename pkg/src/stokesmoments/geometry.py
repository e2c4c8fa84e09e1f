"""Parametric Jordan curves, their Nystrom discretization and scenarios.

Normals always point toward the interior of the region enclosed by the
curve, and the unit tangent satisfies ``n = i * tau`` for counterclockwise
curves.  Curvature is signed so that ``d tau / ds = curvature * n``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GeometryError, InvalidInputError, ResolutionError

CURVE_KINDS = ("circle", "ellipse", "radial-cosine", "polygon-rounded", "custom-samples")

_REQUIRED = {
    "circle": ("radius",),
    "ellipse": ("a", "b"),
    "radial-cosine": ("r0", "amplitude", "frequency"),
    "polygon-rounded": ("circumradius",),
    "custom-samples": (),
}


@dataclass(frozen=True)
class ParamCurve:
    """Closed curve ``theta -> point`` on ``[0, 2 pi)``.

    ``params`` holds the kind-specific reals:

    * circle: ``radius``
    * ellipse: ``a``, ``b`` and optional ``angle``
    * radial-cosine: ``r0``, ``amplitude``, ``frequency`` and optional
      ``phase``; radius ``r0 * (1 + amplitude * cos(frequency * theta + phase))``
    * polygon-rounded: ``circumradius`` and optional ``sides`` (4),
      ``rotation`` (angle of the first vertex, default ``pi / sides``) and
      ``rounding`` (corner radius, default 2% of the edge length)
    * custom-samples: ``samples`` holds the counterclockwise points;
      ``center`` is ignored
    """

    kind: str
    center: complex = 0j
    params: dict = field(default_factory=dict)
    ccw: bool = True
    samples: tuple = ()

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise InvalidInputError(f"unknown curve kind {self.kind!r}")
        object.__setattr__(self, "center", complex(self.center))
        if not np.isfinite(self.center.real) or not np.isfinite(self.center.imag):
            raise InvalidInputError("curve center must be finite")
        missing = [k for k in _REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise InvalidInputError(f"{self.kind} curve needs parameters {missing}")
        for key, value in self.params.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidInputError(f"parameter {key!r} must be a finite number, got {value!r}")
        p = self.params
        if self.kind == "circle" and p["radius"] <= 0:
            raise InvalidInputError("circle radius must be positive")
        if self.kind == "ellipse" and (p["a"] <= 0 or p["b"] <= 0):
            raise InvalidInputError("ellipse semi-axes must be positive")
        if self.kind == "radial-cosine":
            if p["r0"] <= 0 or abs(p["amplitude"]) >= 1:
                raise InvalidInputError("radial-cosine needs r0 > 0 and |amplitude| < 1")
            if p["frequency"] != int(p["frequency"]):
                raise InvalidInputError("radial-cosine frequency must be an integer")
        if self.kind == "polygon-rounded":
            sides = p.get("sides", 4)
            if sides != int(sides) or sides < 3 or p["circumradius"] <= 0:
                raise InvalidInputError("polygon-rounded needs sides >= 3 and circumradius > 0")
            if self._polygon_rounding() <= 0 or self._polygon_rounding() >= self._polygon_max_rounding():
                raise InvalidInputError("polygon rounding radius out of range")
        if self.kind == "custom-samples":
            pts = np.asarray(self.samples, dtype=complex)
            if pts.ndim != 1 or pts.size < 8 or not np.all(np.isfinite(pts)):
                raise InvalidInputError("custom-samples needs at least 8 finite points")
            object.__setattr__(self, "samples", tuple(complex(z) for z in pts))

    # -- polygon helpers -------------------------------------------------
    def _polygon_geometry(self):
        p = self.params
        sides = int(p.get("sides", 4))
        R = float(p["circumradius"])
        rotation = float(p.get("rotation", math.pi / sides))
        edge = 2 * R * math.sin(math.pi / sides)
        return sides, R, rotation, edge

    def _polygon_rounding(self):
        sides, R, rotation, edge = self._polygon_geometry()
        return float(self.params.get("rounding", 0.02 * edge))

    def _polygon_max_rounding(self):
        sides, R, rotation, edge = self._polygon_geometry()
        half_interior = (math.pi - 2 * math.pi / sides) / 2
        return 0.5 * edge * math.tan(half_interior)

    @cached_property
    def _polygon_pieces(self):
        sides, R, rotation, edge = self._polygon_geometry()
        rho = self._polygon_rounding()
        half_interior = (math.pi - 2 * math.pi / sides) / 2
        cut = rho / math.tan(half_interior)
        turn = 2 * math.pi / sides
        verts = [self.center + R * complex(math.cos(rotation + turn * k), math.sin(rotation + turn * k))
                 for k in range(sides)]
        pieces = []  # (kind, length, start point, direction or arc center, start angle)
        for k in range(sides):
            a, b = verts[k], verts[(k + 1) % sides]
            u = (b - a) / abs(b - a)
            start = a + cut * u
            pieces.append(("edge", edge - 2 * cut, start, u, 0.0))
            # arc around vertex b: center on the inward side of the edge
            centre = b - cut * u + rho * 1j * u
            start_angle = math.atan2((-1j * u).imag, (-1j * u).real)
            pieces.append(("arc", rho * turn, centre, rho, start_angle))
        lengths = np.array([pc[1] for pc in pieces])
        return pieces, np.concatenate([[0.0], np.cumsum(lengths)])

    def _custom_splines(self):
        pts = np.asarray(self.samples, dtype=complex)
        t = np.linspace(0, 2 * np.pi, pts.size + 1)
        closed = np.append(pts, pts[0])
        return (CubicSpline(t, closed.real, bc_type="periodic"),
                CubicSpline(t, closed.imag, bc_type="periodic"))

    @cached_property
    def _splines(self):
        return self._custom_splines()

    # -- raw parameterization (counterclockwise) --------------------------
    def _raw(self, theta):
        """Return x, x', x'' for the counterclockwise parameterization."""
        p = self.params
        c = self.center
        if self.kind == "circle":
            e = np.exp(1j * theta)
            r = p["radius"]
            return c + r * e, 1j * r * e, -r * e
        if self.kind == "ellipse":
            rot = np.exp(1j * p.get("angle", 0.0))
            a, b = p["a"], p["b"]
            x = a * np.cos(theta) + 1j * b * np.sin(theta)
            dx = -a * np.sin(theta) + 1j * b * np.cos(theta)
            return c + rot * x, rot * dx, -rot * x
        if self.kind == "radial-cosine":
            k = p["frequency"]
            phase = p.get("phase", 0.0)
            r0, eps = p["r0"], p["amplitude"]
            r = r0 * (1 + eps * np.cos(k * theta + phase))
            dr = -r0 * eps * k * np.sin(k * theta + phase)
            ddr = -r0 * eps * k * k * np.cos(k * theta + phase)
            e = np.exp(1j * theta)
            return c + r * e, (dr + 1j * r) * e, (ddr + 2j * dr - r) * e
        if self.kind == "polygon-rounded":
            return self._raw_polygon(theta)
        sx, sy = self._splines
        t = np.mod(theta, 2 * np.pi)
        return (sx(t) + 1j * sy(t), sx(t, 1) + 1j * sy(t, 1), sx(t, 2) + 1j * sy(t, 2))

    def _raw_polygon(self, theta):
        pieces, cum = self._polygon_pieces
        total = cum[-1]
        speed = total / (2 * np.pi)
        s = np.mod(theta, 2 * np.pi) * speed
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pieces) - 1)
        x = np.empty(s.shape, dtype=complex)
        dx = np.empty(s.shape, dtype=complex)
        ddx = np.zeros(s.shape, dtype=complex)
        for i, (kind, length, a, b, ang) in enumerate(pieces):
            sel = idx == i
            if not np.any(sel):
                continue
            local = s[sel] - cum[i]
            if kind == "edge":
                x[sel] = a + local * b
                dx[sel] = speed * b
            else:
                phi = ang + local / b
                e = np.exp(1j * phi)
                x[sel] = a + b * e
                dx[sel] = speed * 1j * e
                ddx[sel] = -speed**2 * e / b
        return x, dx, ddx

    def derivatives(self, theta):
        """Position, first and second derivative with respect to theta."""
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("theta must be finite")
        if self.ccw:
            return self._raw(theta)
        x, dx, ddx = self._raw(-theta)
        return x, -dx, ddx

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "center": [self.center.real, self.center.imag],
               "params": dict(self.params), "ccw": self.ccw}
        if self.samples:
            out["samples"] = [[z.real, z.imag] for z in self.samples]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ParamCurve":
        center = data.get("center", [0.0, 0.0])
        samples = tuple(complex(x, y) for x, y in data.get("samples", []))
        return cls(kind=data["kind"], center=complex(center[0], center[1]),
                   params=dict(data.get("params", {})), ccw=bool(data.get("ccw", True)),
                   samples=samples)


def circle(center: complex, radius: float) -> ParamCurve:
    return ParamCurve("circle", center, {"radius": radius})


def curve_eval(curve: ParamCurve, theta):
    """Evaluate ``(point, tangent, normal, curvature, speed)`` at ``theta``.

    Points, unit tangents and inward unit normals are complex numbers.
    """
    x, dx, ddx = curve.derivatives(theta)
    speed = np.abs(dx)
    if np.any(speed <= 0):
        raise GeometryError("parameterization is not regular")
    tangent = dx / speed
    sign = 1.0 if curve.ccw else -1.0
    normal = sign * 1j * tangent
    curvature = sign * np.imag(np.conj(dx) * ddx) / speed**3
    if np.ndim(theta) == 0:
        return x[()], tangent[()], normal[()], float(curvature), float(speed)
    return x, tangent, normal, curvature, speed


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Equispaced-in-theta trapezoidal discretization of one curve."""

    nodes: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray
    theta: np.ndarray
    quad_weights: np.ndarray
    ccw: bool = True

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def perimeter(self) -> float:
        return float(self.quad_weights.sum())

    @property
    def area(self) -> float:
        # 1/2 |sum x cross dx|, with dx = tau * w
        cross = np.imag(np.conj(self.nodes) * self.tangents) * self.quad_weights
        return 0.5 * abs(float(cross.sum()))

    @property
    def spacing(self) -> float:
        return float(np.abs(np.diff(np.append(self.nodes, self.nodes[0]))).max())

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "ccw": self.ccw,
            "nodes": [self.nodes.real.tolist(), self.nodes.imag.tolist()],
            "normals": [self.normals.real.tolist(), self.normals.imag.tolist()],
            "tangents": [self.tangents.real.tolist(), self.tangents.imag.tolist()],
            "curvature": self.curvature.tolist(),
            "speed": self.speed.tolist(),
            "theta": self.theta.tolist(),
            "quad_weights": self.quad_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryMesh":
        def cplx(pair):
            return np.asarray(pair[0], float) + 1j * np.asarray(pair[1], float)

        return cls(
            nodes=cplx(data["nodes"]),
            normals=cplx(data["normals"]),
            tangents=cplx(data["tangents"]),
            curvature=np.asarray(data["curvature"], float),
            speed=np.asarray(data["speed"], float),
            theta=np.asarray(data["theta"], float),
            quad_weights=np.asarray(data["quad_weights"], float),
            ccw=bool(data.get("ccw", True)),
        )


def _segments_intersect(nodes: np.ndarray) -> bool:
    a = nodes
    b = np.roll(nodes, -1)
    n = a.size
    d = b - a

    def cross(u, v):
        return u.real * v.imag - u.imag * v.real

    # orientation of endpoints of segment j relative to segment i
    o1 = cross(d[:, None], a[None, :] - a[:, None])
    o2 = cross(d[:, None], b[None, :] - a[:, None])
    o3 = cross(d[None, :], a[:, None] - a[None, :])
    o4 = cross(d[None, :], b[:, None] - a[None, :])
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    hit &= (gap > 1) & (gap < n - 1)
    return bool(hit.any())


def discretize(curve: ParamCurve, n: int) -> BoundaryMesh:
    """Sample ``curve`` at ``n`` equispaced parameters with trapezoidal weights."""
    if int(n) != n or n < 16 or n % 2:
        raise ResolutionError(f"mesh size must be an even integer >= 16, got {n}")
    n = int(n)
    theta = 2 * np.pi * np.arange(n) / n
    x, tau, normal, kappa, speed = curve_eval(curve, theta)
    if _segments_intersect(x):
        raise GeometryError("curve self-intersects on the sample grid")
    return BoundaryMesh(
        nodes=x, normals=normal, tangents=tau, curvature=kappa, speed=speed,
        theta=theta, quad_weights=2 * np.pi / n * speed, ccw=curve.ccw,
    )


def winding_number(polygon: np.ndarray, points) -> np.ndarray:
    """Winding number of a closed polygon around each point."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    v = polygon[None, :] - pts[:, None]
    ratio = np.roll(v, -1, axis=1) / v
    return np.rint(np.angle(ratio).sum(axis=1) / (2 * np.pi)).astype(int)


def inside(polygon: np.ndarray, points) -> np.ndarray:
    return winding_number(polygon, points) != 0


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a[:, None] - b[None, :]).min())


@dataclass(frozen=True, eq=False)
class Scenario:
    """Outer boundary (optional) plus obstacle curves with mesh sizes."""

    outer: ParamCurve | None
    obstacles: tuple = ()
    n_outer: int = 256
    n_obstacles: tuple = ()
    margin: float = 0.02
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        ns = tuple(self.n_obstacles) or (256,) * len(self.obstacles)
        if len(ns) != len(self.obstacles):
            raise InvalidInputError("one mesh size per obstacle is required")
        object.__setattr__(self, "n_obstacles", tuple(int(v) for v in ns))

    @cached_property
    def outer_mesh(self) -> BoundaryMesh | None:
        return None if self.outer is None else discretize(self.outer, self.n_outer)

    @cached_property
    def obstacle_meshes(self) -> list:
        return [discretize(c, n) for c, n in zip(self.obstacles, self.n_obstacles)]

    @property
    def meshes(self) -> list:
        head = [] if self.outer_mesh is None else [self.outer_mesh]
        return head + list(self.obstacle_meshes)

    def validate(self) -> "Scenario":
        """Check containment and pairwise disjointness on the sample nodes."""
        obs = self.obstacle_meshes
        if self.outer_mesh is not None:
            ring = self.outer_mesh.nodes
            for i, mesh in enumerate(obs):
                if not np.all(inside(ring, mesh.nodes)):
                    raise GeometryError(f"obstacle {i} is not inside the outer boundary")
                if _min_distance(ring, mesh.nodes) < self.margin:
                    raise GeometryError(f"obstacle {i} is closer than {self.margin} to the outer boundary")
        for i in range(len(obs)):
            for j in range(i + 1, len(obs)):
                a, b = obs[i].nodes, obs[j].nodes
                if np.any(inside(a, b)) or np.any(inside(b, a)):
                    raise GeometryError(f"obstacles {i} and {j} overlap")
                if _min_distance(a, b) < self.margin:
                    raise GeometryError(f"obstacles {i} and {j} are closer than {self.margin}")
        return self

    def to_dict(self) -> dict:
        out = {"name": self.name, "margin": self.margin, "obstacles": []}
        if self.outer is not None:
            out["outer"] = {**self.outer.to_dict(), "n": self.n_outer}
        for curve, n in zip(self.obstacles, self.n_obstacles):
            out["obstacles"].append({**curve.to_dict(), "n": n})
        return out

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def unit_disk_scenario(obstacles: Iterable[ParamCurve] = (), n_outer: int = 256,
                       n_obstacles: Sequence[int] = (), name: str = "") -> Scenario:
    obstacles = tuple(obstacles)
    return Scenario(circle(0, 1.0), obstacles, n_outer, tuple(n_obstacles), name=name)


def enclosing_radius(scenario: Scenario) -> float:
    """Largest node modulus over all meshes of the scenario."""
    meshes = scenario.meshes
    if not meshes:
        raise InvalidInputError("scenario has no curves")
    return float(max(np.abs(m.nodes).max() for m in meshes))
