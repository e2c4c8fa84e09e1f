"""Complex moments of the obstacles from boundary measurements.

The pipeline forms the Gram matrix of the probe traces on the outer curve,
pairs the measured densities with the probe traces, and extracts the moment
matrix ``M[j, k] ~ int conj(z)^j z^k dm`` as a Schur complement.
``oracle_moments`` computes the same quantities directly from known curves
and is kept off the measurement path.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .bem import GramFactorization, MeasurementSet, pairing, round_sig
from .errors import IllPosedError, InvalidInputError, ParseError, SolverError
from .geometry import ParamCurve, discretize

log = logging.getLogger(__name__)


class MomentWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Table ``tau[j, k] = int_O conj(z)^j z^k dm``.

    For tables extracted from measurements the matrix is square of size
    ``m - 1``.  ``harmonic`` is the ``j = 0`` row.
    """

    matrix: np.ndarray
    m: int | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def harmonic(self) -> np.ndarray:
        return self.matrix[0]

    @property
    def area(self) -> float:
        return float(self.matrix[0, 0].real)

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = {"m": self.m, "shape": list(self.matrix.shape), "provenance": self.provenance}
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["j", "k", "re", "im"])
        rows, cols = self.matrix.shape
        for j in range(rows):
            for k in range(cols):
                v = self.matrix[j, k]
                writer.writerow([j, k, repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MomentTable":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ParseError("moment table: missing JSON header line")
        try:
            header = json.loads(lines[0][1:])
            rows, cols = header["shape"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"moment table line 1: bad header ({exc})") from exc
        matrix = np.full((rows, cols), np.nan, dtype=complex)
        reader = csv.reader(lines[1:])
        if next(reader, None) != ["j", "k", "re", "im"]:
            raise ParseError("moment table line 2: expected column header j,k,re,im")
        for lineno, row in enumerate(reader, start=3):
            try:
                j, k = int(row[0]), int(row[1])
                matrix[j, k] = complex(float(row[2]), float(row[3]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"moment table line {lineno}: {exc}") from exc
        if np.isnan(matrix).any():
            raise ParseError("moment table has missing entries")
        return cls(matrix, header.get("m"), header.get("provenance", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "MomentTable":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def probe_family(ms: MeasurementSet, conjugates: bool = True):
    """Probe traces, measured densities and labels used for the Galerkin step.

    The measured family is ``f_1 .. f_(2m-1)``.  With ``conjugates`` the
    complex conjugates of every probe are appended (except the real probe
    ``|z|^2 / 4``); since the forward operators are real, their densities are
    the conjugated measurements and no new data is needed.  Order:
    ``z^1..z^m, conj(z)^1..conj(z)^m, G_1..G_(m-1), conj(G_2)..conj(G_(m-1))``.
    """
    m = ms.m
    f = ms.trace_stack()
    d = ms.density_stack()
    labels = [f"z^{k}" for k in range(1, m + 1)]
    g_labels = [f"G_{k}" for k in range(1, m)]
    if not conjugates:
        return f, d, labels + g_labels
    traces = np.concatenate([f[:m], np.conj(f[:m]), f[m:], np.conj(f[m + 1:])])
    dens = np.concatenate([d[:m], np.conj(d[:m]), d[m:], np.conj(d[m + 1:])])
    labels = (labels + [f"conj(z)^{k}" for k in range(1, m + 1)] + g_labels
              + [f"conj(G_{k})" for k in range(2, m)])
    return traces, dens, labels


def gram_gamma0(ms: MeasurementSet, conjugates: bool = False) -> np.ndarray:
    """``Q[j, k] = (conj(f_j), f_k)`` in the H(Gamma_0) inner product."""
    traces, _, _ = probe_family(ms, conjugates)
    gram = GramFactorization(ms.mesh, ms.constants)
    w = ms.mesh.quad_weights
    return pairing(w, np.conj(gram.solve(traces))[:, None, :], traces[None, :, :])


def measurement_matrix(ms: MeasurementSet, conjugates: bool = False) -> np.ndarray:
    """``V[j, k] = <conj(q_j), f_k>``: measured densities paired with the probes."""
    traces, dens, _ = probe_family(ms, conjugates)
    w = ms.mesh.quad_weights
    return pairing(w, np.conj(dens)[:, None, :], traces[None, :, :])


def obstacle_gram(ms: MeasurementSet, conjugates: bool = True):
    """Return ``(Q_Gamma, Q_Gamma0, V, cond(V))`` with ``Q_Gamma = Q0 - Q0 V^-1 Q0``.

    ``conjugates=False`` restricts the Galerkin step to the measured family
    ``f_1 .. f_(2m-1)``; the result is then only accurate to the part of
    ``K f_k`` lying in the complex span of the measured probes.
    """
    q0 = gram_gamma0(ms, conjugates)
    v = measurement_matrix(ms, conjugates)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond):
        raise SolverError("measurement matrix is singular", condition=cond)
    q_gamma = q0 - q0 @ np.linalg.solve(v, q0)
    return q_gamma, q0, v, cond


def measured_block(ms: MeasurementSet, matrix: np.ndarray) -> np.ndarray:
    """Rows and columns of an extended-family matrix that belong to ``f_1 .. f_(2m-1)``."""
    m = ms.m
    idx = np.r_[0:m, 2 * m: 3 * m - 1]
    return matrix[np.ix_(idx, idx)]


def moment_matrix(ms: MeasurementSet, hermitian_tol: float = 1e-6,
                  harmonic_span: str = "real") -> MomentTable:
    """Moment matrix of size ``m - 1`` from a Schur complement of ``Q_Gamma``.

    ``harmonic_span="real"`` (default) eliminates every harmonic polynomial
    trace up to degree ``m``, i.e. both ``z^j`` and ``conj(z)^j``, which is
    what the identity between the projected norm and the area integral
    requires.  ``"holomorphic"`` eliminates only ``z^j`` over the measured
    family; it is kept for comparison and overestimates the moments.
    """
    m = ms.m
    if harmonic_span not in ("real", "holomorphic"):
        raise InvalidInputError(f"harmonic_span must be 'real' or 'holomorphic', got {harmonic_span!r}")
    conj = harmonic_span == "real"
    q_gamma, q0, v, cond_v = obstacle_gram(ms, conjugates=conj)
    p = 2 * m if conj else m
    r = m - 1
    # Q_Gamma is Hermitian up to rounding; symmetrizing it before the Schur
    # step keeps the ill-conditioned X block from amplifying that rounding.
    q_herm = 0.5 * (q_gamma + q_gamma.conj().T)
    # relative to Q_Gamma, floored so a vanishing Q_Gamma (no obstacle) does
    # not turn rounding noise into a large relative residual
    scale = max(np.linalg.norm(q_gamma), 1e-8 * np.linalg.norm(q0))
    asym = float(np.linalg.norm(q_gamma - q_herm) / scale) if scale > 0 else 0.0
    x = q_herm[:p, :p]
    y = q_herm[:p, p:p + r]
    z = q_herm[p:p + r, p:p + r]
    lam, vecs = np.linalg.eigh(x)
    cond_x = float(np.abs(lam).max() / np.abs(lam).min()) if np.abs(lam).min() > 0 else np.inf
    if not np.isfinite(cond_x) or cond_x > 1e16:
        raise IllPosedError(f"monomial block is singular (cond {cond_x:.2e}); lower m", condition=cond_x)
    b = vecs.conj().T @ y
    schur = z - b.conj().T @ (b / lam[:, None])
    herm = 0.5 * (schur + schur.conj().T)
    if conj:
        q_gamma, q0 = measured_block(ms, q_gamma), measured_block(ms, q0)
    prov = {
        **ms.provenance,
        "harmonic_span": harmonic_span,
        "cond_V": round_sig(cond_v),
        "cond_X": round_sig(cond_x),
        "hermitian_residual": round_sig(asym),
        "schur_hermitian_residual": round_sig(np.linalg.norm(schur - herm) / max(np.linalg.norm(schur), 1e-300)),
        "gram_norm_gamma0": round_sig(np.linalg.norm(q0)),
        "gram_norm_gamma": round_sig(np.linalg.norm(q_gamma)),
    }
    if asym > hermitian_tol:
        prov["warning"] = f"obstacle Gram matrix non-Hermitian (relative residual {asym:.2e})"
        warnings.warn(prov["warning"], MomentWarning, stacklevel=2)
    log.info("moment matrix: cond(V)=%.2e cond(X)=%.2e hermitian correction %.2e", cond_v, cond_x, asym)
    return MomentTable(herm, m, prov)


def clamp_eigenvalues(matrix: np.ndarray, eps: float = 1e-8):
    """Zero the negative spectrum of a Hermitian matrix.

    Returns ``(clamped, eigenvalues)``; warns when an eigenvalue lies below
    ``-eps * ||M||``.
    """
    herm = 0.5 * (matrix + matrix.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    norm = np.abs(vals).max() if vals.size else 0.0
    if vals.size and vals.min() < -eps * norm:
        warnings.warn(f"moment matrix has negative eigenvalue {vals.min():.3e} (norm {norm:.3e})",
                      MomentWarning, stacklevel=2)
    clamped = (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T
    return clamped, vals


def oracle_moments(obstacles: Sequence[ParamCurve], j_max: int, k_max: int, n: int = 1024) -> MomentTable:
    """Moments from boundary integrals over the known curves.

    Uses ``int_O conj(z)^j z^k dm = (1 / (2i (j+1))) oint conj(z)^(j+1) z^k dz``
    on counterclockwise boundaries.
    """
    if j_max < 0 or k_max < 0:
        raise InvalidInputError("moment orders must be non-negative")
    table = np.zeros((j_max + 1, k_max + 1), dtype=complex)
    for curve in obstacles:
        mesh = discretize(curve, n)
        z = mesh.nodes
        sign = 1.0 if mesh.ccw else -1.0
        dz = sign * mesh.tangents * mesh.quad_weights
        zbar_pow = np.conj(z)[None, :] ** (np.arange(j_max + 1)[:, None] + 1)
        z_pow = z[None, :] ** np.arange(k_max + 1)[:, None]
        integral = (zbar_pow * dz) @ z_pow.T
        table += integral / (2j * (np.arange(j_max + 1)[:, None] + 1))
    return MomentTable(table, None, {"source": "oracle", "curves": len(obstacles), "n": n})
