"""Nodes and weights of a point-mass model from harmonic moments.

Solves ``sum_j c_j z_j^l = tau_l`` for ``l = 0 .. 2n-1``: the nodes are the
eigenvalues of the Hankel pencil ``H1 xi = z H0 xi`` and the weights come
from the Vandermonde system on ``tau_0 .. tau_(n-1)``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditionedError, InvalidInputError, ParseError
from .moments import MomentTable

log = logging.getLogger(__name__)

FORMAT = "stokesmoments.prony/1"


class PronyWarning(UserWarning):
    pass


def hankel_matrices(tau, n: int):
    """``H0 = [tau_(i+j)]`` and ``H1 = [tau_(i+j+1)]`` for ``i, j < n``."""
    tau = np.asarray(tau, dtype=complex)
    if n < 0:
        raise InvalidInputError("model order must be non-negative")
    if tau.size < 2 * n:
        raise InvalidInputError(f"order {n} needs {2 * n} moments, got {tau.size}")
    idx = np.add.outer(np.arange(n), np.arange(n))
    return tau[idx], tau[idx + 1]


def solve_pencil(h0, h1, rel_cutoff: float = 1e-12, abs_floor: float = 1e-300,
                 orientation: str = "standard"):
    """Generalized eigenvalues of the Hankel pencil after SVD truncation.

    ``orientation="standard"`` solves ``H1 xi = z H0 xi`` whose eigenvalues
    are the nodes.  ``"reversed"`` solves ``H0 xi = z H1 xi`` and returns
    its eigenvalues unchanged (they are the reciprocal nodes); it exists to
    compare both forms.  Returns ``(nodes, info)``; the effective order is
    the number of singular values of the left matrix above
    ``rel_cutoff * sigma_max``.
    """
    h0 = np.asarray(h0, dtype=complex)
    h1 = np.asarray(h1, dtype=complex)
    if orientation == "reversed":
        h0, h1 = h1, h0
    elif orientation != "standard":
        raise InvalidInputError(f"unknown pencil orientation {orientation!r}")
    n = h0.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex), {"order": 0, "effective_order": 0, "singular_values": []}
    u, s, vh = np.linalg.svd(h0)
    smax = s[0]
    rank = int(np.sum(s > max(rel_cutoff * smax, abs_floor))) if smax > abs_floor else 0
    info = {"order": n, "effective_order": rank, "singular_values": s.tolist(),
            "pencil_condition": float(smax / s[rank - 1]) if rank else float("inf")}
    if rank < n:
        warnings.warn(f"Hankel pencil has effective order {rank} < {n}", PronyWarning, stacklevel=2)
    if rank == 0:
        return np.zeros(0, dtype=complex), info
    ur, vr = u[:, :rank], vh[:rank].conj().T
    reduced = (ur.conj().T @ h1 @ vr) / s[:rank, None]
    nodes = np.linalg.eigvals(reduced)
    return nodes[np.argsort(-np.abs(nodes), kind="stable")], info


def solve_weights(nodes, tau, dedup_tol: float = 1e-8):
    """Weights from ``sum_j c_j z_j^l = tau_l`` for ``l < n``.

    Returns ``(weights, residual)`` where ``residual`` is the relative misfit
    on the remaining supplied moments ``tau_n .. tau_(2n-1)``.
    """
    nodes = np.asarray(nodes, dtype=complex)
    tau = np.asarray(tau, dtype=complex)
    n = nodes.size
    if n == 0:
        return np.zeros(0, dtype=complex), 0.0
    if tau.size < n:
        raise InvalidInputError(f"{n} nodes need at least {n} moments")
    scale = max(1.0, float(np.abs(nodes).max()))
    if n > 1:
        gaps = np.abs(nodes[:, None] - nodes[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() <= dedup_tol * scale:
            raise IllConditionedError(f"confluent nodes (separation {gaps.min():.2e})", condition=np.inf)
    vander = np.vander(nodes, n, increasing=True).T
    cond = float(np.linalg.cond(vander))
    if not np.isfinite(cond) or cond > 1e15:
        raise IllConditionedError(f"Vandermonde system is singular (cond {cond:.2e})", condition=cond)
    weights = np.linalg.solve(vander, tau[:n])
    extra = tau[n: 2 * n]
    if extra.size:
        model = np.vander(nodes, 2 * n, increasing=True).T[n: n + extra.size] @ weights
        denom = max(float(np.linalg.norm(tau[: 2 * n])), 1e-300)
        residual = float(np.linalg.norm(model - extra) / denom)
    else:
        residual = 0.0
    return weights, residual


def _merge_close(nodes, tol):
    """Average node clusters closer than ``tol``; returns (nodes, groups)."""
    groups = []
    for i, z in enumerate(nodes):
        for g in groups:
            if abs(nodes[g[0]] - z) <= tol:
                g.append(i)
                break
        else:
            groups.append([i])
    merged = np.array([nodes[g].mean() for g in groups], dtype=complex)
    return merged, groups


@dataclass(frozen=True, eq=False)
class PronySolution:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def moments(self, count: int) -> np.ndarray:
        """Model moments ``sum_j c_j z_j^l`` for ``l < count``."""
        if self.nodes.size == 0:
            return np.zeros(count, dtype=complex)
        return np.vander(self.nodes, count, increasing=True).T @ self.weights

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "n": self.n,
            "nodes": [[float(z.real), float(z.imag)] for z in self.nodes],
            "weights": [float(c.real) for c in self.weights],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PronySolution":
        try:
            if data.get("format") != FORMAT:
                raise ParseError(f"unexpected Prony file format {data.get('format')!r}")
            nodes = np.array([complex(x, y) for x, y in data["nodes"]], dtype=complex)
            weights = np.array(data["weights"], dtype=float).astype(complex)
            if nodes.shape != weights.shape:
                raise ParseError("nodes and weights differ in length")
            return cls(int(data["n"]), nodes, weights, dict(data.get("diagnostics", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad Prony solution: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "PronySolution":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)


def harmonic_moments(moments: MomentTable | np.ndarray) -> np.ndarray:
    if isinstance(moments, MomentTable):
        return np.asarray(moments.harmonic, dtype=complex)
    return np.asarray(moments, dtype=complex)


def prony_solve(tau, n: int, rel_cutoff: float = 1e-12, dedup_tol: float = 1e-8,
                zero_tol: float = 1e-8) -> PronySolution:
    """Two-stage Prony solve; complex weights are replaced by their real parts.

    Moments whose magnitude is below ``zero_tol`` everywhere give an empty
    solution (effective order 0).  The threshold is absolute: areas are
    measured in units where the outer domain is the unit disk.
    """
    tau = harmonic_moments(tau)
    h0, h1 = hankel_matrices(tau, n)
    diag: dict = {"requested_order": n}
    if n == 0 or np.abs(tau[: 2 * n]).max() <= zero_tol:
        diag.update(effective_order=0, residual=0.0)
        if n:
            warnings.warn("moments vanish: effective Prony order 0", PronyWarning, stacklevel=2)
        return PronySolution(n, np.zeros(0, complex), np.zeros(0, complex), diag)
    nodes, info = solve_pencil(h0, h1, rel_cutoff)
    diag.update(effective_order=info["effective_order"], pencil_condition=info["pencil_condition"],
                singular_values=info["singular_values"])
    scale = max(1.0, float(np.abs(nodes).max())) if nodes.size else 1.0
    merged, groups = _merge_close(nodes, dedup_tol * scale)
    if merged.size < nodes.size:
        warnings.warn(f"merged {nodes.size - merged.size} near-coalescent Prony nodes", PronyWarning, stacklevel=2)
        diag["merged_groups"] = [g for g in groups if len(g) > 1]
    nodes = merged
    weights, residual = solve_weights(nodes, tau, dedup_tol)
    full = np.vander(nodes, 2 * n, increasing=True).T @ weights if nodes.size else np.zeros(2 * n)
    reproduction = float(np.linalg.norm(full - tau[: 2 * n]) / max(np.linalg.norm(tau[: 2 * n]), 1e-300))
    imag = np.abs(weights.imag)
    diag.update(
        vandermonde_residual=residual,
        moment_residual=reproduction,
        weight_imag=imag.tolist(),
        max_weight_imag=float(imag.max()) if imag.size else 0.0,
        nonpositive_weights=[int(i) for i in np.flatnonzero(weights.real <= 0)],
    )
    if diag["nonpositive_weights"]:
        warnings.warn(f"{len(diag['nonpositive_weights'])} non-positive Prony weights", PronyWarning, stacklevel=2)
    log.info("Prony order %d: %d nodes, moment residual %.2e", n, nodes.size, reproduction)
    return PronySolution(n, nodes, weights.real.astype(complex), diag)
