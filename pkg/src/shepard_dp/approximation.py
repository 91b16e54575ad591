"""Shepard approximation as a sparse row-stochastic matrix, and RBF interpolation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from shepard_dp.geometry import NodeSet, radius_neighbors
from shepard_dp.kernels import GAUSSIAN_CUTOFF, ShapeFunction, eval_shape

logger = logging.getLogger(__name__)


class ConditioningError(np.linalg.LinAlgError):
    pass


@dataclass
class ShepardMatrix:
    """``A(Y)`` with entries ``psi_j(y_i)``; rows with no node in range are ``uncovered``."""

    matrix: sp.csr_matrix
    uncovered: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def to_coo_text(self) -> str:
        """Coordinate listing ``i j value`` for debugging."""
        coo = self.matrix.tocoo()
        lines = [f"{self.shape[0]} {self.shape[1]} {coo.nnz}"]
        lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
        return "\n".join(lines) + "\n"


def _as_points(x, dim=None) -> np.ndarray:
    pts = np.asarray(x.points if isinstance(x, NodeSet) else x, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if dim in (None, 1) else pts[None, :]
    return pts


def shepard_matrix(nodes: NodeSet, k: ShapeFunction, y) -> ShepardMatrix:
    """Assemble ``w(x_j, y_i) / sum_l w(x_l, y_i)`` over the support-radius neighbor pairs."""
    x = _as_points(nodes)
    y = _as_points(y, x.shape[1])
    e, n = y.shape[0], x.shape[0]
    i, j, d = radius_neighbors(y, x, k.cutoff_radius)
    w = eval_shape(k, d)
    if k.kind == "gaussian":
        w = np.where(w < GAUSSIAN_CUTOFF, 0.0, w)
    keep = w > 0
    i, j, w = i[keep], j[keep], w[keep]
    denom = np.bincount(i, weights=w, minlength=e)
    uncovered = denom == 0
    vals = w / denom[i]
    indptr = np.concatenate(([0], np.cumsum(np.bincount(i, minlength=e))))
    mat = sp.csr_matrix((vals, j, indptr), shape=(e, n))
    mat.has_sorted_indices = True
    return ShepardMatrix(mat, uncovered)


def shepard_apply(a: ShepardMatrix, vhat) -> np.ndarray:
    vhat = np.asarray(vhat, dtype=float)
    if vhat.shape != (a.shape[1],):
        raise ValueError(f"coefficient vector has shape {vhat.shape}, expected ({a.shape[1]},)")
    return a.matrix @ vhat


def kernel_matrix(nodes: NodeSet, k: ShapeFunction, y) -> sp.csr_matrix:
    """Sparse ``(phi(||y_i - x_j||))_{ij}`` without normalization."""
    x = _as_points(nodes)
    y = _as_points(y, x.shape[1])
    i, j, d = radius_neighbors(y, x, k.cutoff_radius)
    return sp.csr_matrix((eval_shape(k, d), (i, j)), shape=(y.shape[0], x.shape[0]))


class Interpolant:
    """Dense RBF interpolation operator on a fixed node set.

    Factorizes ``(phi_j(x_i))`` once; ``coefficients`` solves for prescribed
    nodal values and ``__call__`` evaluates the expansion at new points.
    """

    def __init__(self, nodes: NodeSet, k: ShapeFunction, max_condition: float = 1e12):
        self.nodes = nodes
        self.kernel = k
        gram = kernel_matrix(nodes, k, nodes).toarray()
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > max_condition:
            raise ConditioningError(f"interpolation matrix condition estimate {cond:.3g} exceeds {max_condition:.0e}")
        self.condition = cond
        self._lu = scipy.linalg.lu_factor(gram)

    def coefficients(self, values) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, np.asarray(values, dtype=float))

    def evaluation_matrix(self, y) -> sp.csr_matrix:
        return kernel_matrix(self.nodes, self.kernel, y)

    def __call__(self, values, y) -> np.ndarray:
        return self.evaluation_matrix(y) @ self.coefficients(values)


def interpolate(nodes: NodeSet, k: ShapeFunction, values, y) -> np.ndarray:
    return Interpolant(nodes, k)(values, y)
