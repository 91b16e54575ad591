"""Kruzkov-transformed Bellman operator, its Shepard projection, and value iteration."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from shepard_dp.approximation import ShepardMatrix, shepard_matrix
from shepard_dp.geometry import NodeSet
from shepard_dp.kernels import ShapeFunction
from shepard_dp.problems import ControlProblem

logger = logging.getLogger(__name__)

INTERIOR, TARGET, OUTSIDE = 0, 1, 2


class DegenerateProblemWarning(UserWarning):
    pass


@dataclass
class TransitionTable:
    """All node/control images ``f(x_i, u_j)`` laid out i-major, j-minor.

    ``image_matrix`` has one row per (i, j) pair; rows of target/outside
    images are empty and their contribution sits in ``image_const``
    (1 for target images, 0 otherwise).
    """

    images: np.ndarray  # (n, m, s)
    weights: np.ndarray  # (n, m), exp(-c)
    costs: np.ndarray  # (n, m)
    image_class: np.ndarray  # (n, m) of INTERIOR / TARGET / OUTSIDE
    image_matrix: ShepardMatrix
    image_const: np.ndarray  # (n*m,)
    node_in_target: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @property
    def n_uncovered(self) -> int:
        inner = (self.image_class == INTERIOR).ravel()
        return int(np.count_nonzero(self.image_matrix.uncovered & inner))

    def contraction_bound(self) -> float:
        """Sup-norm Lipschitz constant: largest e^{-c} over pairs with an interior image."""
        live = (self.image_class == INTERIOR) & ~self.node_in_target[:, None]
        if not live.any():
            return 0.0
        return float(self.weights[live].max())


@dataclass
class SolveReport:
    iterations: int
    residuals: list
    contraction_bound: float
    wall_time: float
    converged: bool
    n_uncovered: int = 0

    @property
    def delta(self) -> float:
        return -math.log(self.contraction_bound) if self.contraction_bound > 0 else math.inf


def classify_images(p: ControlProblem, images: np.ndarray) -> np.ndarray:
    flat = images.reshape(-1, p.dim)
    cls = np.full(flat.shape[0], OUTSIDE, dtype=np.int8)
    finite = np.all(np.isfinite(flat), axis=1)
    inside = np.zeros(flat.shape[0], dtype=bool)
    inside[finite] = p.in_domain(flat[finite])
    cls[inside] = INTERIOR
    in_t = np.zeros(flat.shape[0], dtype=bool)
    in_t[finite] = p.in_target(flat[finite])
    cls[in_t] = TARGET
    return cls.reshape(images.shape[:-1])


def assemble_transitions(p: ControlProblem, nodes: NodeSet, k: ShapeFunction) -> TransitionTable:
    if nodes.dim != p.dim:
        raise ValueError(f"nodes are {nodes.dim}-d, problem is {p.dim}-d")
    if not np.all(p.domain.contains(nodes.points)):
        raise ValueError("nodes must lie in the problem domain")
    x = nodes.points
    u = p.controls
    images = np.asarray(p.step(x[:, None, :], u[None, :, :]), dtype=float)
    images = np.broadcast_to(images, (nodes.n, p.m, p.dim)).copy()
    costs = np.broadcast_to(p.cost(x[:, None, :], u[None, :, :]), (nodes.n, p.m)).astype(float)
    cls = classify_images(p, images)
    node_in_target = p.in_target(x)

    flat_cls = cls.ravel()
    interior = np.flatnonzero(flat_cls == INTERIOR)
    scale = p.metric_scale
    sub = shepard_matrix(nodes.scaled(scale), k, images.reshape(-1, p.dim)[interior] / scale)
    # scatter the interior rows into the full (n*m) x n layout
    counts = np.zeros(nodes.n * p.m, dtype=np.int64)
    counts[interior] = np.diff(sub.matrix.indptr)
    indptr = np.concatenate(([0], np.cumsum(counts)))
    full = sp.csr_matrix((sub.matrix.data, sub.matrix.indices, indptr), shape=(nodes.n * p.m, nodes.n))
    full.has_sorted_indices = True
    uncovered = np.zeros(nodes.n * p.m, dtype=bool)
    uncovered[interior] = sub.uncovered

    table = TransitionTable(
        images=images,
        weights=np.exp(-costs),
        costs=costs,
        image_class=cls,
        image_matrix=ShepardMatrix(full, uncovered),
        image_const=(flat_cls == TARGET).astype(float),
        node_in_target=node_in_target,
    )
    if not node_in_target.any() and not (flat_cls == TARGET).any():
        import warnings

        warnings.warn(
            f"{p.name}: no node and no image lies in the target set; the value function is identically 0",
            DegenerateProblemWarning,
            stacklevel=2,
        )
    if table.n_uncovered:
        logger.info("%d interior images are outside every kernel support (treated as 0)", table.n_uncovered)
    return table


def bellman_apply(t: TransitionTable, vhat: np.ndarray) -> np.ndarray:
    """One step of the Bellman-Shepard operator on the coefficient vector."""
    vbar = t.image_matrix.matrix @ vhat + t.image_const
    out = (t.weights * vbar.reshape(t.n, t.m)).max(axis=1)
    out[t.node_in_target] = 1.0
    return out


def value_iteration(
    t: TransitionTable,
    v0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 2000,
    callback=None,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate ``v <- bellman_apply(v)`` until the sup-norm update is <= ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = np.zeros(t.n) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (t.n,):
        raise ValueError(f"initial vector has shape {v.shape}, expected ({t.n},)")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("initial values must lie in [0, 1]")
    start = time.perf_counter()
    residuals = []
    converged = False
    for _ in range(max_iter):
        new = bellman_apply(t, v)
        residuals.append(float(np.max(np.abs(new - v))))
        v = new
        if callback is not None:
            callback(v)
        if residuals[-1] <= tol:
            converged = True
            break
    report = SolveReport(
        iterations=len(residuals),
        residuals=residuals,
        contraction_bound=t.contraction_bound(),
        wall_time=time.perf_counter() - start,
        converged=converged,
        n_uncovered=t.n_uncovered,
    )
    if not converged:
        logger.warning("value iteration stopped after %d iterations (residual %.3g)", max_iter, residuals[-1])
    return v, report


def to_value(vhat, floor: float = 1e-20) -> np.ndarray:
    """``-log(v)``, with +inf wherever ``v <= floor``."""
    if not 0 < floor < 1:
        raise ValueError("floor must lie in (0, 1)")
    v = np.asarray(vhat, dtype=float)
    out = np.full(v.shape, np.inf)
    ok = v > floor
    out[ok] = -np.log(v[ok]) + 0.0  # no negative zeros
    return out


@dataclass
class Solution:
    """Bundle of everything needed to evaluate the approximate value function off-node."""

    problem: ControlProblem
    nodes: NodeSet
    kernel: ShapeFunction
    vhat: np.ndarray
    report: SolveReport
    table: TransitionTable | None = field(default=None, repr=False)


def solve(p: ControlProblem, nodes: NodeSet, k: ShapeFunction, tol=1e-10, max_iter=2000, v0=None) -> Solution:
    t = assemble_transitions(p, nodes, k)
    vhat, report = value_iteration(t, v0=v0, tol=tol, max_iter=max_iter)
    return Solution(p, nodes, k, vhat, report, t)
