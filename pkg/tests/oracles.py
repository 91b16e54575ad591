"""Independent reference implementations used as test oracles.

Nothing here imports the solver or the Shepard assembly; only the problem
definitions (f, c, Omega, T) are shared, since those define the system.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


def wendland(sigma: float, r: float) -> float:
    t = sigma * r
    return (1.0 - t) ** 4 * (4.0 * t + 1.0) if t < 1.0 else 0.0


def shepard_row(nodes, sigma, y, scale):
    """psi_j(y) for every node by direct summation; None when no weight is positive."""
    w = []
    for x in nodes:
        r = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(x, y, scale)))
        w.append(wendland(sigma, r))
    total = math.fsum(w)
    if total == 0.0:
        return None
    return [wi / total for wi in w]


def enumerate_system(p, nodes, sigma):
    """Per node, a list of (weight e^{-c}, kind, payload) over every control.

    kind is 'target' (value 1), 'outside' (value 0) or 'interior' (payload =
    Shepard row of the image, or None when uncovered).
    """
    scale = [float(s) for s in p.metric_scale]
    pts = [list(map(float, x)) for x in nodes]
    table = []
    for x in pts:
        entries = []
        for u in p.controls:
            y = np.asarray(p.step(np.array(x), u), dtype=float).reshape(-1)
            c = float(p.cost(np.array(x), u))
            if not np.all(np.isfinite(y)) or not bool(np.all(p.in_domain(y[None]))):
                entries.append((math.exp(-c), "outside", None))
            elif bool(np.all(p.in_target(y[None]))):
                entries.append((math.exp(-c), "target", None))
            else:
                entries.append((math.exp(-c), "interior", shepard_row(pts, sigma, list(y), scale)))
        table.append(entries)
    in_t = [bool(np.all(p.in_target(np.array([x])))) for x in pts]
    return table, in_t


def backward_induction(p, nodes, sigma, tol=1e-14, max_stages=100000):
    """Stage-by-stage dynamic programming v_{N+1} = max_u e^{-c} vbar_N(f), from v_0 = 0, until stationary."""
    table, in_t = enumerate_system(p, nodes, sigma)
    n = len(table)
    v = [0.0] * n
    for _ in range(max_stages):
        new = []
        for i in range(n):
            if in_t[i]:
                new.append(1.0)
                continue
            best = 0.0
            for weight, kind, row in table[i]:
                if kind == "target":
                    val = 1.0
                elif kind == "outside" or row is None:
                    val = 0.0
                else:
                    val = math.fsum(a * b for a, b in zip(row, v))
                best = max(best, weight * val)
            new.append(best)
        change = max(abs(a - b) for a, b in zip(new, v))
        v = new
        if change <= tol:
            break
    return np.array(v)


def lattice_distances(free: np.ndarray, goal: tuple, spacing: float) -> np.ndarray:
    """Shortest path lengths from ``goal`` on a 16-neighbor lattice over the free cells.

    ``free`` is indexed like the node grid (axis 0 = first coordinate). Moves
    are the 8 king moves plus the 8 knight moves, each of Euclidean length;
    a move is allowed when both endpoints are free.
    """
    nx, ny = free.shape
    idx = -np.ones(free.shape, dtype=np.int64)
    idx[free] = np.arange(int(free.sum()))
    moves = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    rows, cols, lens = [], [], []
    for dx, dy in moves:
        for i in range(nx):
            for j in range(ny):
                a, b = i + dx, j + dy
                if 0 <= a < nx and 0 <= b < ny and free[i, j] and free[a, b]:
                    rows.append(idx[i, j])
                    cols.append(idx[a, b])
                    lens.append(math.hypot(dx, dy) * spacing)
    m = int(free.sum())
    g = coo_matrix((lens, (rows, cols)), shape=(m, m)).tocsr()
    dist = dijkstra(g, directed=False, indices=int(idx[goal]))
    out = np.full(free.shape, np.inf)
    out[free] = dist
    return out
