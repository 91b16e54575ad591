"""Node sets, box domains, fill/separation distances and fixed-radius neighbor search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class EmptyNodeSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper on every axis, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> np.ndarray:
        """Closed-box membership; ``x`` has shape (..., s)."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def clamp(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Finite node set X (n x s). Grid metadata enables the closed-form fill distance."""

    points: np.ndarray
    box: BoxDomain | None = None
    counts: tuple | None = None
    masked: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise EmptyNodeSetError("node set is empty")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("node set contains duplicate points")
        if self.box is not None and not np.all(self.box.contains(pts)):
            raise ValueError("node set has points outside its box")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_tensor_grid(self) -> bool:
        return self.counts is not None and not self.masked and min(self.counts) >= 2

    def spacing(self) -> np.ndarray:
        if self.counts is None or self.box is None:
            raise ValueError("spacing is only defined for grid node sets")
        return self.box.widths / (np.asarray(self.counts, dtype=float) - 1.0)

    def scaled(self, scale) -> "NodeSet":
        """The same nodes in coordinates ``x / scale`` (box and grid metadata follow)."""
        scale = np.asarray(scale, dtype=float)
        box = None if self.box is None else BoxDomain(self.box.lower / scale, self.box.upper / scale)
        return NodeSet(self.points / scale, box=box, counts=self.counts, masked=self.masked)


@dataclass(frozen=True, eq=False)
class ObstacleMask:
    """Admissibility raster; row 0 is the top edge.

    ``origin`` is the (x, y) coordinate of the upper-left image corner and
    ``pixel_size`` the (dx, dy) extent of one pixel.
    """

    admissible: np.ndarray
    origin: tuple = (0.0, 0.0)
    pixel_size: tuple = (1.0, 1.0)
    luminance: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        adm = np.asarray(self.admissible, dtype=bool)
        if adm.ndim != 2:
            raise ValueError("mask must be 2-d")
        if not adm.any():
            raise ValueError("mask has no admissible cell")
        object.__setattr__(self, "admissible", adm)

    @property
    def height(self) -> int:
        return self.admissible.shape[0]

    @property
    def width(self) -> int:
        return self.admissible.shape[1]

    def pixel_of(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row, col, inside) for 2-d points; far-edge points map to the last pixel."""
        pts = np.asarray(pts, dtype=float)
        col = np.floor((pts[:, 0] - self.origin[0]) / self.pixel_size[0]).astype(np.int64)
        row = np.floor((self.origin[1] - pts[:, 1]) / self.pixel_size[1]).astype(np.int64)
        eps = 1e-9
        right = self.origin[0] + self.width * self.pixel_size[0]
        bottom = self.origin[1] - self.height * self.pixel_size[1]
        inside = (
            (pts[:, 0] >= self.origin[0] - eps)
            & (pts[:, 0] <= right + eps)
            & (pts[:, 1] <= self.origin[1] + eps)
            & (pts[:, 1] >= bottom - eps)
        )
        col = np.clip(col, 0, self.width - 1)
        row = np.clip(row, 0, self.height - 1)
        return row, col, inside

    def is_admissible(self, pts) -> np.ndarray:
        row, col, inside = self.pixel_of(pts)
        return inside & self.admissible[row, col]


def grid_nodes(box: BoxDomain, counts, mask: ObstacleMask | None = None) -> NodeSet:
    """Equidistant tensor grid including the box endpoints, axis 0 varying slowest."""
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != box.dim:
        raise ValueError(f"need {box.dim} grid counts, got {len(counts)}")
    if min(counts) < 1:
        raise ValueError("grid counts must be >= 1")
    axes = [np.linspace(lo, hi, c) for lo, hi, c in zip(box.lower, box.upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if mask is not None:
        if box.dim != 2:
            raise ValueError("obstacle masks are 2-d")
        keep = mask.is_admissible(pts)
        pts = pts[keep]
        if pts.shape[0] == 0:
            raise EmptyNodeSetError("obstacle mask excludes every grid node")
    return NodeSet(pts, box=box, counts=counts, masked=mask is not None)


def fill_distance(nodes: NodeSet, box: BoxDomain | None = None, sample: int | None = None) -> float:
    """max over the box of the distance to the nearest node.

    Closed form (half cell diagonal) for unmasked tensor grids, otherwise a
    maximum over a sample grid with ``sample`` points per axis.
    """
    same_box = box is None or (
        nodes.box is not None
        and np.array_equal(nodes.box.lower, box.lower)
        and np.array_equal(nodes.box.upper, box.upper)
    )
    box = box if box is not None else nodes.box
    if box is None:
        raise ValueError("fill distance needs a domain box")
    if nodes.is_tensor_grid and sample is None and same_box:
        half = nodes.spacing() / 2.0
        return float(np.sqrt(np.sum(half * half)))
    if sample is None:
        sample = max(2, int(math.ceil(4 * nodes.n ** (1.0 / box.dim))))
    axes = [np.linspace(lo, hi, sample) for lo, hi in zip(box.lower, box.upper)]
    tree = cKDTree(nodes.points)
    worst = 0.0
    # chunk over the first axis to bound memory
    rest = np.stack([m.ravel() for m in np.meshgrid(*axes[1:], indexing="ij")], axis=1) if box.dim > 1 else None
    for x0 in axes[0]:
        if rest is None:
            q = np.array([[x0]])
        else:
            q = np.column_stack([np.full(rest.shape[0], x0), rest])
        d, _ = tree.query(q)
        worst = max(worst, float(d.max()))
    return worst


def separation_distance(nodes: NodeSet) -> float:
    if nodes.n < 2:
        raise ValueError("separation distance needs at least two nodes")
    d, _ = cKDTree(nodes.points).query(nodes.points, k=2)
    return 0.5 * float(d[:, 1].min())


def _cell_keys(cells: np.ndarray, radix: np.ndarray) -> np.ndarray:
    key = np.zeros(cells.shape[0], dtype=np.int64)
    for axis in range(cells.shape[1]):
        key = key * radix[axis] + cells[:, axis]
    return key


def radius_neighbors(a, b, r: float, chunk_pairs: int = 4_000_000):
    """All pairs (i, j, d) with ``d = ||a_i - b_j||_2 <= r``, sorted by (i, j).

    Uniform cell bucketing with edge ``r``; each point of ``a`` scans the 3^s
    cells around its own.
    """
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    a = np.asarray(a.points if isinstance(a, NodeSet) else a, dtype=float)
    b = np.asarray(b.points if isinstance(b, NodeSet) else b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError("point sets differ in dimension")
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        return empty
    s = a.shape[1]
    edge = r * (1.0 + 1e-9)
    origin = np.minimum(a.min(axis=0), b.min(axis=0))
    # shift by one so that neighbor offsets stay nonnegative
    cell_a = np.floor((a - origin) / edge).astype(np.int64) + 1
    cell_b = np.floor((b - origin) / edge).astype(np.int64) + 1
    radix = np.maximum(cell_a.max(axis=0), cell_b.max(axis=0)) + 2
    if math.prod(int(x) for x in radix) >= 2**62:
        raise ValueError("radius too small relative to the point spread for cell hashing")
    key_b = _cell_keys(cell_b, radix)
    order = np.argsort(key_b, kind="stable")
    sorted_keys = key_b[order]

    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=s)), dtype=np.int64)
    per_point = max(1.0, b.shape[0] / max(1, np.unique(sorted_keys).size)) * len(offsets)
    chunk = max(1, int(chunk_pairs / per_point))

    out_i, out_j, out_d = [], [], []
    for start in range(0, a.shape[0], chunk):
        stop = min(start + chunk, a.shape[0])
        ca = cell_a[start:stop]
        for off in offsets:
            keys = _cell_keys(ca + off, radix)
            lo = np.searchsorted(sorted_keys, keys, side="left")
            hi = np.searchsorted(sorted_keys, keys, side="right")
            cnt = hi - lo
            total = int(cnt.sum())
            if total == 0:
                continue
            ii = np.repeat(np.arange(start, stop, dtype=np.int64), cnt)
            first = np.repeat(lo - (np.cumsum(cnt) - cnt), cnt)
            jj = order[first + np.arange(total, dtype=np.int64)]
            diff = a[ii] - b[jj]
            d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            keep = d <= r
            out_i.append(ii[keep])
            out_j.append(jj[keep])
            out_d.append(d[keep])
    if not out_i:
        return empty
    i = np.concatenate(out_i)
    j = np.concatenate(out_j)
    d = np.concatenate(out_d)
    perm = np.lexsort((j, i))
    return i[perm], j[perm], d[perm]


def sigma_for_overlap(nodes: NodeSet, count: int) -> float:
    """Shape parameter whose support ball around a central node holds ~``count`` other nodes.

    The radius is placed midway between the ``count``-th and the next nearest
    neighbor distance of the node closest to the centroid.
    """
    if count < 1 or count >= nodes.n:
        raise ValueError(f"overlap count must be in [1, n-1], got {count}")
    pts = nodes.points
    center = pts.mean(axis=0) if nodes.box is None else 0.5 * (nodes.box.lower + nodes.box.upper)
    c = int(np.argmin(np.linalg.norm(pts - center, axis=1)))
    d = np.sort(np.linalg.norm(pts - pts[c], axis=1))[1:]
    radius = 0.5 * (d[count - 1] + d[count])
    return 1.0 / radius
