"""Windows, point files, a bucket grid index and planar Voronoi cells."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

__all__ = [
    "GeometryError",
    "DegenerateSiteError",
    "InsufficientPointsError",
    "Window",
    "ball_volume",
    "as_points",
    "GridIndex",
    "build_index",
    "range_query",
    "knn_query",
    "VoronoiCell",
    "voronoi_cell_2d",
    "voronoi_cells_2d",
    "write_points_csv",
    "read_points_csv",
]


class GeometryError(ValueError):
    pass


class DegenerateSiteError(GeometryError):
    """Two sites share the same coordinates."""


class InsufficientPointsError(GeometryError):
    """A neighbour query asked for more points than exist."""


def ball_volume(d: int, r: float = 1.0) -> float:
    """Lebesgue volume of a Euclidean ball of radius r in dimension d."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if r < 0:
        raise ValueError("radius must be non-negative")
    # omega_d = omega_{d-2} * 2 pi / d from omega_0 = 1, omega_1 = 2
    omega = 2.0 if d % 2 else 1.0
    for k in range(2 + d % 2, d + 1, 2):
        omega *= 2.0 * math.pi / k
    return omega * r**d


def as_points(points, dimension: int | None = None) -> np.ndarray:
    """Coerce to a float array of shape (n, d); rejects NaN/inf."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        if dimension is None:
            if arr.ndim == 2:
                return arr.reshape(0, arr.shape[1])
            raise GeometryError("cannot infer the dimension of an empty configuration")
        return np.zeros((0, int(dimension)))
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dimension in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise GeometryError(f"points must be a 2d array, got shape {arr.shape}")
    if dimension is not None and arr.shape[1] != dimension:
        raise GeometryError(f"expected dimension {dimension}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Window:
    """Centred cube [-half_width, half_width]^d."""

    half_width: float
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError("dimension must be at least 1")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise GeometryError("half_width must be positive and finite")

    @classmethod
    def from_volume(cls, volume: float, dimension: int) -> "Window":
        if volume <= 0:
            raise GeometryError("volume must be positive")
        return cls(0.5 * volume ** (1.0 / dimension), dimension)

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    @property
    def volume(self) -> float:
        return self.side**self.dimension

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(self.dimension)

    @property
    def lower(self) -> np.ndarray:
        return np.full(self.dimension, -self.half_width)

    @property
    def upper(self) -> np.ndarray:
        return np.full(self.dimension, self.half_width)

    def enlarged(self, margin: float) -> "Window":
        return Window(self.half_width + max(0.0, float(margin)), self.dimension)

    def contains(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        return np.all(np.abs(pts) <= self.half_width, axis=1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-self.half_width, self.half_width, size=(n, self.dimension))


# ---------------------------------------------------------------------------
# bucket grid


class GridIndex:
    """Uniform bucket grid over a finite point set.

    ``buckets`` maps integer cell coordinates to lists of point indices.
    Queries are exact; the grid only prunes the search.
    """

    def __init__(self, points, cell_size: float, dimension: int | None = None):
        if not (cell_size > 0 and math.isfinite(cell_size)):
            raise GeometryError("cell_size must be positive and finite")
        self.points = as_points(points, dimension)
        self.dimension = self.points.shape[1]
        self.cell_size = float(cell_size)
        self.buckets: dict[tuple, list[int]] = {}
        for i, key in enumerate(map(tuple, np.floor(self.points / self.cell_size).astype(np.int64))):
            self.buckets.setdefault(key, []).append(i)
        if self.buckets:
            keys = np.array(list(self.buckets))
            self._kmin, self._kmax = keys.min(axis=0), keys.max(axis=0)

    def __len__(self):
        return len(self.points)

    def cell_of(self, x) -> tuple:
        x = np.asarray(x, dtype=float).reshape(self.dimension)
        return tuple(np.floor(x / self.cell_size).astype(np.int64))

    def _cells_in_box(self, lo, hi):
        ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
        count = np.prod([len(r) for r in ranges])
        if count > 4 * len(self.buckets):
            # cheaper to scan the occupied buckets
            for key in self.buckets:
                if all(a <= k <= b for k, a, b in zip(key, lo, hi)):
                    yield key
            return
        for key in product(*ranges):
            if key in self.buckets:
                yield key

    def range_query(self, center, radius: float) -> np.ndarray:
        """Indices of points within closed distance ``radius`` of ``center``."""
        if radius < 0:
            raise GeometryError("radius must be non-negative")
        center = np.asarray(center, dtype=float).reshape(self.dimension)
        if not self.buckets:
            return np.zeros(0, dtype=np.int64)
        lo = np.floor((center - radius) / self.cell_size).astype(np.int64)
        hi = np.floor((center + radius) / self.cell_size).astype(np.int64)
        lo, hi = np.maximum(lo, self._kmin), np.minimum(hi, self._kmax)
        cand = [i for key in self._cells_in_box(lo, hi) for i in self.buckets[key]]
        if not cand:
            return np.zeros(0, dtype=np.int64)
        cand = np.array(sorted(cand), dtype=np.int64)
        dist = np.linalg.norm(self.points[cand] - center, axis=1)
        return cand[dist <= radius]

    def knn_query(self, x, k: int) -> np.ndarray:
        """Indices of the k nearest indexed points to x, excluding copies of x.

        Ties are broken by lexicographic order of coordinates.
        """
        if k < 1:
            raise GeometryError("k must be at least 1")
        x = np.asarray(x, dtype=float).reshape(self.dimension)
        others = int(np.sum(np.any(self.points != x, axis=1))) if len(self) else 0
        if others < k:
            raise InsufficientPointsError(f"asked for {k} neighbours but only {others} points are available")
        c = np.array(self.cell_of(x))
        ring_max = int(max(np.max(np.abs(self._kmin - c)), np.max(np.abs(self._kmax - c))))
        seen: list[int] = []
        for ring in range(ring_max + 1):
            if ring == 0:
                keys = [tuple(c)]
            else:
                keys = [
                    key
                    for key in self._cells_in_box(c - ring, c + ring)
                    if max(abs(a - b) for a, b in zip(key, c)) == ring
                ]
            for key in keys:
                seen.extend(self.buckets.get(key, ()))
            cand = np.array(seen, dtype=np.int64)
            if len(cand) == 0:
                continue
            pts = self.points[cand]
            keep = np.any(pts != x, axis=1)
            cand, pts = cand[keep], pts[keep]
            dist = np.linalg.norm(pts - x, axis=1)
            if np.sum(dist <= ring * self.cell_size) >= k or ring == ring_max:
                order = np.lexsort(tuple(pts[:, j] for j in range(self.dimension - 1, -1, -1)) + (dist,))
                return cand[order[:k]]
        raise AssertionError("unreachable")  # pragma: no cover


def build_index(points, cell_size: float, dimension: int | None = None) -> GridIndex:
    return GridIndex(points, cell_size, dimension)


def range_query(index: GridIndex, center, radius: float) -> np.ndarray:
    """Points of the index within distance ``radius`` of ``center``."""
    return index.points[index.range_query(center, radius)]


def knn_query(index: GridIndex, x, k: int) -> np.ndarray:
    """The k nearest indexed points to x (copies of x excluded)."""
    return index.points[index.knn_query(x, k)]


# ---------------------------------------------------------------------------
# planar Voronoi cells by half-plane clipping


@njit(cache=True)
def _clip(px, py, lab, n, a, b, c, label, ox, oy, olab):
    """Keep the part of a convex polygon with a*x + b*y <= c.

    ``lab[i]`` labels the edge leaving vertex i.  Returns the new vertex count.
    """
    m = 0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        si = a * px[i] + b * py[i] - c
        sj = a * px[j] + b * py[j] - c
        if si <= 0.0:
            ox[m] = px[i]
            oy[m] = py[i]
            olab[m] = lab[i]
            m += 1
            if sj > 0.0:
                t = si / (si - sj)
                ox[m] = px[i] + t * (px[j] - px[i])
                oy[m] = py[i] + t * (py[j] - py[i])
                olab[m] = label
                m += 1
        elif sj <= 0.0:
            t = si / (si - sj)
            ox[m] = px[i] + t * (px[j] - px[i])
            oy[m] = py[i] + t * (py[j] - py[i])
            olab[m] = lab[i]
            m += 1
    # drop repeated vertices (zero-length edges)
    k = 0
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        if m > 1 and ox[i] == ox[j] and oy[i] == oy[j]:
            continue
        ox[k] = ox[i]
        oy[k] = oy[i]
        olab[k] = olab[i]
        k += 1
    return k


@njit(cache=True)
def _cells_kernel(pts, rows, cand, box_lo, box_hi, n_total):
    """Clip the cells of ``pts[rows]`` against bisectors of candidate sites.

    ``cand[r]`` holds indices sorted by distance (``-1`` padded).  A cell is
    complete once the next candidate is farther than twice the current cell
    radius, or once every site has been used.  Vertices are returned relative
    to the site.
    """
    nr = rows.shape[0]
    k = cand.shape[1]
    cap = k + 8
    vx = np.empty(nr * cap)
    vy = np.empty(nr * cap)
    vl = np.empty(nr * cap, dtype=np.int64)
    counts = np.zeros(nr, dtype=np.int64)
    status = np.zeros(nr, dtype=np.int64)  # 0 ok, 1 need more candidates, 2 duplicate
    px = np.empty(cap)
    py = np.empty(cap)
    pl = np.empty(cap, dtype=np.int64)
    qx = np.empty(cap)
    qy = np.empty(cap)
    ql = np.empty(cap, dtype=np.int64)
    for r in range(nr):
        i = rows[r]
        x0 = pts[i, 0]
        y0 = pts[i, 1]
        px[0] = box_lo[0] - x0
        py[0] = box_lo[1] - y0
        px[1] = box_hi[0] - x0
        py[1] = box_lo[1] - y0
        px[2] = box_hi[0] - x0
        py[2] = box_hi[1] - y0
        px[3] = box_lo[0] - x0
        py[3] = box_hi[1] - y0
        for t in range(4):
            pl[t] = -1
        m = 4
        used = 0
        complete = False
        for jj in range(k):
            j = cand[r, jj]
            if j < 0:
                complete = True
                break
            if j == i:
                used += 1
                continue
            ax = pts[j, 0] - x0
            ay = pts[j, 1] - y0
            d2 = ax * ax + ay * ay
            if d2 == 0.0:
                status[r] = 2
                break
            rmax2 = 0.0
            for t in range(m):
                v = px[t] * px[t] + py[t] * py[t]
                if v > rmax2:
                    rmax2 = v
            if d2 > 4.0 * rmax2:
                complete = True
                break
            m = _clip(px, py, pl, m, ax, ay, 0.5 * d2, j, qx, qy, ql)
            for t in range(m):
                px[t] = qx[t]
                py[t] = qy[t]
                pl[t] = ql[t]
            used += 1
        if status[r] == 2:
            continue
        if not complete and used >= n_total:
            complete = True
        if not complete:
            status[r] = 1
        counts[r] = m
        base = r * cap
        for t in range(m):
            vx[base + t] = px[t]
            vy[base + t] = py[t]
            vl[base + t] = pl[t]
    return vx, vy, vl, counts, status, cap


def _planar_cells(pts: np.ndarray, box_lo, box_hi, k0: int = 16):
    """Cells of all sites clipped to a box; lists of (relative vertices, labels)."""
    n = len(pts)
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    verts: list = [None] * n
    labels: list = [None] * n
    if n == 0:
        return verts, labels
    tree = cKDTree(pts)
    rows = np.arange(n, dtype=np.int64)
    k = min(k0, n)
    while len(rows):
        if k >= n:
            cand = np.tile(np.arange(n, dtype=np.int64), (len(rows), 1))
            dist = np.linalg.norm(pts[cand] - pts[rows][:, None, :], axis=2)
            cand = np.take_along_axis(cand, np.argsort(dist, axis=1, kind="stable"), axis=1)
        else:
            _, cand = tree.query(pts[rows], k=k)
            cand = np.asarray(cand, dtype=np.int64).reshape(len(rows), k)
        vx, vy, vl, counts, status, cap = _cells_kernel(pts, rows, cand, box_lo, box_hi, n)
        if np.any(status == 2):
            raise DegenerateSiteError("duplicate sites at identical coordinates")
        for r in np.flatnonzero(status == 0):
            base = r * cap
            m = counts[r]
            verts[rows[r]] = np.column_stack([vx[base : base + m], vy[base : base + m]])
            labels[rows[r]] = vl[base : base + m].copy()
        rows = rows[status == 1]
        k = min(4 * k, n)
    return verts, labels


@dataclass
class VoronoiCell:
    """Planar Voronoi cell of ``site``.

    For bounded cells ``vertices`` is the counter-clockwise polygon and
    ``edge_labels[i]`` is the index of the neighbouring site whose bisector
    carries the edge from vertex i to vertex i+1.  Unbounded cells keep only
    their finite edges.
    """

    site: np.ndarray
    vertices: np.ndarray
    edge_labels: np.ndarray
    bounded: bool
    edges: list = field(default_factory=list)

    @property
    def perimeter(self) -> float:
        return float(sum(np.linalg.norm(b - a) for a, b in self.edges))

    @property
    def area(self) -> float:
        if not self.bounded:
            return math.inf
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _big_box(pts: np.ndarray):
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo)) + 1.0
    pad = 1e4 * span
    return lo - pad, hi + pad


def _finite_edges(rel: np.ndarray, lab: np.ndarray):
    """Indices of edges whose endpoints both lie on site bisectors."""
    m = len(lab)
    keep = []
    for i in range(m):
        if lab[i] >= 0 and lab[i - 1] >= 0 and lab[(i + 1) % m] >= 0:
            keep.append(i)
    return keep


def _make_cell(site, rel, lab) -> VoronoiCell:
    m = len(lab)
    bounded = bool(np.all(lab >= 0)) and m >= 3
    finite = _finite_edges(rel, lab)
    edges = [(site + rel[i], site + rel[(i + 1) % m]) for i in finite]
    if bounded:
        return VoronoiCell(site, site + rel, lab.copy(), True, edges)
    # unbounded: keep the finite chain only
    idx = sorted(set(finite) | {(i + 1) % m for i in finite})
    return VoronoiCell(site, site + rel[idx], lab[idx].copy(), False, edges)


def voronoi_cells_2d(points, box=None) -> list[VoronoiCell]:
    """Voronoi cells of every site.

    With ``box=(lo, hi)`` cells are clipped to the box and edges on the box
    carry label -1.  Without a box, cells touching infinity are flagged
    unbounded.
    """
    pts = as_points(points, 2)
    if len(pts) == 0:
        return []
    if box is None:
        lo, hi = _big_box(pts)
        verts, labels = _planar_cells(pts, lo, hi)
        return [_make_cell(pts[i], verts[i], labels[i]) for i in range(len(pts))]
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    verts, labels = _planar_cells(pts, lo, hi)
    out = []
    for i in range(len(pts)):
        rel, lab = verts[i], labels[i]
        edges = [(pts[i] + rel[t], pts[i] + rel[(t + 1) % len(lab)]) for t in range(len(lab))]
        out.append(VoronoiCell(pts[i], pts[i] + rel, lab.copy(), True, edges))
    return out


def voronoi_cell_2d(x, X, box=None) -> VoronoiCell:
    """Voronoi cell of x with respect to X ∪ {x}.

    x may be listed in X once; edge labels index the remaining sites of X.
    Repeated sites raise DegenerateSiteError.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    pts = as_points(X, 2)
    same = np.flatnonzero(np.all(pts == x, axis=1)) if len(pts) else np.zeros(0, dtype=np.int64)
    keep_idx = np.arange(len(pts))
    if len(same):
        keep_idx = np.delete(keep_idx, same[0])
    pts = pts[keep_idx]
    if len(pts) and len(np.unique(np.vstack([pts, x[None, :]]), axis=0)) < len(pts) + 1:
        raise DegenerateSiteError("duplicate sites at identical coordinates")
    allpts = np.vstack([x[None, :], pts])
    if box is None:
        lo, hi = _big_box(allpts)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    rows = np.array([0], dtype=np.int64)
    n = len(allpts)
    dist = np.linalg.norm(allpts - x, axis=1)
    cand = np.argsort(dist, kind="stable").astype(np.int64)[None, :]
    vx, vy, vl, counts, status, cap = _cells_kernel(allpts, rows, cand, lo, hi, n)
    if status[0] == 2:
        raise DegenerateSiteError("duplicate sites at identical coordinates")
    m = counts[0]
    rel = np.column_stack([vx[:m], vy[:m]])
    lookup = np.concatenate([[-1], keep_idx])  # kernel label j > 0 is allpts[j] = X[keep_idx[j - 1]]
    lab = np.where(vl[:m] >= 0, lookup[np.maximum(vl[:m], 0)], -1)
    if box is not None:
        edges = [(x + rel[t], x + rel[(t + 1) % m]) for t in range(m)]
        return VoronoiCell(x, x + rel, lab, True, edges)
    return _make_cell(x, rel, lab)


# ---------------------------------------------------------------------------
# point files


def write_points_csv(path, points, marks: dict | None = None) -> None:
    """Write a configuration with header x1..xd followed by mark columns."""
    pts = as_points(points) if np.size(points) else np.asarray(points, dtype=float)
    d = pts.shape[1]
    marks = marks or {}
    header = [f"x{j + 1}" for j in range(d)] + list(marks)
    cols = [np.asarray(marks[k]) for k in marks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(pts)):
        w.writerow([repr(float(v)) for v in pts[i]] + [repr(c[i].item()) for c in cols])
    Path(path).write_text(buf.getvalue())


def read_points_csv(path):
    """Inverse of :func:`write_points_csv`; returns (points, marks)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    marks = {h: data[:, j] for j, h in enumerate(header) if j >= d}
    return data[:, :d].copy(), marks
