"""Translation-invariant scores xi(x, X) attached to the points of a configuration.

Every functional has a bulk form ``values(X, ...)`` returning xi(x, X) for all
x in X, and a point form ``value(x, X, ...)`` that evaluates xi(x, X ∪ {x}).
Sums of the bulk values give the classical totals: number of packed balls
(RSA), total k-NN graph length, number of components, total Voronoi edge
length and quantization distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, HalfspaceIntersection, cKDTree
from scipy.special import roots_jacobi, roots_legendre

from .geometry import GeometryError, Window, _planar_cells, _big_box, as_points, ball_volume, voronoi_cells_2d

__all__ = [
    "FunctionalError",
    "MarkRequiredError",
    "UnsupportedDimensionError",
    "DensityFloorError",
    "Functional",
    "Count",
    "RSA",
    "KNNLength",
    "KNNComponents",
    "PercolationComponents",
    "VoronoiLength",
    "Quantization",
    "Density",
    "rsa_pack",
    "rsa_radius",
    "knn_neighbours",
    "knn_edges",
    "knn_edge_lengths",
    "component_reciprocals",
    "voronoi_edge_lengths",
    "quantization_values",
    "StabilizationProbe",
    "stabilization_probe",
    "stabilization_radii",
    "default_battery",
    "functional_from_dict",
]


class FunctionalError(ValueError):
    pass


class MarkRequiredError(FunctionalError):
    pass


class UnsupportedDimensionError(FunctionalError):
    pass


class DensityFloorError(FunctionalError):
    pass


# ---------------------------------------------------------------------------
# random sequential adsorption


def rsa_radius(d: int) -> float:
    """Radius of the unit-volume ball in dimension d."""
    return (1.0 / ball_volume(d, 1.0)) ** (1.0 / d)


@njit(cache=True)
def _greedy_pack(order, ptr, nbr):
    n = order.shape[0]
    packed = np.zeros(n, dtype=np.int8)
    for t in range(n):
        i = order[t]
        ok = True
        for e in range(ptr[i], ptr[i + 1]):
            if packed[nbr[e]]:
                ok = False
                break
        if ok:
            packed[i] = 1
    return packed


def _arrival_order(pts: np.ndarray, marks: np.ndarray) -> np.ndarray:
    keys = tuple(pts[:, j] for j in range(pts.shape[1] - 1, -1, -1)) + (marks,)
    return np.lexsort(keys)


def _pairs_within(pts: np.ndarray, dist: float, strict: bool) -> np.ndarray:
    if len(pts) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = cKDTree(pts).query_pairs(dist, output_type="ndarray").astype(np.int64)
    if strict and len(pairs):
        s = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        pairs = pairs[s < dist]
    return pairs


def _csr(n: int, pairs: np.ndarray):
    both = np.concatenate([pairs, pairs[:, ::-1]]) if len(pairs) else pairs.reshape(0, 2)
    order = np.argsort(both[:, 0], kind="stable")
    both = both[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, both[:, 0] + 1, 1)
    return np.cumsum(ptr), both[:, 1].copy()


def rsa_pack(points, marks) -> np.ndarray:
    """Packing status (0/1) of unit-volume balls arriving in increasing mark order.

    A ball is packed iff its centre is at distance >= 2 r_d from every
    previously packed centre.  Equal marks are ordered by coordinates.
    """
    pts = as_points(points)
    if marks is None:
        raise MarkRequiredError("random sequential adsorption needs arrival marks")
    marks = np.asarray(marks, dtype=float).reshape(-1)
    if len(marks) != len(pts):
        raise MarkRequiredError("one mark per point is required")
    n, d = pts.shape
    if n == 0:
        return np.zeros(0)
    ptr, nbr = _csr(n, _pairs_within(pts, 2.0 * rsa_radius(d), strict=True))
    return _greedy_pack(_arrival_order(pts, marks), ptr, nbr).astype(float)


# ---------------------------------------------------------------------------
# k-nearest-neighbour graph


def _brute_knn_row(pts, i, k):
    others = np.delete(np.arange(len(pts)), i)
    diff = pts[others] - pts[i]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    keys = tuple(pts[others, j] for j in range(pts.shape[1] - 1, -1, -1)) + (dist,)
    return others[np.lexsort(keys)[:k]]


def knn_neighbours(points, k: int) -> np.ndarray:
    """(n, k) indices of each point's k nearest other points.

    Ties in distance are broken by lexicographic order of coordinates.
    """
    pts = as_points(points)
    n = len(pts)
    if k < 1:
        raise FunctionalError("k must be at least 1")
    if n < k + 1:
        raise FunctionalError(f"k-NN needs at least {k + 1} points, got {n}")
    kq = min(k + 2, n)
    dist, idx = cKDTree(pts).query(pts, k=kq)
    dist = dist.reshape(n, kq)
    idx = idx.reshape(n, kq)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row, drow = idx[i], dist[i]
        keep = row != i
        if keep.all():
            keep[-1] = False
        row, drow = row[keep], drow[keep]
        tie = len(row) > k and drow[k] == drow[k - 1]
        # ties among equal distances need the explicit coordinate order
        if tie or (k >= 2 and np.any(drow[1:k] == drow[: k - 1])):
            out[i] = _brute_knn_row(pts, i, k)
        else:
            out[i] = row[:k]
    return out


def knn_edges(points, k: int) -> np.ndarray:
    """Edges {i, j} (i < j) of the undirected k-NN graph."""
    nb = knn_neighbours(points, k)
    n = len(nb)
    src = np.repeat(np.arange(n), k)
    e = np.column_stack([np.minimum(src, nb.ravel()), np.maximum(src, nb.ravel())])
    return np.unique(e, axis=0)


def knn_edge_lengths(points, k: int = 1):
    """Half the total length of k-NN graph edges at each point.

    Returns (values, degenerate); with fewer than k + 1 points every value
    is 0 and ``degenerate`` is True.
    """
    pts = as_points(points)
    n = len(pts)
    if n < k + 1:
        return np.zeros(n), True
    e = knn_edges(pts, k)
    length = np.linalg.norm(pts[e[:, 0]] - pts[e[:, 1]], axis=1)
    out = np.zeros(n)
    np.add.at(out, e[:, 0], 0.5 * length)
    np.add.at(out, e[:, 1], 0.5 * length)
    return out, False


def _component_sizes(n: int, edges: np.ndarray) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)) if len(edges) else coo_matrix((n, n))
    _, labels = connected_components(g, directed=False)
    sizes = np.bincount(labels)
    return sizes[labels].astype(float)


def component_reciprocals(points, graph: str = "knn", k: int = 1, radius: float = 1.0) -> np.ndarray:
    """1 / |component of x| in the k-NN graph or the percolation graph (edges when distance <= radius)."""
    pts = as_points(points)
    n = len(pts)
    if graph == "knn":
        if n < k + 1:
            # every point is a neighbour of every other one
            return np.full(n, 1.0 / n) if n else np.zeros(0)
        edges = knn_edges(pts, k)
    elif graph == "percolation":
        edges = _pairs_within(pts, radius, strict=False)
    else:
        raise FunctionalError(f"unknown graph {graph!r}")
    return 1.0 / _component_sizes(n, edges)


# ---------------------------------------------------------------------------
# planar Voronoi edge length


def voronoi_edge_lengths(points) -> np.ndarray:
    """Half the total length of the finite edges of each planar Voronoi cell."""
    pts = as_points(points)
    if pts.shape[1] != 2:
        raise UnsupportedDimensionError("Voronoi edge length is implemented for d = 2 only")
    return np.array([0.5 * c.perimeter for c in voronoi_cells_2d(pts)])


# ---------------------------------------------------------------------------
# quantization


class Density:
    """Density h of the target measure on Q_1 = [-1/2, 1/2]^d.

    ``kind`` is "uniform", "table" (values on a regular grid, multilinear
    interpolation, renormalised to integrate to one) or "callable".  ``eps``
    floors the density at eps.
    """

    def __init__(self, kind: str = "uniform", dimension: int = 1, values=None, func=None, eps: float = 0.0):
        self.kind = kind
        self.dimension = int(dimension)
        self.eps = float(eps)
        self.func = func
        self.values = None
        self.normaliser = 1.0
        if kind == "table":
            vals = np.asarray(values, dtype=float)
            if vals.ndim != self.dimension:
                raise FunctionalError("density table must have one axis per dimension")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise FunctionalError("density table values must be finite and non-negative")
            axes = [np.linspace(-0.5, 0.5, s) for s in vals.shape]
            mass = vals
            for ax in reversed(axes):
                mass = integrate.trapezoid(mass, ax, axis=-1)
            if not mass > 0:
                raise FunctionalError("density table has zero mass")
            self.normaliser = float(mass)
            self.values = vals / mass
            self._interp = RegularGridInterpolator(axes, self.values, bounds_error=False, fill_value=None)
        elif kind == "callable":
            if func is None:
                raise FunctionalError("callable density needs func")
        elif kind != "uniform":
            raise FunctionalError(f"unknown density type {kind!r}")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.dimension)
        if self.kind == "uniform":
            h = np.ones(len(z))
        elif self.kind == "table":
            h = self._interp(np.clip(z, -0.5, 0.5))
        else:
            h = np.asarray(self.func(z), dtype=float).reshape(len(z))
        return np.maximum(h, self.eps) if self.eps > 0 else h

    def to_dict(self) -> dict:
        out = {"type": self.kind, "eps": self.eps}
        if self.kind == "table":
            out["values"] = (self.values * self.normaliser).tolist()
        return out


def _sec_integral(n: int, phi: np.ndarray) -> np.ndarray:
    """int_0^phi sec(t)^n dt for integer n >= 0, |phi| < pi/2."""
    if n == 0:
        return phi
    if n == 1:
        return np.arcsinh(np.tan(phi))
    sec = 1.0 / np.cos(phi)
    return sec ** (n - 2) * np.tan(phi) / (n - 1) + (n - 2) / (n - 1) * _sec_integral(n - 2, phi)


def _polygon_moment(rel: np.ndarray, r: float) -> float:
    """int over a convex polygon containing the origin of |y|^r dy (fan from the origin)."""
    a = rel
    b = np.roll(rel, -1, axis=0)
    e = b - a
    L = np.linalg.norm(e, axis=1)
    ok = L > 0
    a, b, e, L = a[ok], b[ok], e[ok], L[ok]
    u = e / L[:, None]
    p = np.abs(a[:, 0] * u[:, 1] - a[:, 1] * u[:, 0])
    ok = p > 0
    a, b, u, p = a[ok], b[ok], u[ok], p[ok]
    ta = np.sum(a * u, axis=1)
    tb = np.sum(b * u, axis=1)
    if float(r).is_integer():
        n = int(r) + 2
        phi_a = np.arctan2(ta, p)
        phi_b = np.arctan2(tb, p)
        vals = p**n / n * np.abs(_sec_integral(n, phi_b) - _sec_integral(n, phi_a))
        return float(np.sum(vals))
    total = 0.0
    for pi_, tai, tbi in zip(p, ta, tb):
        f = lambda t: (pi_ * pi_ + t * t) ** (r / 2.0)
        val, _ = integrate.quad(f, tai, tbi, epsabs=0.0, epsrel=1e-10, limit=200)
        total += abs(val) * pi_ / (r + 2.0)
    return total


_SIMPLEX_RULES: dict = {}


def _simplex_rule(d: int, n: int = 12):
    """Quadrature nodes (barycentric weights on facet vertices) for the (d-1)-simplex."""
    key = (d, n)
    if key not in _SIMPLEX_RULES:
        if d == 1:
            S, w = np.ones((1, 1)), np.ones(1)
        elif d == 2:
            x, wx = roots_legendre(n)
            t = 0.5 * (x + 1.0)
            S, w = np.column_stack([1.0 - t, t]), 0.5 * wx
        else:
            x, wx = roots_legendre(n)
            s = 0.5 * (x + 1.0)
            ws = 0.5 * wx
            u, v = np.meshgrid(s, s, indexing="ij")
            wu, wv = np.meshgrid(ws, ws, indexing="ij")
            a = u.ravel()
            b = (v * (1.0 - u)).ravel()
            S = np.column_stack([1.0 - a - b, a, b])
            w = (wu * wv * (1.0 - u)).ravel()
        _SIMPLEX_RULES[key] = (S, w)
    return _SIMPLEX_RULES[key]


def _cone_integral(facets: np.ndarray, r: float, weight=None, n_radial: int = 16, n_simplex: int = 12) -> float:
    """Integral of |y|^r weight(y) over the union of cones from the origin to the facets.

    ``facets`` has shape (m, d, d): m simplices of d vertices (relative to the
    apex).  The radial integral is exact for weight None and Gauss-Jacobi
    otherwise.
    """
    m, d, _ = facets.shape
    if m == 0:
        return 0.0
    S, w = _simplex_rule(d, n_simplex)
    det = np.abs(np.linalg.det(facets))
    P = np.einsum("qv,mvk->mqk", S, facets)  # (m, q, d)
    norm_r = np.sum(P * P, axis=2) ** (r / 2.0)
    if weight is None:
        per = np.sum(norm_r * w[None, :], axis=1) / (r + d)
        return float(np.sum(det * per))
    x, wj = roots_jacobi(n_radial, 0.0, r + d - 1.0)
    rho = 0.5 * (x + 1.0)
    wr = wj / 2.0 ** (r + d)
    pts = rho[None, None, :, None] * P[:, :, None, :]  # (m, q, k, d)
    wv = np.asarray(weight(pts.reshape(-1, d)), dtype=float).reshape(m, len(w), len(rho))
    per = np.einsum("mqk,q,k->m", wv * norm_r[:, :, None], w, wr)
    return float(np.sum(det * per))


def _cells_1d(pts: np.ndarray, window: Window | None):
    order = np.argsort(pts[:, 0], kind="stable")
    xs = pts[order, 0]
    mids = 0.5 * (xs[1:] + xs[:-1])
    lo_bound = -window.half_width if window is not None else -np.inf
    hi_bound = window.half_width if window is not None else np.inf
    lo = np.concatenate([[lo_bound], mids])
    hi = np.concatenate([mids, [hi_bound]])
    a = np.empty(len(pts))
    b = np.empty(len(pts))
    a[order] = xs - np.maximum(lo, lo_bound)
    b[order] = np.minimum(hi, hi_bound) - xs
    return np.maximum(a, 0.0), np.maximum(b, 0.0)


def _cells_3d(pts: np.ndarray, window: Window | None, k0: int = 24):
    """Per-site lists of boundary triangles (relative to the site) of 3d Voronoi cells."""
    n = len(pts)
    if window is None:
        raise FunctionalError("3d quantization cells need a clipping window")
    tree = cKDTree(pts)
    hw = window.half_width
    out = []
    for i in range(n):
        k = min(k0, n)
        while True:
            if n > 1:
                dist, idx = tree.query(pts[i], k=k)
                dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
                keep = idx != i
                q = pts[idx[keep]] - pts[i]
            else:
                dist = np.zeros(1)
                q = np.zeros((0, 3))
            hs = [np.column_stack([q, -0.5 * np.sum(q * q, axis=1)])]
            x = pts[i]
            for j in range(3):
                e = np.zeros(3)
                e[j] = 1.0
                hs.append(np.array([[*e, -(hw - x[j])], [*(-e), -(hw + x[j])]]))
            hs = np.vstack(hs)
            interior = np.zeros(3)
            if np.any(np.abs(x) >= hw):
                interior = -0.5 * np.sign(x) * 1e-9 * hw
            hsi = HalfspaceIntersection(hs, interior)
            V = hsi.intersections
            rmax = float(np.max(np.linalg.norm(V, axis=1)))
            if k >= n or (len(dist) and dist.max() > 2.0 * rmax):
                break
            k = min(4 * k, n)
        hull = ConvexHull(V)
        out.append(V[hull.simplices])
    return out


def quantization_values(
    points,
    r: float,
    window: Window | None = None,
    density: Density | None = None,
    lam: float = 1.0,
    perturbation: bool = False,
):
    """Distortion of each point's Voronoi cell, int_C |y - x|^r [h(y')/h(x')] dy.

    Cells are clipped to ``window`` (unbounded cells without a window give
    inf).  With a non-uniform ``density`` the weighted version is returned,
    with h evaluated at y' = lam^(-1/d) y in Q_1; ``perturbation=True``
    returns the difference between the weighted and unweighted versions.
    """
    pts = as_points(points)
    n, d = pts.shape
    if r < 0:
        raise FunctionalError("quantization exponent r must be non-negative")
    weighted = density is not None and not density.is_uniform
    if n == 0:
        return np.zeros(0)
    scale = lam ** (-1.0 / d)
    if weighted:
        hx = density(pts * scale)
        if np.any(hx <= 0):
            raise DensityFloorError("density vanishes at an evaluation point; set a positive floor eps")

    def excess_for(i):
        # h(y')/h(x') - 1, which vanishes identically for a constant density
        x = pts[i]
        return lambda y: density((y + x) * scale) / hx[i] - 1.0

    delta = np.zeros(n)
    if d == 1:
        a, b = _cells_1d(pts, window)
        base = (a ** (r + 1) + b ** (r + 1)) / (r + 1)
        if weighted:
            for i in range(n):
                f = np.array([[[-a[i]]], [[b[i]]]])
                delta[i] = _cone_integral(f, r, excess_for(i))
    elif d == 2:
        if window is None:
            lo, hi = _big_box(pts)
        else:
            lo, hi = window.lower, window.upper
        verts, labels = _planar_cells(pts, lo, hi)
        base = np.empty(n)
        for i in range(n):
            rel = verts[i]
            if window is None and np.any(labels[i] < 0):
                base[i] = np.inf
                continue
            base[i] = _polygon_moment(rel, r)
            if weighted:
                facets = np.stack([rel, np.roll(rel, -1, axis=0)], axis=1)
                delta[i] = _cone_integral(facets, r, excess_for(i))
    elif d == 3:
        tris = _cells_3d(pts, window)
        base = np.array([_cone_integral(t, r) for t in tris])
        if weighted:
            delta = np.array([_cone_integral(t, r, excess_for(i)) for i, t in enumerate(tris)])
    else:
        raise UnsupportedDimensionError("quantization is implemented for d <= 3")
    if perturbation:
        return delta
    return base + delta


# ---------------------------------------------------------------------------
# functional objects


class Functional:
    """Score xi(x, X).  Subclasses implement ``values``."""

    name = "functional"
    requires_marks = False
    translation_invariant = True

    def values(self, X, marks=None, window: Window | None = None, lam: float = 1.0) -> np.ndarray:
        raise NotImplementedError

    def value(self, x, X, mark=None, marks=None, window: Window | None = None, lam: float = 1.0) -> float:
        """xi(x, X ∪ {x})."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        X = as_points(X, x.shape[1])
        Y = np.vstack([x, X])
        m = None
        if self.requires_marks:
            if mark is None or (len(X) and marks is None):
                raise MarkRequiredError(f"{self.name} needs arrival marks")
            m = np.concatenate([[mark], np.asarray(marks, dtype=float).reshape(-1)[: len(X)]])
        return float(self.values(Y, m, window, lam)[0])

    def test_multiplier(self, locations) -> np.ndarray:
        """Factor applied to test functions (the density h for quantization)."""
        return np.ones(len(locations))

    def to_dict(self) -> dict:
        return {"functional": self.name, "parameters": {}}

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()['parameters']})"


class Count(Functional):
    """xi = 1: the empirical measure counts points."""

    name = "count"

    def values(self, X, marks=None, window=None, lam=1.0):
        return np.ones(len(as_points(X)))


class RSA(Functional):
    name = "rsa"
    requires_marks = True

    def values(self, X, marks=None, window=None, lam=1.0):
        return rsa_pack(X, marks)


class KNNLength(Functional):
    name = "knn_length"

    def __init__(self, k: int = 1):
        if int(k) != k or k < 1:
            raise FunctionalError("k must be a positive integer")
        self.k = int(k)

    def values(self, X, marks=None, window=None, lam=1.0):
        return knn_edge_lengths(X, self.k)[0]

    def to_dict(self):
        return {"functional": self.name, "parameters": {"k": self.k}}


class KNNComponents(Functional):
    name = "knn_components"

    def __init__(self, k: int = 1):
        if int(k) != k or k < 1:
            raise FunctionalError("k must be a positive integer")
        self.k = int(k)

    def values(self, X, marks=None, window=None, lam=1.0):
        return component_reciprocals(X, "knn", k=self.k)

    def to_dict(self):
        return {"functional": self.name, "parameters": {"k": self.k}}


class PercolationComponents(Functional):
    name = "percolation_components"

    def __init__(self, radius: float = 1.0):
        if not radius > 0:
            raise FunctionalError("percolation radius must be positive")
        self.radius = float(radius)

    def values(self, X, marks=None, window=None, lam=1.0):
        return component_reciprocals(X, "percolation", radius=self.radius)

    def to_dict(self):
        return {"functional": self.name, "parameters": {"radius": self.radius}}


class VoronoiLength(Functional):
    name = "voronoi_length"

    def values(self, X, marks=None, window=None, lam=1.0):
        return voronoi_edge_lengths(X)


class Quantization(Functional):
    """Cell distortion; with a non-uniform density the weighted version."""

    name = "quantization"

    def __init__(self, r: float = 1.0, density: Density | None = None):
        if not r >= 0:
            raise FunctionalError("quantization exponent r must be non-negative")
        self.r = float(r)
        self.density = density
        self.translation_invariant = density is None or density.is_uniform

    def values(self, X, marks=None, window=None, lam=1.0):
        return quantization_values(X, self.r, window, self.density, lam)

    def perturbation(self, X, window=None, lam=1.0):
        return quantization_values(X, self.r, window, self.density, lam, perturbation=True)

    def test_multiplier(self, locations):
        if self.density is None or self.density.is_uniform:
            return np.ones(len(locations))
        return self.density(locations)

    def to_dict(self):
        p = {"r": self.r}
        if self.density is not None:
            p["h"] = self.density.to_dict()
        return {"functional": self.name, "parameters": p}


def functional_from_dict(spec: dict, dimension: int) -> Functional:
    name = spec.get("functional")
    p = dict(spec.get("parameters", {}))
    if name in ("count", "one", "constant"):
        return Count()
    if name == "rsa":
        return RSA()
    if name == "knn_length":
        return KNNLength(p.get("k", 1))
    if name == "knn_components":
        return KNNComponents(p.get("k", 1))
    if name == "percolation_components":
        return PercolationComponents(p.get("radius", 1.0))
    if name == "voronoi_length":
        if dimension != 2:
            raise UnsupportedDimensionError("voronoi_length needs d = 2")
        return VoronoiLength()
    if name == "quantization":
        h = p.get("h", {"type": "uniform"})
        eps = float(h.get("eps", p.get("eps", 0.0)))
        kind = h.get("type", "uniform")
        dens = Density(kind, dimension, values=h.get("values"), eps=eps) if kind != "uniform" else None
        return Quantization(p.get("r", 1.0), dens)
    raise FunctionalError(f"unknown functional {name!r}")


# ---------------------------------------------------------------------------
# stabilisation


@dataclass
class StabilizationProbe:
    x: np.ndarray
    radii: np.ndarray
    stabilized_at: float | None
    failures: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.stabilized_at is not None


def _sphere_points(d: int, spacing: float, radius: float) -> np.ndarray:
    if d == 1:
        return np.array([[-radius], [radius]])
    if d == 2:
        m = max(8, int(math.ceil(2 * math.pi * radius / spacing)))
        t = 2 * math.pi * (np.arange(m) + 0.5) / m
        return radius * np.column_stack([np.cos(t), np.sin(t)])
    m = max(16, int(math.ceil(4 * math.pi * radius**2 / spacing**2)))
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = math.pi * (3 - math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return radius * np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def default_battery(d: int, R: float, shell_spacing: float = 0.05, far_factor: float = 10.0):
    """Adversarial external sets for radius R, centred at the origin.

    Empty set, a dense shell just outside B_R, single points just outside
    B_R along each axis direction, and a single far point.
    """
    out_r = R * (1.0 + 1e-9) + 1e-9
    battery = [np.zeros((0, d)), _sphere_points(d, shell_spacing, out_r)]
    for j in range(d):
        for s in (1.0, -1.0):
            p = np.zeros((1, d))
            p[0, j] = s * out_r
            battery.append(p)
    far = np.zeros((1, d))
    far[0, 0] = far_factor * max(R, 1.0)
    battery.append(far)
    return battery


def stabilization_probe(
    functional: Functional,
    x,
    X,
    radii,
    marks=None,
    x_mark=None,
    battery=None,
    window: Window | None = None,
) -> StabilizationProbe:
    """Smallest grid radius R at which xi(x, X ∩ B_R(x)) ignores every battery insertion.

    ``battery(d, R)`` returns a list of point sets centred at the origin
    (shifted to x internally).  Inserted points carry mark -1 (earliest
    arrival) for mark-dependent functionals.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.size
    X = as_points(X, d)
    radii = np.sort(np.asarray(radii, dtype=float))
    battery = battery or default_battery
    if functional.requires_marks:
        if marks is None or x_mark is None:
            raise MarkRequiredError(f"{functional.name} needs arrival marks")
        marks = np.asarray(marks, dtype=float)
    dist = np.linalg.norm(X - x, axis=1)
    failures = []
    for R in radii:
        inside = dist <= R
        Y = X[inside]
        mY = marks[inside] if marks is not None else None
        base = functional.value(x, Y, x_mark, mY, window)
        stable = True
        for A in battery(d, R):
            A = A + x
            if len(A) == 0:
                continue
            Z = np.vstack([Y, A])
            mZ = np.concatenate([mY, -np.ones(len(A))]) if mY is not None else None
            v = functional.value(x, Z, x_mark, mZ, window)
            if not (v == base or abs(v - base) <= 1e-12 * max(1.0, abs(base))):
                stable = False
                break
        if stable:
            return StabilizationProbe(x, radii, float(R), failures)
        failures.append(float(R))
    return StabilizationProbe(x, radii, None, failures)


def stabilization_radii(functional: Functional, X, centres_idx, radii, marks=None, window: Window | None = None) -> np.ndarray:
    """Stabilisation radius of xi at each chosen point of X (inf when not reached on the grid)."""
    X = as_points(X)
    out = np.full(len(centres_idx), np.inf)
    for j, i in enumerate(centres_idx):
        others = np.delete(X, i, axis=0)
        m_others = np.delete(marks, i) if marks is not None else None
        x_mark = marks[i] if marks is not None else None
        probe = stabilization_probe(functional, X[i], others, radii, m_others, x_mark, window=window)
        if probe.found:
            out[j] = probe.stabilized_at
    return out
