import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, HalfspaceIntersection, Voronoi

from gibbsgeom.functionals import (
    RSA,
    Count,
    Density,
    DensityFloorError,
    FunctionalError,
    KNNComponents,
    KNNLength,
    MarkRequiredError,
    PercolationComponents,
    Quantization,
    UnsupportedDimensionError,
    VoronoiLength,
    component_reciprocals,
    default_battery,
    functional_from_dict,
    knn_edge_lengths,
    knn_edges,
    quantization_values,
    rsa_pack,
    rsa_radius,
    stabilization_probe,
    stabilization_radii,
)
from gibbsgeom.geometry import Window, ball_volume

# ---------------------------------------------------------------------------
# brute-force oracles


def brute_rsa(pts, marks):
    r2 = 2 * rsa_radius(pts.shape[1])
    order = sorted(range(len(pts)), key=lambda i: (marks[i], *pts[i]))
    packed = []
    out = np.zeros(len(pts))
    for i in order:
        if all(np.linalg.norm(pts[i] - pts[j]) >= r2 for j in packed):
            packed.append(i)
            out[i] = 1.0
    return out


def brute_knn_edges(pts, k):
    n, d = pts.shape
    edges = set()
    for i in range(n):
        others = np.delete(np.arange(n), i)
        dist = np.linalg.norm(pts[others] - pts[i], axis=1)
        # nearest first; equal distances in lexicographic coordinate order
        order = np.lexsort(tuple(pts[others, j] for j in range(d - 1, -1, -1)) + (dist,))
        for j in others[order[:k]]:
            edges.add((min(i, int(j)), max(i, int(j))))
    return edges


def union_find_components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    roots = [find(i) for i in range(n)]
    sizes = {r: roots.count(r) for r in set(roots)}
    return len(sizes), np.array([1.0 / sizes[r] for r in roots])


def halfspace_cell(i, pts, lo, hi):
    """Vertices of the Voronoi cell of pts[i] clipped to the box, relative to the site."""
    x = pts[i]
    q = np.delete(pts, i, axis=0) - x
    d = pts.shape[1]
    hs = [np.column_stack([q, -0.5 * np.sum(q * q, axis=1)])]
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hs.append(np.array([[*e, -(hi[j] - x[j])], [*(-e), -(x[j] - lo[j])]]))
    V = HalfspaceIntersection(np.vstack(hs), np.zeros(d)).intersections
    return V


def grid_cell_moment(V, r, weight=None, n=1000):
    """Midpoint-grid integral of |y|^r weight(y) over the convex hull of V (which contains 0).

    The hull is fanned into simplices with apex 0; each simplex is the image of
    the unit square (cube) under a Duffy map, where the integrand is smooth.
    """
    d = V.shape[1]
    hull = ConvexHull(V)
    total = 0.0
    g = (np.arange(n) + 0.5) / n
    for simplex in hull.simplices:
        F = V[simplex]
        if d == 2:
            a, b = F
            s, t = np.meshgrid(g, g, indexing="ij")
            Y = s[..., None] * ((1 - t)[..., None] * a + t[..., None] * b)
            jac = s * abs(a[0] * b[1] - a[1] * b[0])
            cell = 1.0 / n**2
        else:
            a, b, c = F
            s, u, v = np.meshgrid(g, g, g, indexing="ij")
            inner = (1 - u)[..., None] * a + u[..., None] * ((1 - v)[..., None] * b + v[..., None] * c)
            Y = s[..., None] * inner
            jac = s**2 * u * abs(np.linalg.det(F))
            cell = 1.0 / n**3
        f = np.sum(Y * Y, axis=-1) ** (r / 2) * jac
        if weight is not None:
            f = f * weight(Y.reshape(-1, d)).reshape(f.shape)
        total += float(f.sum()) * cell
    return total


def extrapolated_cell_moment(V, r, weight=None, n=100):
    """Richardson extrapolation of the O(h^2) midpoint rule from grids n/2 and n."""
    return (4.0 * grid_cell_moment(V, r, weight, n) - grid_cell_moment(V, r, weight, n // 2)) / 3.0


# ---------------------------------------------------------------------------
# RSA


def test_rsa_examples():
    # in d = 1 unit-volume balls are length-1 intervals, conflicting at distance < 1
    assert rsa_radius(1) == 0.5
    np.testing.assert_array_equal(rsa_pack([[0.0], [0.8], [1.6]], [0.1, 0.2, 0.3]), [1, 0, 1])
    np.testing.assert_array_equal(rsa_pack([[0.3, 0.4]], [0.9]), [1])
    assert ball_volume(3, rsa_radius(3)) == pytest.approx(1.0)


def test_rsa_needs_marks():
    with pytest.raises(MarkRequiredError):
        rsa_pack([[0.0]], None)
    with pytest.raises(MarkRequiredError):
        RSA().value([0.0], [[1.0]])


def test_rsa_mark_ties_use_coordinates():
    # equal marks: the lexicographically smaller point arrives first
    np.testing.assert_array_equal(rsa_pack([[0.5], [0.0]], [0.2, 0.2]), [0, 1])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_rsa_matches_sequential_oracle(d):
    rng = np.random.default_rng(d)
    pts = Window.from_volume(600.0, d).uniform(rng, 1000)
    marks = rng.random(1000)
    np.testing.assert_array_equal(rsa_pack(pts, marks), brute_rsa(pts, marks))


# ---------------------------------------------------------------------------
# k-NN graph


def test_knn_length_examples():
    vals, degenerate = knn_edge_lengths(np.array([[0.0], [1.0], [3.0]]), 1)
    np.testing.assert_allclose(vals, [0.5, 1.5, 1.0])
    assert vals.sum() == 3.0 and not degenerate
    vals, _ = knn_edge_lengths(np.array([[0.0, 0.0], [0.6, 0.8]]), 1)
    np.testing.assert_allclose(vals, [0.5, 0.5])
    vals, degenerate = knn_edge_lengths(np.array([[0.0, 0.0]]), 1)
    assert degenerate and vals.tolist() == [0.0]


@pytest.mark.parametrize("d,k", [(1, 1), (2, 1), (2, 3), (3, 2)])
def test_knn_matches_brute_force(d, k):
    rng = np.random.default_rng(10 + d + k)
    pts = rng.uniform(-5, 5, size=(1000, d))
    got = {tuple(e) for e in knn_edges(pts, k).tolist()}
    want = brute_knn_edges(pts, k)
    assert got == want
    total = sum(np.linalg.norm(pts[a] - pts[b]) for a, b in want)
    assert knn_edge_lengths(pts, k)[0].sum() == pytest.approx(total, rel=1e-12)


def test_knn_with_ties_matches_brute_force():
    rng = np.random.default_rng(5)
    pts = np.unique(rng.integers(0, 12, size=(300, 2)).astype(float), axis=0)
    assert {tuple(e) for e in knn_edges(pts, 2).tolist()} == brute_knn_edges(pts, 2)


# ---------------------------------------------------------------------------
# components


def test_component_examples():
    np.testing.assert_allclose(component_reciprocals([[0.0], [0.5], [2.0]], "percolation", radius=1.0), [0.5, 0.5, 1.0])
    assert component_reciprocals([[0.0], [0.5], [2.0]], "percolation").sum() == 2.0
    np.testing.assert_array_equal(component_reciprocals([[1.0, 2.0]], "percolation"), [1.0])
    np.testing.assert_array_equal(component_reciprocals([[1.0, 2.0]], "knn"), [1.0])
    with pytest.raises(FunctionalError):
        component_reciprocals([[0.0]], "delaunay")


@pytest.mark.parametrize("d", [1, 2, 3])
def test_knn_components_match_union_find(d):
    rng = np.random.default_rng(20 + d)
    pts = rng.uniform(-5, 5, size=(1000, d))
    count, recip = union_find_components(1000, brute_knn_edges(pts, 1))
    got = component_reciprocals(pts, "knn", k=1)
    np.testing.assert_allclose(got, recip, rtol=0, atol=0)
    assert round(got.sum()) == count


@pytest.mark.parametrize("d", [1, 2, 3])
def test_percolation_components_match_union_find(d):
    rng = np.random.default_rng(30 + d)
    pts = Window.from_volume(1000.0 / 0.6, d).uniform(rng, 1000)
    D = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    edges = list(zip(*np.nonzero(np.triu(D <= 1.0, 1))))
    count, recip = union_find_components(1000, edges)
    got = component_reciprocals(pts, "percolation", radius=1.0)
    np.testing.assert_array_equal(got, recip)
    assert round(got.sum()) == count


# ---------------------------------------------------------------------------
# Voronoi edge length


def test_voronoi_length_examples():
    cross = np.array([[0.0, 0.0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    assert VoronoiLength().value([0.0, 0.0], cross[1:]) == pytest.approx(2.0, abs=1e-12)
    assert VoronoiLength().values([[0.0, 0.0]]).tolist() == [0.0]
    with pytest.raises(UnsupportedDimensionError):
        VoronoiLength().values([[0.0], [1.0]])
    with pytest.raises(UnsupportedDimensionError):
        functional_from_dict({"functional": "voronoi_length"}, 3)


def test_voronoi_length_matches_edge_enumeration():
    rng = np.random.default_rng(40)
    pts = rng.uniform(-3, 3, size=(100, 2))
    vor = Voronoi(pts)
    total = 0.0
    for ridge in vor.ridge_vertices:
        if -1 not in ridge:
            a, b = vor.vertices[ridge]
            total += np.linalg.norm(a - b)
    assert VoronoiLength().values(pts).sum() == pytest.approx(total, rel=1e-9)


# ---------------------------------------------------------------------------
# quantization


def test_quantization_closed_forms():
    # d = 1: cell [x - a, x + b] gives (a^2 + b^2) / 2 for r = 1
    w = Window(2.0, 1)
    vals = quantization_values(np.array([[-1.0], [0.0], [1.5]]), 1.0, w)
    a, b = 0.5, 0.75
    assert vals[1] == pytest.approx((a * a + b * b) / 2, rel=1e-14)
    assert vals[0] == pytest.approx((1.0 + 0.25) / 2, rel=1e-14)
    # d = 2: unit square cell around the origin, second moment 1/6
    cross = np.array([[0.0, 0.0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    assert Quantization(2.0).value([0.0, 0.0], cross[1:], window=Window(5.0, 2)) == pytest.approx(1 / 6, rel=1e-12)
    # d = 3: unit cube cell, second moment 3 * (1/12)
    cube = np.array([[0.0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    assert quantization_values(cube, 2.0, Window(5.0, 3))[0] == pytest.approx(0.25, rel=1e-10)


def test_quantization_without_window_marks_unbounded_cells():
    cross = np.array([[0.0, 0.0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    vals = quantization_values(cross, 1.0)
    assert math.isfinite(vals[0]) and np.all(np.isinf(vals[1:]))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_quantization_cells_partition_the_window(d):
    rng = np.random.default_rng(50 + d)
    w = Window(2.0, d)
    pts = w.uniform(rng, 60)
    assert quantization_values(pts, 0.0, w).sum() == pytest.approx(w.volume, rel=1e-6)


@pytest.mark.parametrize("r", [1.0, 2.0, 0.5, 1.7])
def test_planar_quantization_matches_dense_grid(r):
    rng = np.random.default_rng(int(10 * r))
    w = Window(1.5, 2)
    pts = w.uniform(rng, 40)
    got = quantization_values(pts, r, w)
    for i in range(0, 40, 4):
        want = grid_cell_moment(halfspace_cell(i, pts, w.lower, w.upper), r)
        assert got[i] == pytest.approx(want, rel=1e-4)


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_spatial_quantization_matches_dense_grid(r):
    rng = np.random.default_rng(60 + int(r))
    w = Window(1.5, 3)
    pts = w.uniform(rng, 30)
    got = quantization_values(pts, r, w)
    for i in range(0, 30, 6):
        want = extrapolated_cell_moment(halfspace_cell(i, pts, w.lower, w.upper), r, n=100)
        assert got[i] == pytest.approx(want, rel=1e-4)


def test_planar_quantization_cells_agree_with_nearest_site_labelling():
    # an independent check of the cell geometry: label a pixel grid by nearest site
    rng = np.random.default_rng(70)
    w = Window(1.0, 2)
    pts = w.uniform(rng, 12)
    n = 1000
    g = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    lab = np.argmin(np.linalg.norm(Y[:, None] - pts[None], axis=2), axis=1)
    dist = np.linalg.norm(Y - pts[lab], axis=1)
    grid = np.bincount(lab, weights=dist, minlength=12) * (2.0 / n) ** 2
    np.testing.assert_allclose(quantization_values(pts, 1.0, w), grid, rtol=5e-3)


def _tilted(z):
    return 1.0 + 0.8 * z[:, 0] - 0.5 * z[:, -1] ** 2


@pytest.mark.parametrize("d", [1, 2, 3])
def test_weighted_quantization_matches_dense_grid(d):
    rng = np.random.default_rng(80 + d)
    lam = 50.0
    w = Window.from_volume(lam, d)
    pts = w.uniform(rng, 25)
    h = Density("callable", d, func=_tilted)
    got = quantization_values(pts, 1.0, w, h, lam)
    scale = lam ** (-1.0 / d)
    for i in range(0, 25, 5):
        x = pts[i]
        weight = lambda y, x=x: _tilted((y + x) * scale) / _tilted((x * scale)[None])[0]
        if d == 1:
            a = x[0] - max(w.lower[0], 0.5 * (x[0] + pts[pts[:, 0] < x[0], 0].max(initial=-np.inf)))
            b = min(w.upper[0], 0.5 * (x[0] + pts[pts[:, 0] > x[0], 0].min(initial=np.inf))) - x[0]
            s = (np.arange(200000) + 0.5) / 200000
            want = sum(
                float(np.sum(np.abs(L * s) * weight((sgn * L * s)[:, None]))) * L / len(s)
                for sgn, L in ((-1, a), (1, b))
            )
        else:
            want = extrapolated_cell_moment(halfspace_cell(i, pts, w.lower, w.upper), 1.0, weight, n=1000 if d == 2 else 100)
        assert got[i] == pytest.approx(want, rel=1e-4)


def test_constant_density_has_no_perturbation():
    rng = np.random.default_rng(90)
    w = Window(2.0, 2)
    pts = w.uniform(rng, 30)
    flat = Density("callable", 2, func=lambda z: np.full(len(z), 2.5))
    q = Quantization(1.0, flat)
    np.testing.assert_array_equal(q.perturbation(pts, w, lam=16.0), np.zeros(30))
    np.testing.assert_allclose(q.values(pts, window=w, lam=16.0), quantization_values(pts, 1.0, w), rtol=1e-12)


def test_perturbation_shrinks_with_lambda():
    h = Density("callable", 2, func=_tilted)
    q = Quantization(1.0, h)
    moment = []
    for lam in (16.0, 256.0, 4096.0):
        w = Window.from_volume(lam, 2)
        rng = np.random.default_rng(int(lam))
        pts = w.uniform(rng, rng.poisson(lam))
        inner = np.all(np.abs(pts) < w.half_width - 1.0, axis=1)
        # second moment of the perturbation per point
        moment.append(float(np.mean(q.perturbation(pts, w, lam)[inner] ** 2)))
    assert moment[0] > moment[1] > moment[2]


def test_density_floor():
    h = Density("callable", 1, func=lambda z: z[:, 0])
    with pytest.raises(DensityFloorError):
        quantization_values(np.array([[-0.2], [0.2]]), 1.0, Window(0.5, 1), h)
    floored = Density("callable", 1, func=lambda z: z[:, 0], eps=0.1)
    assert np.all(np.isfinite(quantization_values(np.array([[-0.2], [0.2]]), 1.0, Window(0.5, 1), floored)))


def test_density_table_is_normalised():
    h = Density("table", 2, values=[[1.0, 3.0], [1.0, 3.0]])
    assert h(np.zeros((1, 2)))[0] == pytest.approx(1.0)
    assert h(np.array([[0.0, 0.5]]))[0] == pytest.approx(1.5)
    with pytest.raises(FunctionalError):
        Density("table", 2, values=[1.0, 2.0])
    with pytest.raises(FunctionalError):
        Density("gaussian", 2)


# ---------------------------------------------------------------------------
# generic properties


def _battery_functionals(d):
    out = [Count(), KNNLength(1), KNNLength(2), KNNComponents(1), PercolationComponents(0.8), Quantization(1.0)]
    if d == 2:
        out.append(VoronoiLength())
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(-50 * 1024, 50 * 1024), st.integers(-50 * 1024, 50 * 1024))
def test_translation_invariance(seed, d, sx, sy):
    # dyadic coordinates and shifts make X + z exact in floating point, so any
    # difference comes from the functional and not from rounding the input
    rng = np.random.default_rng(seed)
    pts = np.round(rng.uniform(-2, 2, size=(30, d)) * 2**20) / 2**20
    z = np.array([sx, sy, sx - sy][:d]) / 1024.0
    assert np.array_equal((pts + z) - z, pts)
    marks = rng.random(30)
    for f in _battery_functionals(d) + [RSA()]:
        if isinstance(f, Quantization):
            continue
        np.testing.assert_allclose(f.values(pts, marks), f.values(pts + z, marks), rtol=1e-12, atol=1e-12)
    # quantization cells are clipped to a fixed window; a far ring of sites keeps the
    # inner cells away from it, so those cells must be translation invariant
    ring = 8.0 * np.vstack([np.eye(d), -np.eye(d)])
    Y = np.vstack([pts, ring])
    big = Window(100.0, d)
    a = quantization_values(Y, 1.0, big)[:30]
    b = quantization_values(Y + z, 1.0, big)[:30]
    np.testing.assert_allclose(a, b, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_point_form_agrees_with_bulk_form(seed, d):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2, 2, size=(20, d))
    marks = rng.random(20)
    for f in _battery_functionals(d) + [RSA()]:
        w = Window(3.0, d)
        bulk = f.values(pts, marks, w)
        for i in (0, 7):
            others = np.delete(pts, i, axis=0)
            m_others = np.delete(marks, i)
            assert f.value(pts[i], others, marks[i], m_others, w) == pytest.approx(bulk[i], rel=1e-12, abs=1e-15)


def test_functional_from_dict_round_trip():
    for spec in (
        {"functional": "count"},
        {"functional": "rsa"},
        {"functional": "knn_length", "parameters": {"k": 2}},
        {"functional": "knn_components", "parameters": {"k": 1}},
        {"functional": "percolation_components", "parameters": {"radius": 0.5}},
        {"functional": "quantization", "parameters": {"r": 2.0}},
    ):
        f = functional_from_dict(spec, 2)
        again = functional_from_dict(f.to_dict(), 2)
        assert again.to_dict() == f.to_dict()
    table = functional_from_dict({"functional": "quantization", "parameters": {"r": 1, "h": {"type": "table", "values": [[1, 2], [3, 4]]}}}, 2)
    assert not table.translation_invariant
    with pytest.raises(FunctionalError):
        functional_from_dict({"functional": "gabriel"}, 2)
    with pytest.raises(FunctionalError):
        KNNLength(0)


# ---------------------------------------------------------------------------
# stabilisation


RADII = np.round(np.arange(0.1, 4.01, 0.1), 10)


def test_knn_stabilization_examples():
    f = KNNLength(1)
    # x = 0 flanked by neighbours: an insertion beyond 0.6 can no longer steal either edge
    assert stabilization_probe(f, [0.0], [[0.3], [-0.3], [5.0]], RADII).stabilized_at == pytest.approx(0.6)
    # the leftmost point of {0, 0.3, 5} never stabilises: a point inserted at -R always links to it
    probe = stabilization_probe(f, [0.0], [[0.3], [5.0]], RADII)
    assert not probe.found and len(probe.failures) == len(RADII)


def test_percolation_stabilization_is_cluster_reach():
    f = PercolationComponents(1.0)
    X = np.array([[0.5, 0.0], [1.2, 0.3], [5.0, 5.0]])
    reach = np.linalg.norm(X[:2], axis=1).max() + 1.0
    R = stabilization_probe(f, [0.0, 0.0], X, RADII).stabilized_at
    assert reach <= R < reach + 0.1 + 1e-9


def test_rsa_stabilization_of_an_isolated_first_arrival():
    R = stabilization_probe(RSA(), [0.0, 0.0], [[3.0, 3.0]], RADII, marks=[0.5], x_mark=0.0).stabilized_at
    assert R == RADII[np.searchsorted(RADII, 2 * rsa_radius(2))]
    with pytest.raises(MarkRequiredError):
        stabilization_probe(RSA(), [0.0, 0.0], [[3.0, 3.0]], RADII)


def test_larger_battery_never_lowers_the_radius():
    rng = np.random.default_rng(100)
    pts = rng.uniform(-4, 4, size=(60, 2))
    f = KNNLength(1)

    def bigger(d, R):
        extra = default_battery(d, R * 1.5, shell_spacing=0.03)
        return default_battery(d, R) + extra

    for i in range(0, 60, 6):
        others = np.delete(pts, i, axis=0)
        a = stabilization_probe(f, pts[i], others, RADII).stabilized_at
        b = stabilization_probe(f, pts[i], others, RADII, battery=bigger).stabilized_at
        if a is None:
            assert b is None
        elif b is not None:
            assert b >= a


def test_stabilization_radii_reports_unresolved_as_inf():
    X = np.array([[0.0], [0.3], [5.0], [-0.3]])
    out = stabilization_radii(KNNLength(1), X, [0, 2], RADII)
    assert out[0] == pytest.approx(0.6)
    assert np.isinf(out[1])


def test_count_functional():
    assert Count().values(np.zeros((4, 3))).tolist() == [1.0] * 4
    assert Count().value([0.0], np.zeros((0, 1))) == 1.0
