import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsgeom.geometry import (
    DegenerateSiteError,
    GeometryError,
    InsufficientPointsError,
    Window,
    as_points,
    ball_volume,
    build_index,
    knn_query,
    range_query,
    read_points_csv,
    voronoi_cell_2d,
    voronoi_cells_2d,
    write_points_csv,
)


def test_ball_volume_examples():
    assert ball_volume(1, 1) == 2.0
    assert ball_volume(2, 1) == pytest.approx(math.pi, rel=1e-15)
    assert ball_volume(3, 2) == pytest.approx(32 * math.pi / 3, rel=1e-15)


@given(st.integers(1, 6), st.floats(0, 50))
def test_ball_volume_scaling(d, r):
    assert ball_volume(d, 1.0) * r**d == pytest.approx(ball_volume(d, r), rel=1e-12, abs=1e-300)


def test_ball_volume_rejects_bad_input():
    with pytest.raises(ValueError):
        ball_volume(0, 1)
    with pytest.raises(ValueError):
        ball_volume(2, -1)


def test_as_points_rejects_nonfinite():
    with pytest.raises(GeometryError):
        as_points([[0.0, np.nan]])
    assert as_points([], 3).shape == (0, 3)


def test_window_volume():
    w = Window.from_volume(1000.0, 3)
    assert w.volume == pytest.approx(1000.0)
    assert w.half_width == pytest.approx(5.0)
    assert w.enlarged(1.0).half_width == pytest.approx(6.0)
    assert list(w.contains([[0, 0, 0], [5.1, 0, 0]])) == [True, False]


def test_range_query_examples():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    idx = build_index(pts, 0.7)
    np.testing.assert_array_equal(range_query(idx, [1.0, 0.0], 0.0), [[1.0, 0.0]])
    assert len(range_query(idx, [0.5, 0.5], 0.1)) == 0
    # the ball is closed
    assert len(range_query(idx, [0.0, 0.0], 1.0)) == 2


def test_knn_query_examples():
    idx = build_index(np.array([[0.0], [1.0], [3.0]]), 1.0)
    np.testing.assert_array_equal(knn_query(idx, [0.0], 1), [[1.0]])
    np.testing.assert_array_equal(knn_query(idx, [3.0], 2), [[1.0], [0.0]])
    with pytest.raises(InsufficientPointsError):
        knn_query(idx, [0.0], 3)


def test_knn_ties_are_lexicographic():
    idx = build_index(np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]]), 0.5)
    np.testing.assert_array_equal(knn_query(idx, [0.0, 0.0], 4), [[-1, 0], [0, -1], [0, 1], [1, 0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.floats(0.05, 3.0), st.floats(0.0, 4.0))
def test_range_query_matches_linear_scan(seed, d, cell, radius):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5, 5, size=(rng.integers(0, 1000), d))
    idx = build_index(pts, cell, d)
    c = rng.uniform(-6, 6, size=d)
    got = idx.range_query(c, radius)
    want = np.flatnonzero(np.linalg.norm(pts - c, axis=1) <= radius)
    np.testing.assert_array_equal(np.sort(got), want)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.floats(0.1, 3.0), st.integers(1, 8))
def test_knn_query_matches_sort(seed, d, cell, k):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(k + 1, 1000))
    # rounding creates ties and duplicate coordinates
    pts = np.round(rng.uniform(-5, 5, size=(n, d)), 1)
    x = pts[rng.integers(n)]
    idx = build_index(pts, cell, d)
    others = pts[np.any(pts != x, axis=1)]
    if len(others) < k:
        return
    dist = np.linalg.norm(others - x, axis=1)
    order = np.lexsort(tuple(others[:, j] for j in range(d - 1, -1, -1)) + (dist,))
    np.testing.assert_array_equal(knn_query(idx, x, k), others[order[:k]])


def test_voronoi_unit_square():
    X = np.array([[0.0, 0.0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    cell = voronoi_cell_2d([0, 0], X)
    assert cell.bounded
    assert cell.perimeter == pytest.approx(4.0, abs=1e-12)
    assert cell.area == pytest.approx(1.0, abs=1e-12)
    assert sorted(cell.edge_labels.tolist()) == [1, 2, 3, 4]
    assert np.max(np.abs(cell.vertices)) == pytest.approx(0.5)


def test_voronoi_lonely_site_is_unbounded():
    cell = voronoi_cell_2d([0.0, 0.0], [[0.0, 0.0]])
    assert not cell.bounded
    assert cell.edges == []


def test_voronoi_duplicates_rejected():
    with pytest.raises(DegenerateSiteError):
        voronoi_cell_2d([0, 0], [[0, 0], [0, 0], [1, 1]])
    with pytest.raises(DegenerateSiteError):
        voronoi_cells_2d([[0, 0], [0, 0], [1, 1]])


@pytest.mark.parametrize("n", [20, 500])
def test_voronoi_cells_tile_window(n):
    rng = np.random.default_rng(n)
    w = Window(3.0, 2)
    pts = w.uniform(rng, n)
    cells = voronoi_cells_2d(pts, (w.lower, w.upper))
    assert sum(c.area for c in cells) == pytest.approx(w.volume, rel=1e-9)
    for c, p in zip(cells, pts):
        # convex polygon, counter-clockwise, containing its site
        v = c.vertices
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * (p[1] - v[:, 1]) - e[:, 1] * (p[0] - v[:, 0])
        assert np.all(cross >= -1e-9)


def test_voronoi_cell_matches_definition():
    rng = np.random.default_rng(3)
    X = rng.uniform(-2, 2, size=(40, 2))
    cell = voronoi_cell_2d(X[0], X[1:])
    # every vertex is equidistant to the site and its closest other sites
    for v in cell.vertices:
        d0 = np.linalg.norm(v - X[0])
        assert d0 <= np.min(np.linalg.norm(X[1:] - v, axis=1)) + 1e-9


def test_csv_roundtrip(tmp_path):
    pts = np.array([[0.1, -2.5], [1.0 / 3.0, 7.0]])
    marks = {"mark": np.array([0.25, 0.75])}
    write_points_csv(tmp_path / "p.csv", pts, marks)
    back, m = read_points_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back, pts)
    np.testing.assert_array_equal(m["mark"], marks["mark"])
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x1,x2,mark"
