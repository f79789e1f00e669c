import math

import numpy as np
import pytest

from lanechange import collision as co


def dense_min_distance(e1, e2, n=2500, refine=3):
    """Two-stage dense-sampling oracle, independent of the projection path."""
    import itertools

    def pts(e, phi):
        bx = e.semi_major * np.cos(phi)
        by = e.semi_minor * np.sin(phi)
        return e._to_world(bx, by)

    p1_grid = np.linspace(0, 2 * math.pi, n, endpoint=False)
    p2_grid = np.linspace(0, 2 * math.pi, n, endpoint=False)
    for _ in range(refine):
        p1 = pts(e1, p1_grid)
        p2 = pts(e2, p2_grid)
        d2 = ((p1[:, None, :] - p2[None, :, :]) ** 2).sum(-1)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        best = math.sqrt(d2[i, j])
        w1 = (p1_grid[1] - p1_grid[0]) if len(p1_grid) > 1 else 1e-3
        w2 = (p2_grid[1] - p2_grid[0]) if len(p2_grid) > 1 else 1e-3
        p1_grid = np.linspace(p1_grid[i] - w1, p1_grid[i] + w1, 200)
        p2_grid = np.linspace(p2_grid[j] - w2, p2_grid[j] + w2, 200)
    return best


def test_axis_aligned_boundary():
    cfg = co.CollisionConfig()
    e = co.boundary_of((0.0, 0.0), 0.0, cfg)
    assert e.implicit(2.5, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert e.implicit(0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_rotated_boundary_satisfies_implicit():
    cfg = co.CollisionConfig()
    for heading in (0.1, math.pi / 2, -0.7, 2.9):
        e = co.boundary_of((3.0, -1.0), heading, cfg)
        pts = e.boundary_points(721)
        vals = e.implicit(pts[:, 0], pts[:, 1])
        assert np.abs(vals - 1.0).max() < 1e-12


def test_heading_sign_convention():
    # body point at parameter angle 0 maps to center + (Ca cos h, -Ca sin h)
    cfg = co.CollisionConfig()
    e = co.boundary_of((0.0, 0.0), 0.1, cfg)
    p = e.boundary_points(721)[0]
    assert p[0] == pytest.approx(2.5 * math.cos(0.1), abs=1e-12)
    assert p[1] == pytest.approx(-2.5 * math.sin(0.1), abs=1e-12)


def test_quarter_turn_swaps_axes():
    cfg = co.CollisionConfig()
    e = co.boundary_of((0.0, 0.0), math.pi / 2, cfg)
    # world x-extent is now the minor axis
    assert e.implicit(1.0, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert e.implicit(0.0, 2.5) == pytest.approx(1.0, abs=1e-12)


def test_collinear_distance():
    e1 = co.EllipseBoundary(0, 0, 0, 2.5, 1.0)
    e2 = co.EllipseBoundary(10, 0, 0, 2.5, 1.0)
    assert co.min_distance(e1, e2) == pytest.approx(5.0, abs=1e-6)


def test_concentric_overlap():
    e1 = co.EllipseBoundary(0, 0, 0, 2.5, 1.0)
    e2 = co.EllipseBoundary(0, 0, 0.4, 2.5, 1.0)
    d, overlap = co.min_distance_info(e1, e2)
    assert d == 0.0 and overlap


def test_contained_ellipse_overlaps():
    outer = co.EllipseBoundary(0, 0, 0, 5.0, 3.0)
    inner = co.EllipseBoundary(0.5, 0.2, 0.3, 1.0, 0.5)
    d, overlap = co.min_distance_info(outer, inner)
    assert d == 0.0 and overlap


def test_specific_pair_against_oracle():
    e1 = co.EllipseBoundary(0, 0, 0, 2.5, 1.0)
    e2 = co.EllipseBoundary(6, 3.5, 0.2, 2.5, 1.0)
    assert co.min_distance(e1, e2) == pytest.approx(dense_min_distance(e1, e2), abs=1e-3)


def test_projection_returns_boundary_point():
    rng = np.random.default_rng(5)
    for _ in range(300):
        e = co.EllipseBoundary(rng.uniform(-5, 5), rng.uniform(-5, 5),
                               rng.uniform(-3, 3), rng.uniform(0.5, 4.0), rng.uniform(0.3, 3.0))
        p = rng.uniform(-10, 10, size=2)
        q = co.project_point(e, p)
        assert e.implicit(q[0], q[1]) == pytest.approx(1.0, abs=1e-9)
        # no sampled boundary point is closer than the projection
        pts = e.boundary_points(2000)
        d_all = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1]).min()
        assert np.hypot(*(q - p)) <= d_all + 1e-6


def _random_pair(rng):
    e1 = co.EllipseBoundary(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3),
                            rng.uniform(0.8, 3.5), rng.uniform(0.4, 2.0))
    e2 = co.EllipseBoundary(rng.uniform(-14, 14), rng.uniform(-14, 14), rng.uniform(-3, 3),
                            rng.uniform(0.8, 3.5), rng.uniform(0.4, 2.0))
    return e1, e2


def test_oracle_agreement_100_pairs():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 100:
        e1, e2 = _random_pair(rng)
        d, overlap = co.min_distance_info(e1, e2)
        if overlap:
            continue
        assert d == pytest.approx(dense_min_distance(e1, e2), abs=1e-3)
        checked += 1


def test_min_distance_symmetry_and_translation():
    rng = np.random.default_rng(77)
    for _ in range(40):
        e1, e2 = _random_pair(rng)
        d12 = co.min_distance(e1, e2)
        d21 = co.min_distance(e2, e1)
        assert d12 == pytest.approx(d21, abs=1e-9)
        dx, dy = rng.uniform(-50, 50, size=2)
        t1 = co.EllipseBoundary(e1.cx + dx, e1.cy + dy, e1.heading, e1.semi_major, e1.semi_minor)
        t2 = co.EllipseBoundary(e2.cx + dx, e2.cy + dy, e2.heading, e2.semi_major, e2.semi_minor)
        assert co.min_distance(t1, t2) == pytest.approx(d12, abs=1e-9)


def test_rectangle_containment_default_violates():
    ok, value = co.rectangle_containment_check(co.CollisionConfig())
    assert not ok
    assert value == pytest.approx(2.0, abs=1e-12)


def test_rectangle_containment_roomier_ellipse():
    ok, value = co.rectangle_containment_check(
        co.CollisionConfig(5.0, 2.0, 3.6, 1.5))
    assert ok
    assert value == pytest.approx((2.5 / 3.6) ** 2 + (1.0 / 1.5) ** 2, abs=1e-12)


def test_rectangle_containment_degenerate_width():
    ok, _ = co.rectangle_containment_check(co.CollisionConfig(5.0, 0.0, 2.5, 1.0))
    assert ok
    ok2, _ = co.rectangle_containment_check(co.CollisionConfig(5.2, 0.0, 2.5, 1.0))
    assert not ok2
