import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from geomcm.scoring import (
    Mbr, ScoringContext, combined_score, delta_max_upper_bound, distance_proximity, euclidean,
    euclidean_many, min_dist_to_mbr, score_upper_bound_for_node,
)

from oracles import boundary_min_distance, farthest_corner

UNIT = Mbr(0.0, 0.0, 1.0, 1.0)


@pytest.mark.parametrize("a, b, want", [((0, 0), (3, 4), 5.0), ((2, 2), (2, 2), 0.0), ((1, 2), (-2, 6), 5.0)])
def test_euclidean(a, b, want):
    assert euclidean(a, b) == want


def test_delta_max_examples():
    assert delta_max_upper_bound((0.5, 0.5), UNIT) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert delta_max_upper_bound((0.0, 0.0), UNIT) == pytest.approx(math.sqrt(2), abs=1e-12)
    # oracle: enumerate corners
    want = farthest_corner((5, 5), UNIT)
    assert want == pytest.approx(math.sqrt(50), abs=1e-12)
    assert delta_max_upper_bound((5.0, 5.0), UNIT) == pytest.approx(want, abs=1e-12)


def test_distance_proximity_examples():
    ctx = ScoringContext(5.0, 0.5)
    assert distance_proximity(0.0, ctx) == 1.0
    assert distance_proximity(5.0, ctx) == 0.0
    assert distance_proximity(2.5, ctx) == 0.5
    with pytest.raises(ValueError):
        distance_proximity(5.1, ctx)


def test_zero_delta_max_means_colocated():
    assert distance_proximity(0.0, ScoringContext(0.0, 0.5)) == 1.0


def test_combined_score_examples():
    assert combined_score(0.4, 0.8, 0.5) == pytest.approx(0.6, abs=1e-15)
    assert combined_score(0.9, 0.123, 0.0) == 0.123
    assert combined_score(0.3, -0.7, 1.0) == 0.3


def test_min_dist_examples():
    assert min_dist_to_mbr((0.5, 0.5), UNIT) == 0.0
    assert min_dist_to_mbr((2, 0.5), UNIT) == 1.0
    want = boundary_min_distance((3, 5), UNIT)
    assert want == pytest.approx(math.sqrt(20), abs=1e-12)
    assert min_dist_to_mbr((3, 5), UNIT) == pytest.approx(want, abs=1e-12)


def test_score_upper_bound_examples():
    assert score_upper_bound_for_node((0.5, 0.5), UNIT, ScoringContext(3.0, 0.5)) == 1.0
    # query at distance delta_max from the box, mu = 1
    ctx = ScoringContext(2.0, 1.0)
    assert score_upper_bound_for_node((3.0, 0.5), UNIT, ctx) == 0.0


finite = st.floats(-1e3, 1e3, allow_nan=False)
boxes = st.tuples(finite, finite, finite, finite).map(
    lambda t: Mbr(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3])))
unit = st.floats(0.0, 1.0)


@given(boxes, st.tuples(finite, finite), st.lists(st.tuples(unit, unit), min_size=1, max_size=20))
def test_min_dist_lower_bounds_points_inside(box, q, fracs):
    for fx, fy in fracs:
        p = (box.minx + fx * (box.maxx - box.minx), box.miny + fy * (box.maxy - box.miny))
        p = (min(max(p[0], box.minx), box.maxx), min(max(p[1], box.miny), box.maxy))
        assert min_dist_to_mbr(q, box) <= euclidean(q, p)


@given(boxes, st.tuples(finite, finite), unit, st.lists(st.tuples(unit, unit, st.floats(-1.0, 1.0)), min_size=1, max_size=20))
def test_upper_bound_dominates_objects_in_box(box, q, mu, objs):
    ctx = ScoringContext(delta_max_upper_bound(q, box), mu)
    bound = score_upper_bound_for_node(q, box, ctx)
    for fx, fy, sim in objs:
        p = (min(max(box.minx + fx * (box.maxx - box.minx), box.minx), box.maxx),
             min(max(box.miny + fy * (box.maxy - box.miny), box.miny), box.maxy))
        s = combined_score(distance_proximity(euclidean(q, p), ctx), sim, mu)
        assert s <= bound


def test_upper_bound_dominates_sampled_objects():
    rng = np.random.default_rng(5)
    for _ in range(50):
        lo = rng.uniform(0, 50, 2)
        box = Mbr(lo[0], lo[1], lo[0] + rng.uniform(0, 20), lo[1] + rng.uniform(0, 20))
        q = rng.uniform(-30, 100, 2)
        ctx = ScoringContext(delta_max_upper_bound(q, box) + rng.uniform(0, 10), float(rng.uniform()))
        pts = np.column_stack([rng.uniform(box.minx, box.maxx, 100), rng.uniform(box.miny, box.maxy, 100)])
        sims = rng.uniform(-1, 1, 100)
        best = max(combined_score(distance_proximity(euclidean(q, p), ctx), s, ctx.mu) for p, s in zip(pts, sims))
        assert score_upper_bound_for_node(q, box, ctx) >= best


@given(st.floats(1e-3, 1e3), st.floats(0, 1), st.floats(0, 1))
def test_proximity_strictly_decreasing(dmax, a, b):
    assume(a != b)
    ctx = ScoringContext(dmax, 0.5)
    da, db = a * dmax, b * dmax
    assume(da != db)
    pa, pb = distance_proximity(da, ctx), distance_proximity(db, ctx)
    assert (pa > pb) == (da < db) or pa == pb  # equal only when rounding collapses them


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=30), st.tuples(finite, finite), st.floats(1.0, 10.0))
def test_mu_one_ranking_is_distance_ranking(points, q, inflate):
    d = [euclidean(q, p) for p in points]
    for dmax in (max(d) or 1.0, (max(d) or 1.0) * inflate):
        ctx = ScoringContext(dmax, 1.0)
        score = [combined_score(distance_proximity(x, ctx), 0.0, 1.0) for x in d]
        by_score = sorted(range(len(d)), key=lambda i: (-score[i], d[i], i))
        by_dist = sorted(range(len(d)), key=lambda i: (d[i], i))
        assert by_score == by_dist


def test_vectorized_distance_matches_scalar_bitwise():
    rng = np.random.default_rng(0)
    xy = rng.uniform(-1e3, 1e3, (500, 2))
    q = (12.345, -678.9)
    many = euclidean_many(q, xy)
    assert all(many[i] == euclidean(q, xy[i]) for i in range(len(xy)))
