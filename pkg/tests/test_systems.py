import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from whitneylab import builtins
from whitneylab.dimension import MeasureWeights
from whitneylab.errors import ConfigError, DomainError, ResourceError
from whitneylab.geometry import Similitude
from whitneylab.systems import (Box, CondensationComponent, CondensationSystem, approximate_attractor,
                                approximate_inner_attractor, invariant_box, piece_count,
                                segment_segment_distance)

LINEAR = ("whitney-1935", "whitney-rhombus", "diag-toy", "whitney-overlap")


def _inside_polygon(pts, poly, tol=1e-9):
    """Points inside a convex polygon (counter- or clockwise)."""
    edges = np.roll(poly, -1, axis=0) - poly
    rel = pts[:, None, :] - poly[None]
    cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
    return np.all(cross >= -tol, axis=1) | np.all(cross <= tol, axis=1)


def test_whitney_piece_count():
    ps = approximate_attractor(builtins.system("whitney-1935"), 3, 1e-2, with_points=False)
    assert len(ps) == 169
    assert len(ps.of_kind("condensation")) == 105
    assert len(ps.of_kind("cylinder")) == 64


def test_level_zero_is_one_cylinder(systems):
    ps = approximate_attractor(systems("diag-toy"), 0, 1e-2)
    assert len(ps) == 1
    assert ps.pieces[0].kind == "cylinder" and ps.pieces[0].word == ()


def test_diag_toy_clouds_are_collinear(systems):
    ps = approximate_attractor(systems("diag-toy"), 2, 1e-2)
    assert len(ps.of_kind("condensation")) == 6
    assert len(ps.of_kind("cylinder")) == 4
    for piece in ps.pieces:
        x, y = piece.points[:, 0], piece.points[:, 1]
        assert np.all(np.abs(x - y) <= 1e-9)
        assert np.all((x >= -1e-9) & (x <= 1 + 1e-9))


@pytest.mark.parametrize("name", LINEAR)
def test_count_formula(name):
    sys = builtins.system(name)
    for k in range(0, 7):
        expected = sys.m * (sys.n_maps ** k - 1) // (sys.n_maps - 1) + sys.n_maps ** k
        assert piece_count(sys.m, sys.n_maps, k) == expected
        if k <= 4:
            assert len(approximate_attractor(sys, k, 1e-2, with_points=False)) == expected


def test_inner_attractor_examples(systems):
    maps = [Similitude(1 / 3, (0, 0)), Similitude(1 / 3, (2 / 3, 0)),
            Similitude(1 / 3, (0, 2 / 3)), Similitude(1 / 3, (2 / 3, 2 / 3))]
    ps = approximate_inner_attractor(maps, 2, 1e-2)
    assert len(ps) == 16
    assert all(p.ratio == pytest.approx(1 / 9, rel=1e-15) for p in ps.pieces)
    assert all(p.diameter == pytest.approx(ps.region.diameter / 9, rel=1e-12) for p in ps.pieces)
    toy = approximate_inner_attractor(systems("diag-toy").maps, 1, 1e-2)
    assert [p.ratio for p in toy.pieces] == pytest.approx([0.4, 0.4])
    deep = approximate_inner_attractor(systems("whitney-1935").maps, 6, 1e-2, with_points=False)
    assert len(deep) == 4096
    s = math.log(4) / math.log(3)
    assert math.fsum(p.ratio ** s for p in deep.pieces) == pytest.approx(1.0, abs=1e-12)


def test_piece_cap():
    with pytest.raises(ResourceError) as err:
        approximate_attractor(builtins.system("whitney-1935"), 12, 1e-2, cap=1000)
    assert err.value.cap == 1000


@pytest.mark.parametrize("name", ("diag-toy", "whitney-1935"))
def test_bounding_region_is_unit_square_compatible(name):
    sys = builtins.system(name)
    box = sys.bounding_region()
    assert box.is_invariant(sys.maps)
    for comp in sys.components:
        assert np.all(box.contains(comp.vertex_array, 1e-12))
    unit = Box((0.0, 0.0), (1.0, 1.0))
    assert unit.is_invariant(sys.maps)


def test_bounding_region_single_map():
    maps = [Similitude(0.5, (0.0, 0.0))]
    seg = np.array([[0.2, 0.9], [0.9, 0.2]])
    box = invariant_box(maps, np.concatenate([seg, [[0.0, 0.0]]]))
    assert np.all(box.contains(seg)) and np.all(box.contains(np.zeros((1, 2))))
    assert box.is_invariant(maps)


def test_clouds_inside_pieces(systems):
    sys = systems("whitney-1935")
    ps = approximate_attractor(sys, 2, 5e-3)
    for piece in ps.of_kind("cylinder"):
        assert np.all(_inside_polygon(piece.points, piece.geometry))


def test_nesting_of_descendants(systems):
    sys = systems("whitney-rhombus")
    coarse = {p.word: p for p in approximate_attractor(sys, 2, 1e-2, with_points=False).of_kind("cylinder")}
    fine = approximate_attractor(sys, 4, 5e-3).of_kind("cylinder")
    rng = np.random.default_rng(5)
    for idx in rng.choice(len(fine), 200, replace=False):
        piece = fine[idx]
        parent = coarse[piece.word[:2]]
        assert np.all(_inside_polygon(piece.points, parent.geometry))


def test_monotone_refinement(systems):
    sys = systems("whitney-1935")
    rho = max(sys.ratios)
    diam = sys.bounding_region().diameter
    for k in (1, 2, 3):
        a = approximate_attractor(sys, k, 1e-2).all_points()
        b = approximate_attractor(sys, k + 1, 1e-2).all_points()
        h = max(cKDTree(a).query(b)[0].max(), cKDTree(b).query(a)[0].max())
        assert h <= rho ** k * diam


def test_component_endpoint_must_lie_on_shape():
    with pytest.raises(DomainError):
        CondensationComponent("segment", ((0, 0), (1, 0)), (0, 0), (0.5, 0.1), 1)
    with pytest.raises(DomainError):
        CondensationComponent("triangle", ((0, 0), (1, 0), (0, 1)), (0, 0), (1, 0), 1)


def test_sample_spacing_and_endpoints():
    comp = CondensationComponent("polyline", ((0, 0), (1, 0), (1, 1)), (0, 0), (1, 1), 1)
    pts = comp.sample(0.01)
    assert np.allclose(pts[0], (0, 0)) and any(np.allclose(p, (1, 1)) for p in pts)
    steps = np.linalg.norm(np.diff(pts[:-1], axis=0), axis=1)
    assert steps.max() <= 0.01 + 1e-12


def test_segment_distance_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p0, p1, q0, q1 = rng.random((4, 2))
        t = np.linspace(0, 1, 2001)[:, None]
        a, b = p0 + t * (p1 - p0), q0 + t * (q1 - q0)
        brute = cKDTree(a).query(b)[0].min()
        assert segment_segment_distance(p0, p1, q0, q1) <= brute + 1e-12
        assert segment_segment_distance(p0, p1, q0, q1) >= brute - 1e-3


def test_condensation_system_needs_two_components():
    seg = CondensationComponent("segment", ((0, 0), (1, 0)), (0, 0), (1, 0), 1)
    with pytest.raises(ConfigError, match="m >= 2"):
        CondensationSystem((seg,), (Similitude(0.5, (0, 0)),))


def test_weights_sum_per_level(systems):
    sys = systems("whitney-1935")
    w = MeasureWeights.from_ratios(sys.ratios)
    assert w.probabilities == (0.25, 0.25, 0.25, 0.25)
