import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whitneylab.errors import DomainError, ShapeError
from whitneylab.geometry import Similitude, apply, compose_word, word_ratio

ratios = st.floats(0.05, 0.95)
angles = st.floats(-math.pi, math.pi)
coords = st.floats(-5, 5)


@st.composite
def similitudes(draw):
    return Similitude(draw(ratios), (draw(coords), draw(coords)), draw(angles), draw(st.booleans()))


def test_empty_word_is_identity():
    maps = [Similitude(0.4, (0.1, 0.1)), Similitude(0.4, (0.6, 0.6))]
    ident = compose_word(maps, ())
    assert ident.ratio == 1.0
    p = np.array([[0.3, -2.0], [5.0, 1.0]])
    assert np.array_equal(ident(p), p)
    assert word_ratio(maps, ()) == 1.0


def test_ratio_of_two_letter_word():
    maps = [Similitude(0.4, (0.1, 0.1)), Similitude(0.4, (0.6, 0.6))]
    assert compose_word(maps, (1, 2)).ratio == pytest.approx(0.16, rel=1e-15)
    assert word_ratio(maps, (1, 2, 1)) == pytest.approx(0.064, rel=1e-15)


def test_triple_word_matches_stepwise(systems):
    maps = systems("whitney-1935").maps
    phi = compose_word(maps, (1, 1, 1))
    assert phi.ratio == pytest.approx(1 / 27, rel=1e-15)
    pts = np.random.default_rng(1).random((10, 2))
    step = maps[0](maps[0](maps[0](pts)))
    assert np.allclose(phi(pts), step, atol=1e-15)
    assert word_ratio(maps, (1, 2, 3, 4, 1)) == pytest.approx(3.0 ** -5, rel=1e-15)


def test_apply_examples():
    assert np.allclose(apply(Similitude.identity(), (0.3, 0.7)), (0.3, 0.7))
    assert np.allclose(apply(Similitude(0.5, (0.5, 0.5)), (1, 1)), (1, 1))
    assert np.allclose(apply(Similitude(1 / 3, (0, 0), math.pi / 2), (1, 0)), (0, 1 / 3), atol=1e-16)


def test_apply_rejects_wrong_dimension():
    with pytest.raises(ShapeError):
        apply(Similitude(0.5, (0.0, 0.0)), (1.0, 2.0, 3.0))


def test_bad_letter_and_ratio():
    maps = [Similitude(0.5, (0.0, 0.0))]
    with pytest.raises(IndexError):
        compose_word(maps, (2,))
    with pytest.raises(DomainError):
        Similitude(1.5, (0.0, 0.0))


def test_three_dimensional_orthogonal_part():
    rot = ((0.0, -1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    phi = Similitude(0.5, (1.0, 0.0, 0.0), orthogonal=rot)
    assert np.allclose(phi((1.0, 0.0, 0.0)), (1.0, 0.5, 0.0))
    with pytest.raises(DomainError):
        Similitude(0.5, (0, 0, 0), orthogonal=((1, 1, 0), (0, 1, 0), (0, 0, 1)))


@settings(max_examples=200, deadline=None)
@given(similitudes(), st.lists(coords, min_size=4, max_size=4))
def test_distances_scale_by_ratio(phi, xy):
    x, y = np.array(xy[:2]), np.array(xy[2:])
    d = np.linalg.norm(x - y)
    if d < 1e-6:
        return
    assert np.linalg.norm(phi(x) - phi(y)) / d == pytest.approx(phi.ratio, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(similitudes(), min_size=1, max_size=3), st.data())
def test_word_homomorphism(maps, data):
    n = len(maps)
    letters = st.integers(1, n)
    w1 = tuple(data.draw(st.lists(letters, max_size=5)))
    w2 = tuple(data.draw(st.lists(letters, max_size=5)))
    pts = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    lhs = compose_word(maps, w1 + w2)(pts)
    rhs = compose_word(maps, w1)(compose_word(maps, w2)(pts))
    assert np.allclose(lhs, rhs, atol=1e-12, rtol=0)
    r = word_ratio(maps, w1 + w2)
    assert r == pytest.approx(word_ratio(maps, w1) * word_ratio(maps, w2), rel=4e-16 * (len(w1 + w2) + 1))


def test_long_words_do_not_underflow():
    maps = [Similitude(1e-5, (0.0, 0.0))]
    r = word_ratio(maps, (1,) * 100)
    assert r == 0.0 or math.isclose(math.log(r), 100 * math.log(1e-5), rel_tol=1e-12)
