import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whitneylab import builtins
from whitneylab.dimension import MeasureWeights, cylinder_weight, moran_value, similarity_dimension, solve_moran
from whitneylab.errors import DegenerateError, DomainError
from whitneylab.geometry import level_words


def test_whitney_dimension():
    assert similarity_dimension([1 / 3] * 4) == pytest.approx(math.log(4) / math.log(3), abs=1e-12)


def test_closed_forms():
    assert similarity_dimension([0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)
    assert similarity_dimension([0.4, 0.4]) == pytest.approx(0.7564707973660301, abs=1e-12)


def test_residual_is_reported():
    sol = solve_moran([1 / 3] * 4)
    assert abs(sol.residual) <= 1e-14
    assert sol.iterations > 0


def test_moran_value_examples():
    assert moran_value([1 / 3] * 4, 1.0) == pytest.approx(4 / 3, rel=1e-15)
    assert moran_value([1 / 3] * 4, math.log(4) / math.log(3)) == pytest.approx(1.0, abs=1e-14)
    assert moran_value([1 / 9] * 14, 1.0) == pytest.approx(14 / 9, rel=1e-15)
    with pytest.raises(DomainError):
        moran_value([0.5], -1.0)


def test_rejections():
    with pytest.raises(DegenerateError):
        similarity_dimension([0.5])
    with pytest.raises(DomainError):
        similarity_dimension([0.5, 1.2])
    with pytest.raises(DomainError):
        similarity_dimension([0.5, 0.0])


def test_cylinder_weight_examples():
    w = MeasureWeights.from_ratios([1 / 3] * 4)
    assert cylinder_weight(w, ()) == 1.0
    assert cylinder_weight(w, (1, 2, 3)) == pytest.approx(1 / 64, rel=1e-15)
    toy = MeasureWeights.from_ratios([0.4, 0.4])
    assert toy((1,)) == pytest.approx(0.5, rel=1e-15)


def test_weight_is_multiplicative():
    w = MeasureWeights.from_ratios([0.2, 0.3, 0.45])
    for word in [(1,), (2, 3), (3, 3, 1, 2)]:
        for i in (1, 2, 3):
            assert w(word + (i,)) == pytest.approx(w(word) * w.probabilities[i - 1], rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 0.9), min_size=2, max_size=8))
def test_root_correctness(ratios):
    s = similarity_dimension(ratios)
    assert moran_value(ratios, s) == pytest.approx(1.0, abs=1e-12)


def test_monotone_in_each_ratio():
    rng = random.Random(3)
    for _ in range(20):
        ratios = [rng.uniform(0.05, 0.6) for _ in range(rng.randint(2, 6))]
        i = rng.randrange(len(ratios))
        bigger = list(ratios)
        bigger[i] = min(0.95, ratios[i] * 1.2)
        assert similarity_dimension(bigger) > similarity_dimension(ratios)


@pytest.mark.parametrize("name", builtins.BUILTINS)
def test_partition_of_unity(name):
    sys = builtins.system(name)
    w = MeasureWeights.from_ratios(sys.ratios)
    for k in range(0, 9):
        if len(sys.ratios) ** k > 300_000:
            break
        total = math.fsum(w(tuple(int(x) for x in word)) for word in level_words(len(sys.ratios), k))
        assert total == pytest.approx(1.0, abs=1e-12)
