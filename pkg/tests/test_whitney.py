import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from _oracles import base_tree, check_meet_words, geometric_meet_length, inverse_levels, recursive_chain
from whitneylab.dimension import MeasureWeights
from whitneylab.errors import DomainError
from whitneylab.geometry import level_maps
from whitneylab.whitney import NodeAddress, chain, f_at_node, f_at_point, meet_word, meet_word_index, nodes

LINEAR = ("whitney-1935", "whitney-rhombus", "diag-toy")


def weights(sys):
    return MeasureWeights.from_ratios(sys.ratios)


# ---------------------------------------------------------------- nodes


def test_diag_toy_level_one_nodes(systems):
    pts = [tuple(np.round(p, 12)) for _, p in nodes(systems("diag-toy"), 1)]
    assert pts == [(0.0, 0.0), (0.1, 0.1), (0.5, 0.5), (0.6, 0.6), (1.0, 1.0)]


@pytest.mark.parametrize("name", LINEAR)
@pytest.mark.parametrize("k", [1, 2, 3])
def test_chain_is_connected_end_to_end(systems, name, k):
    ch = chain(systems(name), k)
    assert np.allclose(ch.starts[1:], ch.ends[:-1], atol=1e-12)
    assert np.allclose(ch.points[0], systems(name).a) and np.allclose(ch.points[-1], systems(name).b)
    assert ch.n_nodes == ch.n_pieces + 1


@pytest.mark.parametrize("name", LINEAR)
def test_nodes_are_images_of_base_nodes(systems, name):
    """Every level-k node is phi_w of a level-0 node with |w| <= k."""
    sys = systems(name)
    base = np.array([sys.a, sys.b] + [p for c in sys.components for p in (c.start, c.end)])
    imgs = [base]
    for j in range(1, 4):
        lin, off, _ = level_maps(sys.maps, j)
        imgs.append((np.einsum("mij,pj->mpi", lin, base) + off[:, None, :]).reshape(-1, sys.dim))
    tree = cKDTree(np.concatenate(imgs))
    d, _ = tree.query(chain(sys, 3).points)
    assert d.max() < 1e-12


# ---------------------------------------------------------------- f


def test_f_examples(systems):
    toy = systems("diag-toy")
    ch = chain(toy, 2)
    at = {tuple(np.round(p, 12)): f for p, f in zip(ch.points, ch.f)}
    assert at[(0.5, 0.5)] == 0.5
    assert at[(0.3, 0.3)] == 0.25
    w = systems("whitney-1935")
    chw = chain(w, 1)
    end_m1 = chw.index_of(NodeAddress((), 2, "end"))
    assert chw.f[end_m1] == 0.25


@pytest.mark.parametrize("name", LINEAR)
def test_f_endpoints_and_monotone(systems, name):
    ch = chain(systems(name), 4)
    assert ch.f[0] == 0.0
    assert ch.f[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(ch.f) >= 0)


@pytest.mark.parametrize("name", LINEAR)
@pytest.mark.parametrize("k", range(1, 7))
def test_f_matches_word_recursion(systems, name, k):
    """Vectorised prefix sums against the recursion f(phi_w x) = F(w) + weight(w) f(x)."""
    sys = systems(name)
    ch = chain(sys, k)
    wts = weights(sys)
    n = ch.n_nodes
    idx = range(n) if n <= 2000 else np.random.default_rng(k).choice(n, 2000, replace=False)
    for i in idx:
        assert ch.f[i] == pytest.approx(f_at_node(sys, wts, ch.address(int(i))), abs=1e-12)


@pytest.mark.parametrize("name", LINEAR)
@pytest.mark.parametrize("k", range(1, 7))
def test_chain_matches_recursive_prefix_sums(systems, name, k):
    points, f = recursive_chain(systems(name), k)
    ch = chain(systems(name), k)
    assert np.allclose(ch.points, points, atol=1e-12, rtol=0)
    if name.startswith("whitney"):
        assert np.array_equal(ch.f, f)  # dyadic masses: sums are exact
    else:
        assert np.allclose(ch.f, f, atol=1e-12, rtol=0)


@pytest.mark.parametrize("name", LINEAR)
def test_f_self_similarity(systems, name):
    """Nodes inside phi_i(K) carry f = f(phi_i(a)) + p_i f(preimage)."""
    sys = systems(name)
    wts = weights(sys)
    ch3, ch2 = chain(sys, 3), chain(sys, 2)
    f2 = {tuple(np.round(p, 10)): f for p, f in zip(ch2.points, ch2.f)}
    start = {}
    for i in range(1, sys.n_maps + 1):
        start[i] = f_at_node(sys, wts, NodeAddress((), sys.map_position(i) + 1, "start"))
    checked = 0
    for addr, p, f in zip(ch3.addresses(), ch3.points, ch3.f):
        if not addr.word:
            continue
        i = addr.word[0]
        phi = sys.maps[i - 1]
        pre = tuple(np.round(np.linalg.solve(phi.linear, p - phi.offset), 10))
        if pre in f2:
            assert f == pytest.approx(start[i] + wts.probabilities[i - 1] * f2[pre], abs=1e-12)
            checked += 1
    assert checked > 0


# ---------------------------------------------------------------- f at arbitrary points


def test_f_at_point_on_condensation_is_exact(systems):
    toy = systems("diag-toy")
    v = f_at_point(toy, weights(toy), (0.55, 0.55))
    assert v.exact and v.value == 0.5


def test_f_at_point_limit_point_bracket(systems):
    toy = systems("diag-toy")
    v = f_at_point(toy, weights(toy), (1.0, 1.0), kmax=10)
    assert v.lower <= 1.0 <= v.upper
    assert v.error <= 2.0 ** -10 + 1e-15


def test_f_at_point_start_and_outside(systems):
    toy = systems("diag-toy")
    assert f_at_point(toy, weights(toy), toy.a).value == 0.0
    with pytest.raises(DomainError):
        f_at_point(toy, weights(toy), (0.9, 0.1))


@pytest.mark.parametrize("name", LINEAR)
def test_f_at_point_agrees_with_nodes(systems, name):
    sys = systems(name)
    ch = chain(sys, 3)
    rng = np.random.default_rng(1)
    for i in rng.choice(ch.n_nodes, min(50, ch.n_nodes), replace=False):
        v = f_at_point(sys, weights(sys), ch.points[i], kmax=8)
        assert v.lower - 1e-12 <= ch.f[i] <= v.upper + 1e-12


# ---------------------------------------------------------------- meet words


@pytest.mark.parametrize("name", LINEAR)
def test_meet_word_matches_geometric_oracle(systems, name):
    assert check_meet_words(systems(name), 5) == 500


def test_meet_word_on_chain_neighbours(systems):
    """Consecutive nodes are where long meet words live."""
    sys = systems("whitney-1935")
    ch = chain(sys, 5)
    inv, tree = inverse_levels(sys, 5), base_tree(sys, 5)
    rng = np.random.default_rng(11)
    for i in rng.integers(0, ch.n_nodes - 3, size=150):
        j = int(i + rng.integers(1, 4))
        w = meet_word_index(ch, int(i), j)
        assert len(w) == geometric_meet_length(inv, tree, ch.points[i], ch.points[j])


def test_meet_word_examples(systems):
    toy = systems("diag-toy")
    # phi_1(a) and phi_1(b) bound the first cylinder
    assert meet_word(toy, NodeAddress((1,), 1, "start"), NodeAddress((1,), 4, "end"), 2) == (1,)
    # b lies in phi_2(K) but a does not
    assert meet_word(toy, NodeAddress((), 1, "start"), NodeAddress((2,), 4, "end"), 2) == ()
    # two nodes inside phi_2 phi_1(K)
    assert meet_word(toy, NodeAddress((2, 1), 1, "end"), NodeAddress((2, 1), 3, "end"), 3) == (2, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_meet_word_is_symmetric(systems, a, b):
    ch = chain(systems("whitney-1935"), 4)
    i1, i2 = a % ch.n_nodes, b % ch.n_nodes
    assert len(meet_word_index(ch, i1, i2)) == len(meet_word_index(ch, i2, i1))
    assert meet_word_index(ch, i1, i1) is not None


# ---------------------------------------------------------------- separation constants

from whitneylab.errors import PreconditionError  # noqa: E402
from whitneylab.systems import segment_segment_distance  # noqa: E402
from whitneylab.whitney import CSV_FIELDS, ZERO_CASES, classify_pair, modulus_report, separation_constants  # noqa: E402


def test_xi1_diag_toy(systems):
    c = separation_constants(systems("diag-toy"))
    assert c.xi1 == pytest.approx(0.4 * math.sqrt(2), rel=1e-12)
    assert c.M1 == pytest.approx(1 / c.xi1)


def test_xi1_is_the_exact_segment_distance(systems):
    sys = systems("whitney-1935")
    exact = min(segment_segment_distance(p.start, p.end, q.start, q.end)
                for p, q in itertools.combinations(sys.components, 2))
    c = separation_constants(sys)
    assert c.xi1 == pytest.approx(exact, rel=1e-12)
    assert abs(c.xi1_cloud - c.xi1) <= 2 * c.spacing


@pytest.mark.parametrize("name", ["whitney-1935", "whitney-rhombus"])
def test_cloud_bounds_are_below_finer_clouds(systems, name):
    """Halving the spacing can only shrink cloud distances towards the true value."""
    sys = systems(name)
    coarse, fine = separation_constants(sys, 2e-3), separation_constants(sys, 5e-4)
    assert coarse.valid and fine.valid
    for key in ("xi2", "xi3"):
        assert getattr(coarse, key) <= getattr(fine, key + "_cloud") + 1e-12


def test_separation_requires_a_valid_zipper(systems):
    with pytest.raises(PreconditionError):
        separation_constants(systems("whitney-overlap"))


# ---------------------------------------------------------------- classification and reports


def test_classify_examples(systems):
    toy = systems("diag-toy")
    # both ends of C1: same condensation piece
    assert classify_pair(toy, NodeAddress((), 1, "start"), NodeAddress((), 1, "end"), 1) == "1"
    w = systems("whitney-1935")
    # end of C1 and end of M1 share K as meet word, distinct top-level pieces
    assert classify_pair(w, NodeAddress((), 1, "start"), NodeAddress((), 9, "end"), 1) in ("2", "3.1")


@pytest.fixture(scope="module")
def small_report(systems):
    return modulus_report(systems("whitney-1935"), k=4, pair_budget=None)


def test_small_report_passes(small_report):
    s = small_report.summary
    assert small_report.passed
    assert s["mode"] == "exhaustive"
    assert s["pairs_total"] == s["nodes"] * (s["nodes"] - 1) // 2 == s["pairs_evaluated"]
    assert sum(s["case_counts"].values()) == s["pairs_total"]
    assert s["violations_total"] == 0 and s["zero_case_nonzero"] == 0


def test_zero_cases_have_equal_values(small_report):
    for rec in small_report.records:
        if rec["case"] in ZERO_CASES:
            assert rec["f1"] == rec["f2"]


def test_records_respect_their_bounds(small_report):
    for rec in small_report.records:
        assert rec["satisfied"] == (rec["quotient"] <= rec["bound"] * (1 + 1e-12))


def test_csv_and_json_round_trip(small_report, tmp_path):
    import csv
    import json

    small_report.write(tmp_path / "r.csv", tmp_path / "r.json")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == CSV_FIELDS
    assert len(rows) == small_report.summary["records_written"]
    assert float(rows[0]["quotient"]) == float(small_report.records[0]["quotient"])
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["summary"]["passed"] is True
    assert data["constants"]["valid"] is True


def test_reports_are_deterministic(systems):
    sys = systems("whitney-1935")
    a = modulus_report(sys, k=4, pair_budget=20_000, seed=3)
    b = modulus_report(sys, k=4, pair_budget=20_000, seed=3)
    assert a.summary["mode"] == "stratified"
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_stratified_sampling_covers_every_length(systems):
    r = modulus_report(systems("whitney-1935"), k=5, pair_budget=50_000)
    assert r.passed
    assert r.summary["pairs_evaluated"] <= 50_000
    assert sum(st["pairs"] for st in r.summary["strata"]) == r.summary["pairs_total"]
    assert {st["meet_length"] for st in r.summary["strata"]} == set(range(6))  # 0..k
    assert all(st["evaluated"] > 0 for st in r.summary["strata"] if st["pairs"])


def test_low_dimension_is_not_asserted(systems):
    r = modulus_report(systems("diag-toy"), k=4, pair_budget=None)
    assert not r.summary["bounds_asserted"] and not r.passed


def test_far_case_exists_in_the_tables(koch_lift):
    """Consecutive maps make the far orientation reachable in the lookup table."""
    from whitneylab.whitney import CASES, _combo_table, _tables

    rank, _ = _combo_table(_tables(koch_lift[0]))
    assert CASES.index("3.2-far") in set(rank.tolist())
