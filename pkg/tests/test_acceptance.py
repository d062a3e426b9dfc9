"""Acceptance criteria 1 to 10.  Each test prints one PASS/FAIL line; the
terminal summary repeats them in order."""

import json
import math
import time
import timeit

import numpy as np
import pytest

from _oracles import check_meet_words, recursive_chain
from whitneylab import builtins
from whitneylab.cli import OK, main
from whitneylab.config import build, load_config, save_config
from whitneylab.dimension import MeasureWeights, similarity_dimension
from whitneylab.render import RenderSpec, count_elements, render_svg
from whitneylab.whitney import ZERO_CASES, chain, f_at_node, modulus_report
from whitneylab.zipper import hata_graph, is_connected, validate_zipper

# pinned tolerances and time limits
DIM_TOL = 1e-12
UNITY_TOL = 1e-12
RECURSION_TOL = 1e-12
LIFT_DIM_TOL = 1e-12
EPS = 1e-3
ZIPPER_LEVEL = 5
MODULUS_LEVEL = 6
LIFT_MODULUS_LEVEL = 4
MEET_PAIRS = 500
LIMITS = {1: 1e-3, 2: 1.0, 3: 10.0, 6: 90.0, 7: 60.0, 10: 180.0}


def report(number: int, ok: bool, detail: str = "") -> None:
    print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.mark.criterion(1, "dimension anchor log4/log3")
def test_criterion_01_dimension_anchor():
    s = similarity_dimension([1 / 3] * 4)
    per_call = min(timeit.repeat(lambda: similarity_dimension([1 / 3] * 4), number=20, repeat=5)) / 20
    err = abs(s - math.log(4) / math.log(3))
    report(1, err <= DIM_TOL and per_call < LIMITS[1], f"error {err:.1e}, {per_call * 1e3:.3f} ms per call")


@pytest.mark.criterion(2, "partition of unity for every built-in, k <= 8")
def test_criterion_02_partition_of_unity():
    t0 = time.perf_counter()
    worst = 0.0
    for name in builtins.BUILTINS:
        ratios = builtins.system(name).ratios
        s = similarity_dimension(ratios)
        logs = np.log(ratios)
        level = np.zeros(1)
        for k in range(1, 9):
            level = (level[:, None] + logs[None, :]).ravel()
            worst = max(worst, abs(math.fsum(np.exp(s * level)) - 1.0))
    took = time.perf_counter() - t0
    report(2, worst <= UNITY_TOL and took < LIMITS[2], f"worst deviation {worst:.1e}, {took:.2f} s")


@pytest.mark.criterion(3, "zipper validation of built-ins and broken fixtures")
def test_criterion_03_zipper_validation():
    t0 = time.perf_counter()
    v = {name: validate_zipper(builtins.system(name), EPS, ZIPPER_LEVEL)
         for name in ("whitney-1935", "whitney-rhombus") + builtins.FIXTURES}
    took = time.perf_counter() - t0
    good = v["whitney-1935"].passed and v["whitney-rhombus"].passed
    chain_ = v["diag-toy-broken-chain"]
    overlap = v["whitney-overlap"]
    detached = v["diag-toy-detached"]
    specific = (not chain_.condition("ii").passed
                and overlap.condition("ii").passed and not overlap.condition("iii").passed
                and not detached.condition("ii").passed and not detached.condition("iii").passed)
    report(3, good and specific and took < LIMITS[3],
           f"built-ins pass: {good}, fixtures fail the right condition: {specific}, {took:.2f} s")


@pytest.mark.criterion(4, "Hata graph connectivity")
def test_criterion_04_hata_connectivity(koch_lift):
    passing = {name: builtins.system(name) for name in ("whitney-1935", "whitney-rhombus", "diag-toy")}
    passing["koch-lift2"] = koch_lift[0]
    verdicts = {}
    for name, sys in passing.items():
        assert validate_zipper(sys, EPS, 3).passed, name
        verdicts[name] = is_connected(hata_graph(sys))
    detached = is_connected(hata_graph(builtins.system("diag-toy-detached")))
    report(4, all(verdicts.values()) and not detached, f"connected: {verdicts}, detached connected: {detached}")


@pytest.mark.criterion(5, "Whitney function values")
def test_criterion_05_whitney_function():
    sys = builtins.system("whitney-1935")
    weights = MeasureWeights.from_ratios(sys.ratios)
    ch = chain(sys, MODULUS_LEVEL)
    ends = ch.f[0] == 0.0 and ch.f[-1] == 1.0
    monotone = bool(np.all(np.diff(ch.f) >= 0))
    rng = np.random.default_rng(0)
    sample = rng.choice(ch.n_nodes, 3000, replace=False)
    recursion = max(abs(ch.f[i] - f_at_node(sys, weights, ch.address(int(i)))) for i in sample)
    exact = True
    for k in range(1, MODULUS_LEVEL + 1):
        points, f = recursive_chain(sys, k)
        exact &= bool(np.array_equal(chain(sys, k).f, f)) and np.allclose(chain(sys, k).points, points, atol=1e-12)
    report(5, ends and monotone and recursion <= RECURSION_TOL and exact,
           f"f(a)=0, f(b)=1: {ends}; monotone: {monotone}; recursion error {recursion:.1e}; "
           f"prefix-sum oracle exact: {exact}")


@pytest.mark.criterion(6, "modulus bound over all pairs of level-6 nodes")
def test_criterion_06_modulus_bound():
    t0 = time.perf_counter()
    r = modulus_report(builtins.system("whitney-1935"), k=MODULUS_LEVEL, pair_budget=None)
    took = time.perf_counter() - t0
    s = r.summary
    records_ok = all(rec["satisfied"] for rec in r.records)
    zero_ok = s["zero_case_nonzero"] == 0 and all(rec["f1"] == rec["f2"] for rec in r.records
                                                  if rec["case"] in ZERO_CASES)
    buckets = [b for b in s["buckets"] if 1 <= b["j"] <= 5]
    buckets_ok = len(buckets) == 5 and all(b["satisfied"] and b["pairs"] > 0 for b in buckets)
    ok = (r.passed and s["mode"] == "exhaustive" and s["pairs_evaluated"] == s["pairs_total"]
          and s["violations_total"] == 0 and records_ok and zero_ok and buckets_ok
          and s["buckets_decreasing"] and took < LIMITS[6])
    report(6, ok, f"{s['pairs_evaluated']} pairs, {s['violations_total']} violations, "
                  f"bucket sups {[round(b['sup_quotient'], 4) for b in buckets]}, {took:.1f} s")


@pytest.mark.criterion(7, "arc lift pipeline for the Koch curve")
def test_criterion_07_koch_pipeline(tmp_path, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "koch-lift.json"
    code = main(["lift", "koch", "--kmax", "5", "-o", str(out)])
    data = json.loads(capsys.readouterr().out)
    lifted = build(load_config(out))
    valid = validate_zipper(lifted, EPS, 3).passed
    modulus = modulus_report(lifted, k=LIFT_MODULUS_LEVEL)
    took = time.perf_counter() - t0
    rep = data["report"]
    ok = (code == OK and data["level"] == 2
          and abs(rep["inner_dimension"] - math.log(14) / math.log(9)) <= LIFT_DIM_TOL
          and abs(rep["end_weight_sum"] - 0.125) <= 1e-12 and rep["end_weight_below_half"]
          and valid and modulus.passed and took < LIMITS[7])
    report(7, ok, f"k = {data['level']}, interior dimension {rep['inner_dimension']!r}, "
                  f"end weights {rep['end_weight_sum']!r}, lifted valid: {valid}, "
                  f"modulus passed: {modulus.passed} ({modulus.summary['mode']}), {took:.1f} s")


@pytest.mark.criterion(8, "meet words against containment search")
def test_criterion_08_meet_word_oracle(koch_lift):
    checked = {}
    for name in ("whitney-1935", "whitney-rhombus", "diag-toy"):
        checked[name] = check_meet_words(builtins.system(name), 5, MEET_PAIRS)
    checked["koch-lift2"] = check_meet_words(koch_lift[0], 3, MEET_PAIRS)
    report(8, all(n == MEET_PAIRS for n in checked.values()), f"pairs checked: {checked}")


@pytest.mark.criterion(9, "render count, byte identity, config round trip")
def test_criterion_09_determinism(tmp_path):
    spec = RenderSpec(level=3)
    first = render_svg(builtins.system("whitney-1935"), spec)
    second = render_svg(builtins.system("whitney-1935"), spec)
    count = count_elements(first)
    exact = True
    for name in builtins.BUILTINS:
        cfg = builtins.get(name)
        save_config(cfg, tmp_path / f"{name}.json")
        exact &= load_config(tmp_path / f"{name}.json") == cfg
    report(9, count == 169 and first == second and exact,
           f"{count} elements, identical: {first == second}, round trip exact: {exact}")


@pytest.mark.criterion(10, "whole suite wall clock")
def test_criterion_10_suite_time(request):
    took = time.perf_counter() - request.config.whitneylab_started
    report(10, took < LIMITS[10], f"{took:.1f} s since the session started (limit {LIMITS[10]:.0f} s)")
