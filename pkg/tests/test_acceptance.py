"""Acceptance criteria 1-9.  Each test records one PASS/FAIL line, printed
as it runs and again in the terminal summary."""

from fractions import Fraction as F
import json
import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from keane_mixer import (
    Iet, IntervalSet, KeaneSystem, Permutation, StageParams, check_conditions, image_step,
    lemma2_check, lemma3_check, lengths_from_params, matrix_A, mixing_window_check,
    obstruction_check, rescale_to_integer, return_table,
)
from keane_mixer.cli import main

from oracles import matrix_columns
from test_exact import iets, interval_sets
from test_induction import tower_tiling_ok

STAGES4 = ((13, 3), (112, 22), (213935, 2017), (91374295575448, 427442089))


def record(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    log[n] = line
    print(line)
    return ok


def test_criterion_1_landing_matrices(acceptance_log):
    t0 = time.perf_counter()
    system = KeaneSystem(StageParams(STAGES4), 4)
    ok = len(system.chain) == 3 and all(
        ind.visitation() == matrix_A(*STAGES4[k]) for k, ind in enumerate(system.chain))
    wall = time.perf_counter() - t0
    ok = ok and wall < 60
    assert record(acceptance_log, 1, ok, f"three inductions equal A_(m_k,n_k), k=0..2, in {wall:.3f}s")


def test_criterion_2_length_formula(acceptance_log):
    rng = random.Random(2)
    bad = []
    for _ in range(20):
        m, n = rng.randrange(1, 10**6), rng.randrange(1, 10**6)
        tot = 2 * m + 4 * n + 4
        want = (F(2, tot), F(2 * m - 1, tot), F(4 * n - 1, tot), F(4, tot))
        if lengths_from_params(StageParams([(m, n)]), 1) != want:
            bad.append((m, n))
    assert record(acceptance_log, 2, not bad, f"20 random (m,n), exact mismatches: {len(bad)}")


def test_criterion_3_recurrence_vs_columns(acceptance_log):
    rng = random.Random(3)
    bad = 0
    for _ in range(50):
        depth = rng.randrange(1, 7)
        stages = [(rng.randrange(1, 10**5), rng.randrange(1, 10**5)) for _ in range(depth)]
        tab = return_table(stages)
        for k in range(1, depth + 1):
            if tab.b[k] != matrix_columns(stages[:k])[0]:
                bad += 1
    assert record(acceptance_log, 3, bad == 0, f"50 random sequences, depth <= 6, mismatches: {bad}")


def test_criterion_4_search(acceptance_log, capsys):
    code = main(["search", "--stages", "2"])
    d = json.loads(capsys.readouterr().out)
    stages = [tuple(int(x) for x in s) for s in d["params"]["stages"]]
    tab = return_table(stages)
    ok = (
        code == 0
        and stages == [(13, 3), (112, 22)]
        and tab.b[1][1] == 17 and tab.b[2][1] == 1997 and tab.b[2][2] == 105
        and tab.window(0) == (2004, 211682)
        and check_conditions(stages).passed
        and d["conditions_passed"]
    )
    assert record(acceptance_log, 4, ok,
                  f"stages {stages}, b12=17, b22=1997, b23=105, c0=2004, d0=211682, conditions pass")


@pytest.mark.slow
def test_criterion_5_lemma2_exhaustive(acceptance_log, system4):
    t0 = time.perf_counter()
    rep = lemma2_check(system4, spot_checks=100)
    seg = rep.segments[0]
    wall = time.perf_counter() - t0
    ok = rep.certified and seg.misses == 0 and seg.ns[0] == 2004 and seg.ns[-1] == 211682 and wall <= 3600
    spots = all(s["ok"] for s in seg.spot_checks)
    assert record(acceptance_log, 5, ok and spots,
                  f"n in [2004, 211682] exhaustive, {len(seg.ns)} times x {rep.targets['levels']} levels, "
                  f"misses {seg.misses}, peak pieces {seg.peak_pieces}, {wall:.0f}s")


@pytest.mark.slow
def test_criterion_6_lemma3(acceptance_log, system4):
    t0 = time.perf_counter()
    rep = lemma3_check(system4, exhaustive_span=10_000, stride=10_000, threads=2)
    ex, sm = rep.segments
    wall = time.perf_counter() - t0
    d0, c1 = system4.table.d[0], system4.table.c[1]
    ok = (
        ex.certified and ex.ns[0] == d0 and ex.ns[-1] == d0 + 10_000
        and sm.mode == "sampled" and sm.stride <= 10_000 and sm.ns[-1] == c1
        and sm.misses == 0 and sm.unresolved == 0
        and any("sampled region" in note for note in sm.notes)
        and rep.passed
    )
    assert record(acceptance_log, 6, ok,
                  f"exhaustive [{d0}, {d0 + 10_000}] misses {ex.misses}; "
                  f"SAMPLED region [{sm.ns[0]}, {c1}] stride {sm.stride}: {len(sm.ns)} samples, "
                  f"misses {sm.misses}, unresolved {sm.unresolved}; {wall:.0f}s")


def test_criterion_7_obstruction(acceptance_log, system4):
    t0 = time.perf_counter()
    threshold = 100
    res = obstruction_check(system4.TI, 1, [threshold], system4.level(2, 2), system4.level(2, 3),
                            V=system4.towers.base(2), chain=system4.chain)
    wall = time.perf_counter() - t0
    ok = (res.verdict and res.superset.issubset(res.J) and res.disjoint
          and all(r > threshold for r in res.flat_returns) and wall < 300
          and res.V == system4.chain[1].J)
    assert record(acceptance_log, 7, ok,
                  f"V = I^(2), {len(res.flat_returns)} return times, min r = {min(res.flat_returns)} "
                  f"> {threshold}, intersection inside J, {wall:.2f}s")


def test_criterion_8_negative_controls(acceptance_log):
    t0 = time.perf_counter()
    U = IntervalSet.interval(F(0), F(1, 4))
    rot = mixing_window_check(Iet.rotation(F(1, 2)), U, U, 0, 9)
    ident = mixing_window_check(Iet.identity(4), U, IntervalSet.interval(F(1, 2), F(3, 4)), 0, 9)
    J, Jp = U, IntervalSet.interval(F(1, 2), F(3, 4))
    two = Iet((F(1, 2), F(1, 2)), Permutation((2, 1)))
    obs = obstruction_check(two, 1, [1], J, Jp)
    inter = obs.exact_intersection
    ok = (not rot.passed and not ident.passed and obs.verdict
          and inter.measure > 0 and inter.issubset(obs.J))
    wall = time.perf_counter() - t0
    assert record(acceptance_log, 8, ok and wall < 60,
                  f"rotation 1/2 misses {rot.misses}/10, identity misses {ident.misses}/10, "
                  f"(21) intersection nonempty and inside J, {wall:.2f}s")


# -- criterion 9: five property suites, 1000 cases each

N9 = 1000


@settings(max_examples=N9)
@given(iets())
def prop_bijective_tiling(T):
    # images of the intervals tile [0,1) without overlap
    imgs = sorted((T(a), T(a) + (b - a)) for a, b in zip(T.lefts, T.ends))
    assert imgs[0][0] == 0 and imgs[-1][1] == 1
    assert all(imgs[i][1] == imgs[i + 1][0] for i in range(len(imgs) - 1))
    assert T.is_bijective()


@settings(max_examples=N9)
@given(iets(), interval_sets())
def prop_measure_preserved(T, S):
    assert image_step(T, S).measure == S.measure


@settings(max_examples=N9)
@given(iets(), st.fractions(0, 1).filter(lambda x: x < 1))
def prop_inverse_roundtrip(T, x):
    assert T.inverse(T(x)) == x
    assert T(T.inverse(x)) == x


@settings(max_examples=N9)
@given(iets(), st.data())
def prop_integer_conjugacy(T, data):
    TI = rescale_to_integer(T)
    Q = TI.scale
    x = data.draw(st.integers(0, Q - 1))
    assert TI(x) == T(F(x, Q)) * Q


@settings(max_examples=N9)
@given(iets(max_n=5), st.data())
def prop_tower_tiling(T, data):
    TI = rescale_to_integer(T)
    a = data.draw(st.integers(0, TI.scale - 1))
    b = data.draw(st.integers(a + 1, TI.scale))
    assert tower_tiling_ok(TI, (a, b))


SUITES = [
    ("bijectivity tiling", prop_bijective_tiling),
    ("measure preservation", prop_measure_preserved),
    ("inverse round-trip", prop_inverse_roundtrip),
    ("integer conjugacy", prop_integer_conjugacy),
    ("tower tiling", prop_tower_tiling),
]


def test_criterion_9_property_suites(acceptance_log):
    failed = []
    for name, prop in SUITES:
        try:
            prop()
        except AssertionError:
            failed.append(name)
    names = ", ".join(n for n, _ in SUITES)
    assert record(acceptance_log, 9, not failed,
                  f"{N9} cases each: {names}" + (f"; failed: {failed}" if failed else ""))
