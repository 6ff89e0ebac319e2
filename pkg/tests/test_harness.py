from fractions import Fraction as F
import json

import numpy as np
import pytest

from keane_mixer import (
    BudgetExceeded, Iet, IntervalSet, KeaneSystem, PreconditionError, StageParams, WitnessEngine,
    intersects, lemma2_check, lemma3_check, mixing_window_check, obstruction_check, theorem1_check,
)
from keane_mixer.exact import step_pieces
from keane_mixer.harness import insertion_facts, lemma3_insertion_check, stitched_window_check

Q = IntervalSet.interval


# -- negative controls


def test_rotation_half_misses_odd_times():
    J = Q(F(0), F(1, 4))
    res = mixing_window_check(Iet.rotation(F(1, 2)), J, J, 0, 10)
    assert not res.passed
    assert res.misses == 5
    assert res.first_miss == 1
    assert res.hits == [n % 2 == 0 for n in range(11)]


def test_identity_never_mixes():
    res = mixing_window_check(Iet.identity(4), Q(F(0), F(1, 4)), Q(F(1, 2), F(3, 4)), 0, 50)
    assert res.misses == 51 and not res.certified


def test_rotation_sampled_mode():
    J = Q(F(0), F(1, 4))
    res = mixing_window_check(Iet.rotation(F(1, 2)), J, J, 0, 20, mode="sampled", stride=4)
    # every sampled n is even, the endpoint too
    assert res.ns == [0, 4, 8, 12, 16, 20]
    assert res.passed and not res.certified
    with pytest.raises(ValueError):
        mixing_window_check(Iet.rotation(F(1, 2)), J, J, 0, 20, mode="sampled")
    with pytest.raises(ValueError):
        mixing_window_check(Iet.rotation(F(1, 2)), J, J, 0, 20, mode="random")


def test_window_budget():
    J = Q(F(0), F(1, 4))
    with pytest.raises(BudgetExceeded):
        mixing_window_check(Iet.rotation(F(1, 3)), J, J, 0, 100, max_steps=10)


def test_result_serialization():
    J = Q(F(0), F(1, 4))
    res = mixing_window_check(Iet.rotation(F(1, 2)), J, J, 0, 3)
    d = res.to_json()
    assert "wall_time_s" in d["timing"]
    json.dumps(d)
    lines = res.to_csv().strip().splitlines()
    assert lines[0] == "n,hit,piece_count"
    assert lines[2].startswith("1,0,")


# -- the Keane system


def test_short_lemma2_window(system4):
    J = system4.level(2, 3)
    targets = [Q(*iv) for iv in system4.towers.levels(1, 2)]
    assert len(targets) == 17
    res = stitched_window_check(system4.TI, J, targets, 2004, 4004, spot_checks=10,
                                jumper=system4.jumper)
    assert res.certified
    assert all(s["ok"] for s in res.spot_checks)


def test_lemma2_budget_partial(system4):
    rep = lemma2_check(system4, max_steps=3000, spot_checks=0)
    seg = rep.segments[0]
    assert seg.misses == 0
    assert seg.reached is not None and not seg.complete and not rep.certified


def test_lemma3_exhaustive_short(system4):
    rep = lemma3_check(system4, exhaustive_span=500, stride=None, spot_checks=5)
    assert rep.certified
    assert rep.segments[0].ns[0] == system4.table.d[0]


def test_preconditions():
    small = KeaneSystem(StageParams([(13, 3), (112, 22)]), 2)
    with pytest.raises(PreconditionError):
        lemma2_check(small)
    with pytest.raises(PreconditionError):
        theorem1_check(small)
    with pytest.raises(PreconditionError):
        KeaneSystem(StageParams([(13, 3)]), 0)


def test_witness_engine_is_sound(system4):
    """A witness must imply a positive-length intersection; on small times the
    engine also finds every intersection that stepping finds."""
    T = system4.TI
    B, C = system4.level(2, 2), system4.level(2, 3)
    eng = WitnessEngine(system4.towers, 2, 2, 3)
    pieces = list(B.pieces)
    truth = []
    for _ in range(3000):
        truth.append(intersects(IntervalSet._trusted(pieces), C))
        pieces = step_pieces(T, pieces)
    got = eng.witnessed(range(3000))
    truth = np.array(truth)
    assert not (got & ~truth).any()
    assert (got == truth).all()


def test_witness_engine_depth_guard(system4):
    with pytest.raises(PreconditionError):
        WitnessEngine(system4.towers, 3, 2, 3)


def test_lemma3_insertion(system4):
    res = lemma3_insertion_check(system4, 0)
    assert res["passed"]
    assert res["first_time"] == 1997
    assert res["witnessed"] == 213935


def test_insertion_facts(params4, system4):
    facts = insertion_facts(system4)
    for f in facts:
        m, n = params4.stages[f["k"]]
        b = system4.table.b[f["k"]]
        # a piece of I_2 landing in I_3 stays n_k induced steps there
        assert f["2->3"]["visits_min"] == f["2->3"]["visits_max"] == n
        assert int(f["2->3"]["time_max"]) == n * b[2]
        # I_4 landing in I_2 stays m_k - 1 or m_k steps
        assert {f["4->2"]["visits_min"], f["4->2"]["visits_max"]} == {m - 1, m}
        assert int(f["4->2"]["time_max"]) == m * b[1]


def test_theorem1_first_stretch(system4):
    rep = theorem1_check(system4, budget_steps=2004 + 3000)
    assert rep.extra["misses"] == 0
    assert rep.extra["coverage"][0] == "2004"


# -- obstruction


def test_obstruction_rotation_half():
    res = obstruction_check(Iet.rotation(F(1, 2)), 1, [1], Q(F(0), F(1, 4)), Q(F(1, 2), F(3, 4)))
    assert res.verdict
    assert res.return_times == [[2]]
    assert res.exact_intersection == res.J


def test_obstruction_rotation_eleven():
    res = obstruction_check(Iet.rotation(F(3, 11)), 1, [5], Q(F(0), F(1, 11)),
                            Q(F(5, 11), F(6, 11)), V=(F(0), F(1, 11)))
    assert res.verdict
    assert res.return_times == [[11]]
    assert res.exact_intersection.issubset(res.J)


def test_obstruction_keane(system4):
    res = obstruction_check(system4.TI, 1, [100], system4.level(2, 2), system4.level(2, 3),
                            V=system4.towers.base(2), chain=system4.chain)
    assert res.verdict
    assert res.s == 4 and res.s_i == [4, 4, 4, 4]
    assert min(res.flat_returns) > 100
    assert res.superset.issubset(res.J)
    assert len(res.spot_checks) == 20


def test_obstruction_preconditions(system4):
    J = Q(F(0), F(1, 4))
    with pytest.raises(PreconditionError):
        obstruction_check(Iet.rotation(F(1, 2)), 1, [1], J, Q(F(1, 8), F(1, 2)))
    with pytest.raises(PreconditionError):
        obstruction_check(system4.TI, 1, [10**6], system4.level(2, 2), system4.level(2, 3),
                          V=system4.towers.base(2), chain=system4.chain)
