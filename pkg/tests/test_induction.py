from fractions import Fraction as F
import random

import pytest
from hypothesis import given, settings, strategies as st

from keane_mixer import (
    BudgetExceeded, Iet, IntervalSet, NotInKeaneCone, OrbitJumper, Permutation, StageParams,
    TowerStack, build_iet, first_return_map, induce_on_fourth, induce_within_chain,
    induction_chain, locate, matrix_A, rescale_to_integer, tower_level,
)
from keane_mixer.induction import inverse_exchange
from keane_mixer.keane import matmul

from oracles import brute_return
from test_exact import iets


def test_rotation_half_on_left_half():
    ind = first_return_map(Iet.rotation(F(1, 2)), (F(0), F(1, 2)))
    assert ind.return_times == (2,)
    assert ind.sub_iet(F(1, 5)) == F(1, 5)


def test_identity_returns_immediately():
    ind = first_return_map(Iet.identity(3), (F(1, 4), F(3, 4)))
    # pieces are cut at the discontinuities 1/3 and 2/3
    assert ind.return_times == (1, 1, 1)
    assert ind.sub_iet.lengths == (F(1, 12), F(1, 3), F(1, 12))


def test_bad_interval():
    T = Iet.rotation(F(1, 3))
    with pytest.raises(ValueError):
        first_return_map(T, (F(1, 2), F(1, 2)))
    with pytest.raises(ValueError):
        first_return_map(T, (F(1, 2), F(3, 2)))


def test_budget_error():
    T = rescale_to_integer(Iet((F(1, 997), F(3, 997), F(993, 997)), Permutation((3, 1, 2))))
    with pytest.raises(BudgetExceeded):
        first_return_map(T, (0, 1), max_steps=5)
    assert first_return_map(T, (0, 1), max_steps=50).size == 1


def test_keane_depth2_first_induction():
    T = build_iet(StageParams([(13, 3), (112, 22)]), 2)
    ind = induce_on_fourth(T)
    assert ind.raw_permutation == Permutation((2, 4, 3, 1))
    assert ind.permutation == Permutation((4, 2, 1, 3))
    assert ind.visitation() == matrix_A(13, 3)
    assert ind.return_time_vector() == (16, 17, 4, 5)


def test_seed_not_in_cone():
    with pytest.raises(NotInKeaneCone):
        induce_on_fourth(Iet((F(1, 4),) * 4, Permutation((1, 2, 3, 4))))
    with pytest.raises(NotInKeaneCone):
        induce_on_fourth(Iet.rotation(F(1, 3)))


def test_chain_against_products(params4, system4):
    chain = system4.chain
    prev = (1, 1, 1, 1)
    for k, ind in enumerate(chain):
        A = matrix_A(*params4.stages[k])
        assert ind.visitation() == A
        assert ind.permutation == Permutation((4, 2, 1, 3))
        # weighted column sums give return times to the original map
        cols = tuple(sum(prev[i] * A[i][j] for i in range(4)) for j in range(4))
        assert cols == ind.return_time_vector()
        prev = cols
    direct = first_return_map(system4.TI, chain[1].J)
    prod = matmul(matrix_A(*params4.stages[0]), matrix_A(*params4.stages[1]))
    assert direct.visitation() == prod
    assert direct.return_times == chain[1].return_times


def test_towers_tile_and_rows(system4):
    ind = first_return_map(system4.TI, system4.chain[0].J)
    levels = ind.all_levels()
    assert levels[0][0] == 0 and levels[-1][1] == system4.scale
    assert all(levels[i][1] == levels[i + 1][0] for i in range(len(levels) - 1))
    # row law: levels of tower j inside I_i equals visitation(i, j)
    T = system4.TI
    for p, tw in enumerate(ind.towers):
        counts = [0] * 4
        for a, b in tw.levels():
            i = T.index(a)
            assert b <= T.ends[i]
            counts[i] += 1
        assert tuple(counts) == ind.visits[p]


def test_tower_level_and_locate(system4):
    ind = first_return_map(system4.TI, system4.chain[0].J)
    T = system4.TI
    for lab in range(1, 5):
        base = ind.base(lab)
        assert tower_level(ind, lab, 0) == base
        top = tower_level(ind, lab, ind.return_time(lab) - 1)
        assert ind.J[0] <= T(top[0]) < ind.J[1]
        with pytest.raises(IndexError):
            tower_level(ind, lab, ind.return_time(lab))
    rng = random.Random(3)
    for _ in range(200):
        x = rng.randrange(system4.scale)
        lab, i = locate(ind, x)
        a, b = tower_level(ind, lab, i)
        assert a <= x < b
        y = T(x)
        lab2, i2 = locate(ind, y)
        if i + 1 < ind.return_time(lab):
            assert (lab2, i2) == (lab, i + 1)
        else:
            assert i2 == 0


def test_tower_stack_matches_stepping(system4):
    st_ = system4.towers
    T = system4.TI
    for lab in range(1, 5):
        x = st_.interval(2, lab)[0]
        for i, (a, b) in enumerate(st_.levels(2, lab)):
            assert a == x
            if i % 97 == 0:
                assert st_.level(2, lab, i) == (a, b)
            x = T(x)
        assert st_.base(2)[0] <= x < st_.base(2)[1]
    assert st_.level(3, 2, 0) == st_.interval(3, 2)


def test_jumper_matches_iteration(system4):
    T = system4.TI
    J = system4.jumper
    rng = random.Random(5)
    for _ in range(20):
        x = rng.randrange(system4.scale)
        n = rng.randrange(3000)
        y = x
        for _ in range(n):
            y = T(y)
        assert J.advance(x, n) == y
        assert J.inverse().advance(y, n) == x


def test_jumper_large_roundtrip(system4):
    J, Ji = system4.jumper, system4.jumper.inverse()
    rng = random.Random(9)
    for _ in range(30):
        x = rng.randrange(system4.scale)
        n = rng.randrange(10**22)
        assert Ji.advance(J.advance(x, n), n) == x


def test_inverse_exchange():
    T = Iet((F(1, 10), F(3, 10), F(6, 10)), Permutation((3, 1, 2)))
    Ti = inverse_exchange(T)
    for x in (F(0), F(1, 20), F(1, 3), F(9, 10)):
        assert Ti(T(x)) == x


def test_within_chain_matches_plain(system4):
    chain = system4.chain
    S1 = chain[0].sub_iet
    for p in range(4):
        fast = induce_within_chain(system4.TI, chain, 1, p)
        plain = first_return_map(S1, (S1.lefts[p], S1.ends[p]), weights=chain[0].return_times)
        assert fast.return_times == plain.return_times
        assert fast.sub_iet.lengths == plain.sub_iet.lengths
        assert fast.sub_iet.permutation == plain.sub_iet.permutation
        assert fast.visits == plain.visits


def test_within_chain_returns_by_jumper(system4):
    ind = induce_within_chain(system4.TI, system4.chain, 2, 0)
    for q in range(ind.size):
        x = ind.sub_iet.lefts[q]
        assert system4.jumper.advance(x, ind.return_times[q]) == ind.sub_iet(x)


def test_induced_json(system4):
    d = system4.chain[0].to_json()
    assert d["permutation"] == [4, 2, 1, 3]
    assert d["return_times"] == ["16", "17", "4", "5"]
    assert d["visitation"][1] == ["12", "13", "0", "0"]


@settings(max_examples=200)
@given(iets(max_n=5), st.data())
def test_first_return_matches_brute_force(T, data):
    TI = rescale_to_integer(T)
    Q = TI.scale
    a = data.draw(st.integers(0, Q - 1))
    b = data.draw(st.integers(a + 1, Q))
    ind = first_return_map(TI, (a, b))
    assert ind.sub_iet.is_bijective()
    assert tuple(sum(v) for v in ind.visits) == ind.return_times
    for x in range(a, b, max(1, (b - a) // 7)):
        r, y, visits = brute_return(TI, (a, b), x)
        p = ind.sub_iet.index(x)
        assert ind.return_times[p] == r
        assert ind.sub_iet(x) == y
        assert tuple(visits) == ind.visits[p]
    if ind.size > TI.n:
        assert ind.excess_intervals


@settings(max_examples=100)
@given(iets(max_n=5), st.data())
def test_induction_commutes_with_rescaling(T, data):
    TI = rescale_to_integer(T)
    Q = TI.scale
    a = data.draw(st.integers(0, Q - 1))
    b = data.draw(st.integers(a + 1, Q))
    exact = first_return_map(T, (F(a, Q), F(b, Q)))
    scaled = first_return_map(TI, (a, b))
    assert exact.return_times == scaled.return_times
    assert tuple(x * Q for x in exact.sub_iet.lengths) == scaled.sub_iet.lengths


def tower_tiling_ok(T, J) -> bool:
    """Levels are disjoint, T-invariant as a union, and cover [0,1) when
    the map is minimal on the hull of J."""
    ind = first_return_map(T, J)
    levels = sorted(lv for tw in ind.towers for lv in tw.levels())
    if any(levels[i][1] > levels[i + 1][0] for i in range(len(levels) - 1)):
        return False
    S = IntervalSet(tuple(levels))
    from keane_mixer import image_step
    if image_step(T, S) != S:
        return False
    return sum(b - a for a, b in levels) == S.measure


@settings(max_examples=200)
@given(iets(max_n=5), st.data())
def test_tower_tiling_random(T, data):
    TI = rescale_to_integer(T)
    Q = TI.scale
    a = data.draw(st.integers(0, Q - 1))
    b = data.draw(st.integers(a + 1, Q))
    assert tower_tiling_ok(TI, (a, b))
