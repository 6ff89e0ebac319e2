"""First-return maps, towers and fast orbit jumps.

The induction kernel pushes the inducing interval ``J`` forward piece by
piece, splitting at discontinuities, until every piece has come back to
``J``.  Consecutive steps inside one exchanged interval are a single
translation, so a run of such steps is taken in one go ("run
acceleration").  This keeps inductions of deep Keane levels cheap even
though their return times are astronomically large.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property

from .exact import BudgetExceeded, Iet, IntegerIet, IntervalSet, Permutation, _Exchange

KEANE_PERMUTATION = Permutation((4, 2, 1, 3))
# Raw left-to-right permutation of the map induced on the fourth interval;
# its mirror image is (4213) again.
KEANE_INDUCED_RAW = KEANE_PERMUTATION.mirrored()

_INF = float("inf")


class NotInKeaneCone(ValueError):
    """The induced combinatorics differ from the Keane (4213) pattern."""


@dataclass(frozen=True)
class Tower:
    """Consecutive images of an induced subinterval until it returns.

    ``runs`` is a compact description of the levels: each entry is
    ``(parent_index, time0, count, shift0, step_shift, weight)`` and stands
    for ``count`` consecutive levels, the r-th one being the base translated
    by ``shift0 + r * step_shift``.  ``height`` counts levels in parent-map
    steps; ``return_time`` is measured in the base time unit (the two agree
    when the parent map is ``T`` itself).
    """

    label: int
    base: tuple
    return_time: int
    height: int
    runs: tuple

    @cached_property
    def _starts(self):
        out, acc = [], 0
        for r in self.runs:
            out.append(acc)
            acc += r[2]
        return out

    def level(self, i: int) -> tuple:
        if not 0 <= i < self.height:
            raise IndexError(f"level {i} outside tower of height {self.height}")
        k = bisect.bisect_right(self._starts, i) - 1
        c, t0, count, shift0, d, w = self.runs[k]
        s = shift0 + (i - self._starts[k]) * d
        return (self.base[0] + s, self.base[1] + s)

    def levels(self) -> list:
        a, b = self.base
        out = []
        for c, t0, count, shift0, d, w in self.runs:
            for r in range(count):
                s = shift0 + r * d
                out.append((a + s, b + s))
        return out

    def itinerary(self) -> list:
        """Runs ``(parent_index, first_time, time_step, count)`` of visits."""
        return [(c, t0, w, count) for c, t0, count, shift0, d, w in self.runs]


@dataclass(frozen=True)
class InducedMap:
    """First-return map of a parent exchange on ``J``.

    Per-piece data is stored left to right; ``labels[p]`` is the name of the
    p-th piece.  Parent intervals are named by ``parent_labels``.
    """

    J: tuple
    sub_iet: _Exchange
    return_times: tuple
    heights: tuple
    visits: tuple
    towers: tuple
    labels: tuple
    parent_labels: tuple
    raw_permutation: Permutation = field(default=None)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def excess_intervals(self) -> bool:
        """More induced intervals than the parent has (possible for careless J)."""
        return self.size > len(self.parent_labels)

    def index_of(self, label: int) -> int:
        return self.labels.index(label)

    def base(self, label: int) -> tuple:
        return self.towers[self.index_of(label)].base

    def return_time(self, label: int) -> int:
        return self.return_times[self.index_of(label)]

    def tower(self, label: int) -> Tower:
        return self.towers[self.index_of(label)]

    def return_time_vector(self) -> tuple:
        return tuple(self.return_time(j) for j in range(1, self.size + 1))

    def visitation(self) -> tuple:
        """Matrix with entry (i, j) = visits of piece j to parent interval i, by label."""
        n = len(self.parent_labels)
        rows = []
        for i in range(1, n + 1):
            pi = self.parent_labels.index(i)
            rows.append(tuple(self.visits[self.index_of(j)][pi] for j in range(1, self.size + 1)))
        return tuple(rows)

    @property
    def reversed_labels(self) -> bool:
        return self.size > 1 and self.labels[0] > self.labels[-1]

    @property
    def permutation(self) -> Permutation:
        """Permutation read in the orientation in which the labels increase."""
        raw = self.sub_iet.permutation
        if self.reversed_labels:
            raw = raw.mirrored()
        return raw

    def standard_form(self) -> Iet:
        """Stand-alone exchange on ``[0, |J|)`` with intervals in label order.

        When labels run right to left this is the mirror image of the
        induced map (identical dynamics up to the finitely many endpoints).
        """
        lengths = [None] * self.size
        for p, lab in enumerate(self.labels):
            lengths[lab - 1] = self.sub_iet.lengths[p]
        return Iet(tuple(lengths), self.permutation)

    def relabel(self, labels) -> "InducedMap":
        labels = tuple(labels)
        if sorted(labels) != list(range(1, self.size + 1)):
            raise ValueError(f"bad labels {labels}")
        towers = tuple(
            Tower(lab, t.base, t.return_time, t.height, t.runs) for lab, t in zip(labels, self.towers)
        )
        return InducedMap(self.J, self.sub_iet, self.return_times, self.heights, self.visits, towers,
                          labels, self.parent_labels, self.raw_permutation)

    @cached_property
    def _level_index(self):
        total = sum(self.heights)
        if total > 5_000_000:
            raise BudgetExceeded(f"{total} tower levels are too many to index", reached=0)
        entries = []
        for p, t in enumerate(self.towers):
            for i, (a, b) in enumerate(t.levels()):
                entries.append((a, b, self.labels[p], i))
        entries.sort()
        return entries, [e[0] for e in entries]

    def all_levels(self) -> list:
        """Every tower level as ``(a, b, label, level)``, sorted by position."""
        return list(self._level_index[0])

    def to_json(self, fmt=str) -> dict:
        return {
            "J": [fmt(self.J[0]), fmt(self.J[1])],
            "permutation": list(self.permutation.images),
            "raw_permutation": list(self.sub_iet.permutation.images),
            "labels": list(self.labels),
            "return_times": [str(self.return_time(j)) for j in range(1, self.size + 1)],
            "visitation": [[str(x) for x in row] for row in self.visitation()],
            "tower_bases": [[fmt(self.base(j)[0]), fmt(self.base(j)[1])] for j in range(1, self.size + 1)],
        }


def _unroll(hist):
    out = []
    while hist is not None:
        hist, rec = hist
        out.append(rec)
    out.reverse()
    return tuple(out)


def first_return_map(T: _Exchange, J, max_steps: int = 10_000_000, weights=None) -> InducedMap:
    """Exact first-return map of ``T`` on the interval ``J = (a, b)``.

    ``weights[c]`` is the time charged for one step from interval ``c``
    (default 1); passing the return times of an induced map lets one induce
    an induced map while keeping time in units of the original ``T``.
    ``max_steps`` bounds the number of accelerated steps; exceeding it
    raises ``BudgetExceeded``.
    """
    a, b = J
    if not a < b:
        raise ValueError("J must have positive length")
    if a < T.start or b > T.end:
        raise ValueError("J must lie inside the domain of T")
    n = T.n
    lefts, ends, offs = T.lefts, T.ends, T.offsets
    w = tuple(weights) if weights is not None else (1,) * n
    zero = a - a

    done = []
    # piece: lo, hi (current), shift (current - original), time, steps, visits, history
    stack = [(a, b, zero, 0, 0, (0,) * n, None)]
    work = 0
    while stack:
        u, v, sh, t, s, vis, hist = stack.pop()
        while True:
            work += 1
            if work > max_steps:
                raise BudgetExceeded(f"induction on {J} exceeded {max_steps} steps", reached=work)
            c = bisect.bisect_right(lefts, u) - 1
            if v > ends[c]:
                stack.append((ends[c], v, sh, t, s, vis, hist))
                v = ends[c]
            d = offs[c]
            if d > 0:
                rin = (ends[c] - v) // d
                if v + d <= a:
                    rdis = (a - v) // d
                elif u + d >= b:
                    rdis = _INF
                else:
                    rdis = 0
            elif d < 0:
                rin = (u - lefts[c]) // (-d)
                if u + d >= b:
                    rdis = (u - b) // (-d)
                elif v + d <= a:
                    rdis = _INF
                else:
                    rdis = 0
            else:
                rin = _INF
                rdis = 0 if (u < b and v > a) else _INF
            R = min(rin, rdis)
            if R == _INF:
                raise BudgetExceeded(f"piece [{u}, {v}) never returns to {J}", reached=work)
            R = int(R) + 1
            hist = (hist, (c, t, R, sh, d, w[c]))
            u += R * d
            v += R * d
            sh += R * d
            t += R * w[c]
            s += R
            vis = vis[:c] + (vis[c] + R,) + vis[c + 1:]
            if v <= a or u >= b:
                continue
            if u < a:
                stack.append((u, a, sh, t, s, vis, hist))
                u = a
            if v > b:
                stack.append((b, v, sh, t, s, vis, hist))
                v = b
            done.append((u - sh, v - sh, sh, t, s, vis, hist))
            break

    return _assemble(T, (a, b), done, n)


def _assemble(T: _Exchange, J, done, n) -> InducedMap:
    """Merge finished pieces and package the induced map."""
    a, b = J
    done.sort(key=lambda p: p[0])
    merged = []
    for lo, hi, sh, t, s, vis, hist in done:
        runs = _unroll(hist) if hist is not None else ()
        if merged:
            m = merged[-1]
            if m[1] == lo and m[2:6] == (sh, t, s, vis) and m[6] == runs:
                merged[-1] = (m[0], hi) + m[2:]
                continue
        merged.append((lo, hi, sh, t, s, vis, runs))
    if merged[0][0] != a or merged[-1][1] != b or any(
        merged[i][1] != merged[i + 1][0] for i in range(len(merged) - 1)
    ):
        raise RuntimeError("induced pieces do not partition J")

    order = sorted(range(len(merged)), key=lambda p: merged[p][0] + merged[p][2])
    perm = Permutation(tuple(p + 1 for p in order))
    lengths = tuple(m[1] - m[0] for m in merged)
    if isinstance(T, IntegerIet):
        sub = IntegerIet(T.scale, lengths, perm, a)
    else:
        sub = Iet(lengths, perm, a)
    if any(sub.lefts[p] + sub.offsets[p] != merged[p][0] + merged[p][2] for p in range(len(merged))):
        raise RuntimeError("returned pieces do not tile J")
    towers = tuple(
        Tower(p + 1, (m[0], m[1]), m[3], m[4], m[6]) for p, m in enumerate(merged)
    )
    labels = tuple(range(1, len(merged) + 1))
    return InducedMap(
        J=(a, b),
        sub_iet=sub,
        return_times=tuple(m[3] for m in merged),
        heights=tuple(m[4] for m in merged),
        visits=tuple(m[5] for m in merged),
        towers=towers,
        labels=labels,
        parent_labels=tuple(range(1, n + 1)),
        raw_permutation=perm,
    )


def induce_within_chain(T: _Exchange, chain, k0: int, index: int, max_steps: int = 10_000_000) -> InducedMap:
    """First return of ``S_k0`` to its own ``index``-th interval (left to right).

    ``S_0 = T`` and ``S_k = chain[k-1].sub_iet``; return times are in units
    of ``T``.  Whenever a piece sits in a deeper ``I^(l)`` inside an
    interval whose whole tower trip avoids the target, it moves by trips of
    ``S_l`` instead of ``S_k0``.  This keeps returns spanning astronomically
    many ``S_k0`` steps cheap.  Towers of the result carry no level runs.
    """
    maps = [T] + [c.sub_iet for c in chain]
    hts = [(1,) * T.n] + [c.return_times for c in chain]
    L = len(maps) - 1
    if not 0 <= k0 <= L:
        raise ValueError(f"level {k0} outside 0..{L}")
    base = maps[k0]
    nb = base.n
    a, b = base.lefts[index], base.ends[index]

    # Per level l > k0 and interval c: base-level intervals visited strictly
    # after the start of one S_l trip (E), and the visit vector of the trip.
    E = {k0: [frozenset()] * nb}
    F = {k0: [frozenset([c]) for c in range(nb)]}
    vis = {k0: [tuple(int(i == c) for i in range(nb)) for c in range(nb)]}
    for l in range(k0 + 1, L + 1):
        ind = chain[l - 1]
        El, Fl, Vl = [], [], []
        for p_, tw in enumerate(ind.towers):
            runs = tw.runs
            e = set(E[l - 1][runs[0][0]])
            if runs[0][2] > 1:
                e |= F[l - 1][runs[0][0]]
            v = [0] * nb
            for r in runs[1:]:
                e |= F[l - 1][r[0]]
            for r in runs:
                for i, x in enumerate(vis[l - 1][r[0]]):
                    v[i] += r[2] * x
            pos = bisect.bisect_right(base.lefts, tw.base[0]) - 1
            El.append(frozenset(e))
            Fl.append(frozenset(e | {pos}))
            Vl.append(tuple(v))
        E[l], F[l], vis[l] = El, Fl, Vl

    done = []
    stack = [(a, b, a - a, 0, (0,) * nb)]
    work = 0
    while stack:
        u, v, sh, t, vv = stack.pop()
        while True:
            work += 1
            if work > max_steps:
                raise BudgetExceeded(f"induction on {(a, b)} exceeded {max_steps} steps", reached=work)
            lvl = k0
            for l in range(L, k0, -1):
                S = maps[l]
                if S.start <= u < S.end:
                    c = bisect.bisect_right(S.lefts, u) - 1
                    if index not in E[l][c]:
                        lvl = l
                        break
            S = maps[lvl]
            c = bisect.bisect_right(S.lefts, u) - 1
            if v > S.ends[c]:
                stack.append((S.ends[c], v, sh, t, vv))
                v = S.ends[c]
            ja, jb = max(a, S.start), min(b, S.end)
            d = S.offsets[c]
            if d > 0:
                rin = (S.ends[c] - v) // d
                if ja >= jb or u + d >= jb:
                    rdis = _INF
                elif v + d <= ja:
                    rdis = (ja - v) // d
                else:
                    rdis = 0
            elif d < 0:
                rin = (u - S.lefts[c]) // (-d)
                if ja >= jb or v + d <= ja:
                    rdis = _INF
                elif u + d >= jb:
                    rdis = (u - jb) // (-d)
                else:
                    rdis = 0
            else:
                rin = _INF
                rdis = 0 if (ja < jb and u < jb and v > ja) else _INF
            R = min(rin, rdis)
            if R == _INF:
                raise BudgetExceeded(f"piece [{u}, {v}) never returns to {(a, b)}", reached=work)
            R = int(R) + 1
            u += R * d
            v += R * d
            sh += R * d
            t += R * hts[lvl][c]
            vv = tuple(x + R * y for x, y in zip(vv, vis[lvl][c]))
            if v <= a or u >= b:
                continue
            if u < a:
                stack.append((u, a, sh, t, vv))
                u = a
            if v > b:
                stack.append((b, v, sh, t, vv))
                v = b
            done.append((u - sh, v - sh, sh, t, sum(vv), vv, None))
            break
    return _assemble(base, (a, b), done, nb)


def induce_on_fourth(T: _Exchange, labels=None, weights=None, max_steps: int = 10_000_000) -> InducedMap:
    """Induce a (4213) exchange on its fourth interval and rename in reverse.

    ``labels`` names the intervals of ``T`` left to right (default 1..4);
    the induced pieces get the reverse orientation, which makes the
    induced permutation (4213) again.  Raises ``NotInKeaneCone`` otherwise.
    """
    labels = tuple(labels) if labels is not None else tuple(range(1, T.n + 1))
    if T.n != 4 or sorted(labels) != [1, 2, 3, 4]:
        raise NotInKeaneCone("need a 4-interval exchange")
    increasing = labels[0] < labels[-1]
    parent_perm = T.permutation if increasing else T.permutation.mirrored()
    if parent_perm != KEANE_PERMUTATION:
        raise NotInKeaneCone(f"parent permutation is {parent_perm}, not (4213)")
    p4 = labels.index(4)
    J = (T.lefts[p4], T.ends[p4])
    ind = first_return_map(T, J, max_steps=max_steps, weights=weights)
    ind = InducedMap(ind.J, ind.sub_iet, ind.return_times, ind.heights, ind.visits, ind.towers,
                     ind.labels, labels, ind.raw_permutation)
    if ind.size != 4:
        raise NotInKeaneCone(f"induced map has {ind.size} intervals")
    expected_raw = KEANE_INDUCED_RAW if increasing else KEANE_PERMUTATION
    if ind.raw_permutation != expected_raw:
        raise NotInKeaneCone(
            f"induced permutation before renaming is {ind.raw_permutation}, expected {expected_raw}"
        )
    new_labels = (4, 3, 2, 1) if increasing else (1, 2, 3, 4)
    out = ind.relabel(new_labels)
    if out.permutation != KEANE_PERMUTATION:
        raise NotInKeaneCone(f"renamed permutation is {out.permutation}")
    return out


def induction_chain(T: _Exchange, depth: int, max_steps: int = 10_000_000) -> list:
    """Successive Keane inductions: ``chain[k]`` is the map on I^(k+1).

    Each step induces the previous induced map (not ``T``) on its fourth
    interval, so ``chain[k].visitation()`` is the single landing matrix of
    stage k, while ``return_times`` stay in units of ``T``.
    """
    chain = []
    cur, labels, weights = T, None, None
    for _ in range(depth):
        ind = induce_on_fourth(cur, labels=labels, weights=weights, max_steps=max_steps)
        chain.append(ind)
        cur, labels, weights = ind.sub_iet, ind.labels, ind.return_times
    return chain


def tower_level(ind: InducedMap, j: int, i: int) -> tuple:
    """Level ``i`` of the tower over the piece labelled ``j``."""
    return ind.tower(j).level(i)


def locate(ind: InducedMap, x) -> tuple:
    """``(label, level)`` of the tower level containing ``x``."""
    entries, keys = ind._level_index
    k = bisect.bisect_right(keys, x) - 1
    if k < 0 or not entries[k][0] <= x < entries[k][1]:
        raise ValueError(f"{x} is not covered by the towers")
    return entries[k][2], entries[k][3]


def tower_tiling(ind: InducedMap) -> IntervalSet:
    return IntervalSet(tuple((a, b) for a, b, _, _ in ind.all_levels()))


class OrbitJumper:
    """Evaluate ``T^N(x)`` for huge ``N`` through a chain of induced maps.

    At level k the point is moved by whole return trips of the induced map
    on I^(k); runs inside one interval are a single translation, so each
    run costs O(1).  Level 0 is ``T`` itself with unit return times.
    """

    def __init__(self, T: _Exchange, chain=()):
        self.maps = [T] + [ind.sub_iet for ind in chain]
        self.heights = [(1,) * T.n] + [ind.return_times for ind in chain]

    def advance(self, x, N: int):
        if N < 0:
            raise ValueError("N must be non-negative")
        maps, heights = self.maps, self.heights
        top = len(maps) - 1
        k = 0
        while N:
            while k < top and maps[k + 1].contains(x) and N >= heights[k + 1][maps[k + 1].index(x)]:
                k += 1
            S = maps[k]
            c = S.index(x)
            h = heights[k][c]
            if N < h:
                k -= 1
                continue
            d = S.offsets[c]
            if d > 0:
                stay = -((x - S.ends[c]) // d)
            elif d < 0:
                stay = (x - S.lefts[c]) // (-d) + 1
            else:
                stay = N // h
            s = min(stay, N // h)
            x += s * d
            N -= s * h
        return x

    def inverse(self) -> "OrbitJumper":
        """Jumper for ``T^-1``: the inverse of a first-return map is the
        first-return map of the inverse, with heights carried by the images."""
        out = OrbitJumper.__new__(OrbitJumper)
        out.maps = [inverse_exchange(S) for S in self.maps]
        out.heights = [tuple(h[j] for j in S.slot_order) for S, h in zip(self.maps, self.heights)]
        return out


def inverse_exchange(S: _Exchange) -> _Exchange:
    """The inverse map as an exchange on the same domain."""
    lengths = tuple(S.lengths[j] for j in S.slot_order)
    slot_of = {j: s for s, j in enumerate(S.slot_order)}
    perm = Permutation(tuple(slot_of[j] + 1 for j in range(S.n)))
    if isinstance(S, IntegerIet):
        return IntegerIet(S.scale, lengths, perm, S.start)
    return Iet(lengths, perm, S.start)


class TowerStack:
    """Levels of the towers over ``I^(k)`` in units of ``T`` for every k.

    Level 0 is ``T`` itself (each interval is a tower of height 1).  Level
    k >= 1 uses ``chain[k-1]``, whose towers are recorded in steps of the
    previous induced map; a T-level is found by descending through the
    chain, so the cost is logarithmic in the height.
    """

    def __init__(self, T: _Exchange, chain=()):
        self.T = T
        self.chain = list(chain)

    @property
    def depth(self) -> int:
        return len(self.chain)

    def interval(self, k: int, label: int) -> tuple:
        """``I_label^(k)``; at k = 0 the labels are positional."""
        if k == 0:
            return (self.T.lefts[label - 1], self.T.ends[label - 1])
        return self.chain[k - 1].base(label)

    def base(self, k: int) -> tuple:
        """``I^(k)``."""
        if k == 0:
            return (self.T.start, self.T.end)
        return self.chain[k - 1].J

    def height(self, k: int, label: int) -> int:
        return 1 if k == 0 else self.chain[k - 1].return_time(label)

    def labels(self, k: int) -> tuple:
        return tuple(range(1, self.T.n + 1)) if k == 0 else self.chain[k - 1].labels

    def level(self, k: int, label: int, i: int) -> tuple:
        """``T^i(I_label^(k))`` as an exact interval."""
        h = self.height(k, label)
        if not 0 <= i < h:
            raise IndexError(f"level {i} outside tower of height {h}")
        if k == 0:
            return self.interval(0, label)
        ind = self.chain[k - 1]
        tw = ind.tower(label)
        for c, t0, count, shift0, d, w in tw.runs:
            if i < t0 + count * w:
                r, rest = divmod(i - t0, w)
                lo = tw.base[0] + shift0 + r * d
                plab = ind.parent_labels[c]
                a, _ = self.level(k - 1, plab, rest)
                off = a - self.interval(k - 1, plab)[0]
                return (lo + off, lo + off + (tw.base[1] - tw.base[0]))
        raise AssertionError("tower runs do not cover the height")

    def levels(self, k: int, label: int, limit: int = 5_000_000) -> list:
        """All levels of one tower, bottom to top."""
        h = self.height(k, label)
        if h > limit:
            raise BudgetExceeded(f"tower of height {h} exceeds the level limit {limit}", reached=0)
        if k == 0:
            return [self.interval(0, label)]
        ind = self.chain[k - 1]
        tw = ind.tower(label)
        size = tw.base[1] - tw.base[0]
        out = []
        for c, t0, count, shift0, d, w in tw.runs:
            plab = ind.parent_labels[c]
            p0 = self.interval(k - 1, plab)[0]
            sub = [a - p0 for a, _ in self.levels(k - 1, plab, limit)]
            for r in range(count):
                lo = tw.base[0] + shift0 + r * d
                out.extend((lo + o, lo + o + size) for o in sub)
        return out

    def orbit_set(self, k: int, label: int) -> IntervalSet:
        """``O(I_label^(k))``: the union of all levels of the tower."""
        return IntervalSet(tuple(self.levels(k, label)))

    def visit_runs(self, k: int, label: int, parent_label: int) -> list:
        """Times at which the tower over ``I_label^(k)`` sits in
        ``I_parent_label^(k-1)``, as ``(first_time, step, count)`` runs."""
        ind = self.chain[k - 1]
        tw = ind.tower(label)
        return [(t0, w, count) for c, t0, count, shift0, d, w in tw.runs if ind.parent_labels[c] == parent_label]
