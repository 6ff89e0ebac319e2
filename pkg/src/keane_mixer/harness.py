"""Finite-window mixing checks and the higher-order obstruction.

All geometry runs in integer coordinates (the truncated IET scaled by the
common denominator of its lengths).  An exhaustive window check steps the
exact image ``T^n(J')`` through every n and is a certificate for that
truncation.  Sampled checks answer at sampled n only and are labelled as
such; they never stand in for a certificate.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exact import (
    BudgetExceeded, Iet, IntegerIet, IntervalSet, _Exchange, format_rational,
    intersects, rescale_to_integer, step_pieces,
)
from .induction import (
    OrbitJumper, TowerStack, first_return_map, induce_within_chain, induction_chain,
)
from .keane import KEANE_PERMUTATION, StageParams, build_iet, return_table


class PreconditionError(ValueError):
    """A check was asked for something its inputs cannot support."""


# ----------------------------------------------------------------------------
# the truncated Keane system


class KeaneSystem:
    """Depth-K truncation with its induction chain, in integer coordinates.

    Tower structure is trusted up to level ``depth - 1`` (the faithfulness
    horizon), so the chain has ``depth - 1`` inductions.
    """

    def __init__(self, params: StageParams, depth: int, max_steps: int = 10_000_000):
        if depth < 1:
            raise PreconditionError("depth must be at least 1")
        self.params = params
        self.depth = depth
        self.table = return_table(params, depth)
        self.T = build_iet(params, depth)
        self.TI = rescale_to_integer(self.T)
        self.scale = self.TI.scale
        self.chain = induction_chain(self.TI, depth - 1, max_steps=max_steps)
        self.towers = TowerStack(self.TI, self.chain)
        self.jumper = OrbitJumper(self.TI, self.chain)

    def require_depth(self, needed: int, what: str):
        if self.depth < needed:
            raise PreconditionError(f"{what} needs depth >= {needed}, got {self.depth}")

    def level(self, k: int, label: int, i: int = 0) -> IntervalSet:
        """``T^i(I_label^(k))`` in integer coordinates."""
        return IntervalSet.interval(*self.towers.level(k, label, i))

    def to_rational(self, S: IntervalSet) -> IntervalSet:
        return S.to_rational(self.scale)


def _interval_json(S: IntervalSet, scale: int = 1) -> list:
    if scale != 1:
        S = S.to_rational(scale)
    return S.to_json()


# ----------------------------------------------------------------------------
# window checks


@dataclass
class MixingWindowResult:
    """Outcome of a window check.

    ``hits[i]`` refers to time ``ns[i]``: every n in exhaustive mode, the
    samples in sampled mode.  ``None`` entries are samples nobody could
    decide (sampled mode only); they are neither hits nor misses.
    """

    window: tuple
    mode: str
    stride: int | None
    ns: list
    hits: list
    first_miss: int | None
    peak_pieces: int
    wall_time: float
    target_count: int = 1
    target_misses: list = field(default_factory=list)
    piece_counts: list = field(default_factory=list)
    spot_checks: list = field(default_factory=list)
    reached: int | None = None
    notes: list = field(default_factory=list)

    @property
    def misses(self) -> int:
        return sum(1 for h in self.hits if h is False)

    @property
    def unresolved(self) -> int:
        return sum(1 for h in self.hits if h is None)

    @property
    def passed(self) -> bool:
        return self.misses == 0 and self.unresolved == 0 and self.complete

    @property
    def complete(self) -> bool:
        return self.reached is None or self.reached >= self.window[1]

    @property
    def certified(self) -> bool:
        return self.mode == "exhaustive" and self.passed

    def summary(self) -> dict:
        return {
            "window": [str(self.window[0]), str(self.window[1])],
            "mode": self.mode,
            "stride": self.stride,
            "checked": len(self.ns),
            "misses": self.misses,
            "unresolved": self.unresolved,
            "first_miss": None if self.first_miss is None else str(self.first_miss),
            "targets": self.target_count,
            "target_misses": self.target_misses,
            "peak_pieces": self.peak_pieces,
            "reached": None if self.reached is None else str(self.reached),
            "certified": self.certified,
            "passed": self.passed,
            "spot_checks": self.spot_checks,
            "notes": self.notes,
        }

    def to_json(self) -> dict:
        out = self.summary()
        out["timing"] = {"wall_time_s": round(self.wall_time, 3)}
        return out

    def csv_rows(self) -> list:
        counts = self.piece_counts or [""] * len(self.ns)
        return [(n, "" if h is None else int(h), c) for n, h, c in zip(self.ns, self.hits, counts)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "hit", "piece_count"])
        w.writerows(self.csv_rows())
        return buf.getvalue()


def _as_targets(J2) -> list:
    if isinstance(J2, IntervalSet):
        return [J2]
    return list(J2)


def _integerize(T, J1, targets):
    """Move a rational map and its sets to integer coordinates."""
    if isinstance(T, Iet):
        pts = [x for S in [J1, *targets] for p in S.pieces for x in p]
        TI = rescale_to_integer(T, pts)
        return TI, J1.to_integer(TI.scale), [S.to_integer(TI.scale) for S in targets], TI.scale
    return T, J1, targets, 1


def _hits_each(starts, pieces, targets) -> list:
    """Per target: does some piece overlap it with positive length?"""
    out = []
    for S in targets:
        hit = False
        for a, b in S.pieces:
            k = bisect.bisect_left(starts, b) - 1
            if k >= 0 and pieces[k][1] > a:
                hit = True
                break
        out.append(hit)
    return out


def stitched_window_check(T: _Exchange, J1: IntervalSet, J2, n_lo: int, n_hi: int,
                          samples=None, max_steps: int | None = None,
                          max_pieces: int | None = None, spot_checks: int = 0,
                          seed: int = 0, jumper=None, progress=None) -> MixingWindowResult:
    """Step ``T^n(J1)`` from n = 0 and test every target at each checked n.

    A hit at n means ``T^n(J1)`` meets every target in positive length.  With
    ``samples`` only those n are tested (the image still has to be stepped
    through every time).  Running out of ``max_steps`` stops early with the
    partial result and ``reached`` set, instead of raising.
    """
    t_start = time.perf_counter()
    if n_lo < 0 or n_hi < n_lo:
        raise ValueError(f"bad window [{n_lo}, {n_hi}]")
    targets = _as_targets(J2)
    if not J1 or any(not S for S in targets):
        raise PreconditionError("J1 and the targets must be nonempty")
    TI, S, tg, scale = _integerize(T, J1, targets)
    if S.pieces[0][0] < TI.start or S.pieces[-1][1] > TI.end:
        raise ValueError("J1 leaves the domain")
    sample_set = None if samples is None else set(samples)
    mode = "exhaustive" if samples is None else "sampled"
    ns, hits, counts = [], [], []
    tmiss = [0] * len(tg)
    first_miss = None
    pieces = list(S.pieces)
    peak = len(pieces)
    reached = None
    last = n_hi if max_steps is None else min(n_hi, max_steps)
    if last < n_hi:
        reached = last
    rng = random.Random(seed)
    spot_ns = set()
    if spot_checks:
        span = range(n_lo, last + 1)
        spot_ns = set(rng.sample(span, min(spot_checks, len(span)))) if len(span) else set()
    spots = []
    for n in range(0, last + 1):
        if n:
            pieces = step_pieces(TI, pieces)
            if len(pieces) > peak:
                peak = len(pieces)
                if max_pieces is not None and peak > max_pieces:
                    reached = n - 1
                    break
        if n < n_lo or (sample_set is not None and n not in sample_set):
            continue
        starts = [p[0] for p in pieces]
        each = _hits_each(starts, pieces, tg)
        hit = all(each)
        for i, h in enumerate(each):
            if not h:
                tmiss[i] += 1
        ns.append(n)
        hits.append(hit)
        counts.append(len(pieces))
        if not hit and first_miss is None:
            first_miss = n
        if n in spot_ns and jumper is not None:
            spots.append(_spot_check(TI, jumper, pieces, tg, n, S, rng))
        if progress is not None and n % 20000 == 0:
            progress(n, len(pieces))
    res = MixingWindowResult((n_lo, n_hi), mode, None, ns, hits, first_miss, peak,
                             time.perf_counter() - t_start, len(tg), tmiss, counts, spots, reached)
    if reached is not None:
        res.notes.append(f"stopped at n={reached} by budget")
    return res


def _spot_check(TI, jumper, pieces, targets, n, J1, rng) -> dict:
    """Exhibit x in J1 with T^n(x) in a target, found by running the
    inverse orbit and confirmed by the forward one."""
    tgt = targets[rng.randrange(len(targets))]
    overlap = IntervalSet._trusted(pieces).intersection(tgt)
    if not overlap:
        return {"n": str(n), "ok": False}
    a, b = overlap.pieces[rng.randrange(len(overlap.pieces))]
    y = rng.randrange(a, b)
    x = jumper.inverse().advance(y, n)
    ok = J1.contains_point(x) and jumper.advance(x, n) == y and tgt.contains_point(y)
    return {"n": str(n), "x": str(x), "y": str(y), "ok": ok}


def mixing_window_check(T: _Exchange, J1: IntervalSet, J2, n_lo: int, n_hi: int,
                        mode: str = "exhaustive", stride: int | None = None,
                        max_steps: int | None = None, max_pieces: int | None = None,
                        spot_checks: int = 0, seed: int = 0, jumper=None) -> MixingWindowResult:
    """Does ``T^n(J1)`` meet ``J2`` (each set in ``J2`` if it is a list) for n in the window?"""
    if mode == "exhaustive":
        samples = None
    elif mode == "sampled":
        if not stride or stride < 1:
            raise ValueError("sampled mode needs a positive stride")
        samples = sorted(set(range(n_lo, n_hi + 1, stride)) | {n_hi})
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if jumper is None and spot_checks and isinstance(T, (Iet, IntegerIet)):
        jumper = OrbitJumper(_integerize(T, J1, _as_targets(J2))[0])
    res = stitched_window_check(T, J1, J2, n_lo, n_hi, samples, max_steps, max_pieces,
                                spot_checks, seed, jumper)
    res.stride = stride
    if res.reached is not None and max_steps is not None and res.reached < n_hi:
        raise BudgetExceeded(f"window check stopped at n={res.reached}", reached=res.reached)
    return res


# ----------------------------------------------------------------------------
# Lemma 2: levels of O(I_3^(k+2)) against every level of O(I_2^(k+1))


@dataclass
class LemmaReport:
    name: str
    k: int
    source: dict
    targets: dict
    segments: list
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(seg.passed for seg in self.segments) and self.extra.get("passed", True)

    @property
    def certified(self) -> bool:
        return all(seg.certified for seg in self.segments) and self.extra.get("passed", True)

    def to_json(self) -> dict:
        return {
            "check": self.name,
            "k": self.k,
            "source": self.source,
            "targets": self.targets,
            "passed": self.passed,
            "certified": self.certified,
            "segments": [s.to_json() for s in self.segments],
            "extra": self.extra,
        }


def lemma2_check(system: KeaneSystem, k: int = 0, level: int = 0, max_steps: int | None = None,
                 max_pieces: int | None = None, spot_checks: int = 100, seed: int = 0,
                 progress=None) -> LemmaReport:
    """Exhaustive check that ``T^n(J')`` meets every level of ``O(I_2^(k+1))``
    for all n in ``[c_k, d_k]``, with ``J' = T^level(I_3^(k+2))``."""
    system.require_depth(k + 3, "lemma 2")
    c, d = system.table.window(k)
    J = system.level(k + 2, 3, level)
    targets = [IntervalSet.interval(*iv) for iv in system.towers.levels(k + 1, 2)]
    res = stitched_window_check(system.TI, J, targets, c, d, None, max_steps, max_pieces,
                                spot_checks, seed, system.jumper, progress)
    return LemmaReport(
        "lemma2", k,
        {"tower": f"I_3^({k + 2})", "level": level, "interval": _interval_json(J, system.scale)},
        {"tower": f"I_2^({k + 1})", "levels": len(targets)},
        [res],
    )


# ----------------------------------------------------------------------------
# Lemma 3: levels of O(I_2^(k+2)) against every level of O(I_3^(k+2))


class WitnessEngine:
    """Decide ``T^tau(B) meets C`` from tower itineraries, without iterating.

    ``B`` and ``C`` are intervals of level K.  Inside one tower over
    ``I^(K+1)`` the levels lying in ``B`` occur at times ``tb + wb*x`` and
    those in ``C`` at ``tc + wc*y`` (arithmetic runs).  If
    ``tau = (tc + wc*y) - (tb + wb*x)`` for admissible x, y then ``T^tau``
    carries a level inside B onto a level inside C, so the answer is yes.
    No witness means "undecided", never "no".

    Pairs may also straddle two consecutive towers j, j' whenever the
    return of the base of j meets the base of j' in positive length: the
    common sub-piece spends ``h_j`` steps in tower j and then climbs j'.
    """

    def __init__(self, towers: TowerStack, K: int, b_label: int, c_label: int, cross: bool = True):
        if towers.depth < K + 1:
            raise PreconditionError(f"witnesses at level {K} need {K + 1} inductions")
        ind = towers.chain[K]
        S = ind.sub_iet
        self.pairs = []
        for lab in towers.labels(K + 1):
            Bs = towers.visit_runs(K + 1, lab, b_label)
            nexts = [(lab, 0)]
            if cross:
                p = ind.index_of(lab)
                lo, hi = S.lefts[p] + S.offsets[p], S.ends[p] + S.offsets[p]
                h = ind.return_time(lab)
                nexts += [(ind.labels[q], h) for q in range(S.n)
                          if max(lo, S.lefts[q]) < min(hi, S.ends[q])]
            for lab2, shift in nexts:
                Cs = towers.visit_runs(K + 1, lab2, c_label)
                for tb, wb, cb in Bs:
                    for tc, wc, cc in Cs:
                        self.pairs.append((lab, tb, wb, cb, tc + shift, wc, cc))

    def witnessed(self, taus) -> np.ndarray:
        taus = [int(t) for t in taus]
        out = np.zeros(len(taus), dtype=bool)
        if not taus:
            return out
        for lab, tb, wb, cb, tc, wc, cc in self.pairs:
            bound = max(abs(max(taus)), abs(min(taus))) + abs(tc - tb) + wb * cb + wc * cc
            big = bound * max(wb, wc) >= 2**62
            dt = object if big else np.int64
            R = np.array(taus, dtype=dt) - (tc - tb)
            g = math.gcd(wb, wc)
            ok = (R % g) == 0
            R = R // g
            wbg, wcg = wb // g, wc // g
            inv = pow(wcg, -1, wbg) if wbg > 1 else 0
            y0 = (R * inv) % wbg if wbg > 1 else R * 0
            lo = np.maximum(-((-R) // wcg), 0)
            hi = np.minimum((R + wbg * (cb - 1)) // wcg, cc - 1)
            y = lo + ((y0 - lo) % wbg if wbg > 1 else 0)
            out |= ok & (y <= hi)
        return out


def lemma3_check(system: KeaneSystem, k: int = 0, level: int = 0, exhaustive_span: int = 10_000,
                 stride: int | None = 10_000, max_steps: int | None = None,
                 max_pieces: int | None = None, threads: int = 1, spot_checks: int = 100,
                 seed: int = 0, progress=None) -> LemmaReport:
    """``T^n(J')``, ``J' = T^level(I_2^(k+2))``, against every level of
    ``O(I_3^(k+2))`` for n in ``[d_k, c_(k+1)]``.

    The stretch ``[d_k, d_k + exhaustive_span]`` is stepped exactly.  The
    rest is sampled with the given stride and decided by the witness
    engine over the towers of level k+3.
    """
    system.require_depth(k + 3, "lemma 3")
    tab = system.table
    d_k = tab.d[k]
    c_next = tab.c[k + 1] if k + 1 < len(tab.c) else None
    J = system.level(k + 2, 2, level)
    target_levels = system.towers.levels(k + 2, 3)
    targets = [IntervalSet.interval(*iv) for iv in target_levels]
    hi_ex = d_k + exhaustive_span if c_next is None else min(d_k + exhaustive_span, c_next)
    segs = []
    ex = stitched_window_check(system.TI, J, targets, d_k, hi_ex, None, max_steps, max_pieces,
                               spot_checks, seed, system.jumper, progress)
    ex.notes.append("exhaustive region")
    segs.append(ex)
    extra = {}
    if stride:
        if c_next is None:
            raise PreconditionError(f"the sampled region reaches c_{k + 1}, which needs depth >= {k + 4}")
        system.require_depth(k + 4, "witness sampling for lemma 3")
        segs.append(_lemma3_sampled(system, k, level, hi_ex, c_next, stride, len(targets), threads))
        extra["insertion"] = lemma3_insertion_check(system, k)
        extra["passed"] = extra["insertion"]["passed"]
    return LemmaReport(
        "lemma3", k,
        {"tower": f"I_2^({k + 2})", "level": level, "interval": _interval_json(J, system.scale)},
        {"tower": f"I_3^({k + 2})", "levels": len(targets)},
        segs, extra,
    )


def _lemma3_sampled(system, k, level, n_lo, n_hi, stride, n_targets, threads) -> MixingWindowResult:
    t0 = time.perf_counter()
    eng = WitnessEngine(system.towers, k + 2, 2, 3)
    ns = list(range(n_lo, n_hi + 1, stride))
    if ns[-1] != n_hi:
        ns.append(n_hi)
    ells = np.arange(n_targets, dtype=np.int64)

    def chunk(part):
        res = []
        for n in part:
            # T^n(T^level B) meets T^l C  iff  T^(n + level - l)(B) meets C
            res.append(bool(eng.witnessed([n + level - int(l) for l in ells]).all()))
        return res

    parts = [ns[i::max(threads, 1)] for i in range(max(threads, 1))]
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(chunk, parts))
    decided = {}
    for part, res in zip(parts, results):
        decided.update(zip(part, res))
    hits = [True if decided[n] else None for n in ns]
    out = MixingWindowResult((n_lo, n_hi), "sampled", stride, ns, hits, None, 0,
                             time.perf_counter() - t0, n_targets, [], [])
    out.notes.append("sampled region: decided by tower witnesses at sampled n only; not a certificate")
    if out.unresolved:
        out.notes.append(f"{out.unresolved} samples had no witness (undecided, not misses)")
    return out


def lemma3_insertion_check(system: KeaneSystem, k: int = 0) -> dict:
    """First time i <= b_(k+2,2) with ``T^i(I_2^(k+2))`` meeting ``I_3^(k+2)``,
    then ``T^(i + j b_(k+2,2))(I_2^(k+2))`` meets it for every j < m_(k+2)."""
    K = k + 2
    B = system.level(K, 2)
    C = system.level(K, 3)
    bK2 = system.table.b[K][1]
    m = system.params.stages[K][0]
    pieces = list(B.pieces)
    first = None
    for i in range(1, bK2 + 1):
        pieces = step_pieces(system.TI, pieces)
        if intersects(IntervalSet._trusted(pieces), C):
            first = i
            break
    if first is None:
        return {"passed": False, "first_time": None}
    eng = WitnessEngine(system.towers, K, 2, 3)
    js = np.arange(m, dtype=object)
    ok = eng.witnessed([first + int(j) * bK2 for j in js])
    return {
        "passed": bool(ok.all()),
        "first_time": first,
        "step": str(bK2),
        "count": str(m),
        "witnessed": int(ok.sum()),
    }


# ----------------------------------------------------------------------------
# the insertion facts about single induced steps


def insertion_stay(system: KeaneSystem, k: int, src: int, dst: int) -> dict:
    """Follow ``S_k(I_src^(k)) cap I_dst^(k)`` under the induced map S_k.

    Returns how many consecutive S_k-steps (counting the piece itself) its
    parts spend in ``I_dst^(k)``; in units of T this is ``visits * b_(k,dst)``,
    the time spent in ``O(I_dst^(k))``.
    """
    if k < 1 or k > len(system.chain):
        raise PreconditionError(f"level {k} is outside the faithful chain")
    ind = system.chain[k - 1]
    S = ind.sub_iet
    isrc = ind.index_of(src)
    a, b = ind.base(src)
    d = S.offsets[isrc]
    lo, hi = ind.base(dst)
    start = IntervalSet.interval(a + d, b + d).intersection(IntervalSet.interval(lo, hi))
    if not start:
        return {"k": k, "src": src, "dst": dst, "meets": False}
    pieces = list(start.pieces)
    stays = []
    visits = 1
    cap = 10 * (max(system.params.stages[k]) + 2)
    while pieces and visits <= cap:
        nxt = step_pieces(S, pieces)
        inside = IntervalSet._trusted(nxt).intersection(IntervalSet.interval(lo, hi))
        left = IntervalSet._trusted(nxt).measure - inside.measure
        if left:
            stays.append((visits, left))
        pieces = list(inside.pieces)
        visits += 1
    h = system.table.b[k][dst - 1]
    vmin, vmax = min(v for v, _ in stays), max(v for v, _ in stays)
    return {
        "k": k, "src": src, "dst": dst, "meets": True,
        "visits_min": vmin, "visits_max": vmax,
        "time_min": str(vmin * h), "time_max": str(vmax * h),
        "by_visits": {str(v): format_rational(w) for v, w in stays},
    }


def insertion_facts(system: KeaneSystem) -> list:
    """Compare the stay times with the multiples of b the construction predicts."""
    out = []
    for k in range(1, len(system.chain)):
        m, n = system.params.stages[k]
        b = system.table.b[k]
        s23 = insertion_stay(system, k, 2, 3)
        s42 = insertion_stay(system, k, 4, 2)
        out.append({
            "k": k,
            "2->3": s23,
            "2->3 predicted": {"n_k b_k3": str(n * b[2]), "(n_k-1) b_k3": str((n - 1) * b[2])},
            "4->2": s42,
            "4->2 predicted": {"m_k b_k2": str(m * b[1]), "(m_k-1) b_k2": str((m - 1) * b[1])},
        })
    return out


# ----------------------------------------------------------------------------
# Theorem 1 driver


def theorem1_check(system: KeaneSystem, k0: int = 0, J1: IntervalSet | None = None,
                   J2: IntervalSet | None = None, budget_steps: int | None = None,
                   max_pieces: int | None = None, spot_checks: int = 0, seed: int = 0,
                   progress=None) -> LemmaReport:
    """Run ``T^n(J1)`` against ``J2`` from ``c_k0`` through the stitched
    windows ``[c_k0, d_k0]`` then ``[d_k0, c_(k0+1)]``, exhaustively, as
    far as ``budget_steps`` allows (default: the first window).

    Defaults: J1 is the base of ``I_3^(k0+2)``, J2 the base of ``I_2^(k0+1)``.
    """
    system.require_depth(k0 + 4, "theorem 1")
    tab = system.table
    c0, d0 = tab.window(k0)
    c1 = tab.c[k0 + 1]
    if J1 is None:
        J1 = system.level(k0 + 2, 3)
    if J2 is None:
        J2 = system.level(k0 + 1, 2)
    if budget_steps is None:
        budget_steps = d0
    res = stitched_window_check(system.TI, J1, J2, c0, c1, None, budget_steps, max_pieces,
                                spot_checks, seed, system.jumper, progress)
    covered = res.reached if res.reached is not None else c1
    return LemmaReport(
        "theorem1", k0,
        {"interval": _interval_json(J1, system.scale)},
        {"interval": _interval_json(J2, system.scale)},
        [res],
        {
            "segments": [[str(c0), str(d0)], [str(d0), str(c1)]],
            "coverage": [str(c0), str(covered)],
            "misses": res.misses,
            "passed": res.misses == 0,
        },
    )


# ----------------------------------------------------------------------------
# obstruction to mixing of all orders


@dataclass
class ObstructionResult:
    V: tuple
    s: int
    s_i: list
    return_times: list
    threshold: int
    J: IntervalSet
    J_prime: IntervalSet
    superset: IntervalSet
    exact_intersection: IntervalSet | None
    contained: bool
    disjoint: bool
    rigid_checks: list
    spot_checks: list
    scale: int = 1
    wall_time: float = 0.0

    @property
    def verdict(self) -> bool:
        return (self.contained and self.disjoint and all(self.rigid_checks)
                and all(s["ok"] for s in self.spot_checks)
                and all(r > self.threshold for r in self.flat_returns))

    @property
    def flat_returns(self) -> list:
        return [r for row in self.return_times for r in row]

    def to_json(self) -> dict:
        f = lambda S: _interval_json(S, self.scale)
        return {
            "V": [format_rational(x) for x in _ratpair(self.V, self.scale)],
            "s": self.s,
            "s_i": self.s_i,
            "r": [[str(r) for r in row] for row in self.return_times],
            "threshold": str(self.threshold),
            "J": f(self.J),
            "J_prime": f(self.J_prime),
            "intersection_superset": f(self.superset),
            "exact_intersection": None if self.exact_intersection is None else f(self.exact_intersection),
            "contained_in_J": self.contained,
            "disjoint_from_J_prime": self.disjoint,
            "rigid_checks": self.rigid_checks,
            "spot_checks": self.spot_checks,
            "verdict": self.verdict,
            "timing": {"wall_time_s": round(self.wall_time, 3)},
        }


def _ratpair(iv, scale):
    return (Fraction(iv[0], scale), Fraction(iv[1], scale))


def _aligned(S: IntervalSet, levels: list) -> bool:
    """S is a union of the given levels (each lies inside S or misses it,
    and together they cover S)."""
    for a, b in levels:
        inter = S.intersection(IntervalSet.interval(a, b)).measure
        if inter and inter != b - a:
            return False
    return S.issubset(IntervalSet(tuple(levels)))


def _continuous_under(T, S: IntervalSet, l: int) -> bool:
    for a, b in S.pieces:
        pieces = [(a, b)]
        for _ in range(l):
            pieces = step_pieces(T, pieces)
            if len(pieces) != 1:
                return False
    return True


def obstruction_check(T: _Exchange, l: int, thresholds, J: IntervalSet, J_prime: IntervalSet,
                      V=None, chain=None, max_steps: int = 10_000_000, exact_limit: int = 200_000,
                      spot_checks: int = 20, seed: int = 0, max_halvings: int = 64) -> ObstructionResult:
    """Return times ``r_(i,j)`` of the pieces ``U_(i,j)`` of ``T|_(U_i)`` for the
    pieces ``U_i`` of ``T|_V``, and a certificate that ``cap_(i,j) T^r(J)``
    lies inside ``J`` (hence misses ``J'``).

    Certificate: for each piece and each level ``T^k(U_i)`` inside J the
    map ``T^r`` carries ``T^k(U_(i,j))`` rigidly onto
    ``T^k(T|_(U_i)(U_(i,j)))``; the union of these target cells contains
    the intersection and is checked to lie in J.  When every r is at most
    ``exact_limit`` the intersection is also computed outright by
    iterating J.  ``V`` defaults to the first ``I^(k)`` (or, for a map
    that is not a Keane chain, the first ``[0, 2^-h)``) whose return
    times all exceed the threshold.
    """
    t0 = time.perf_counter()
    threshold = max([l, *thresholds])
    if intersects(J, J_prime):
        raise PreconditionError("J and J' must be disjoint")
    keane = T.n == 4 and T.permutation == KEANE_PERMUTATION
    # non-Keane maps get room for halving V in integer coordinates
    TI, (Ji, Jpi), scale = _integer_map(T, [J, J_prime], 1 if keane else 2**max_halvings)
    if chain is None and keane:
        try:
            chain = induction_chain(TI, 3, max_steps=max_steps)
        except Exception:
            chain = []
    chain = list(chain or [])
    if V is None:
        V = _choose_V(TI, chain, threshold, Ji.union(Jpi), max_steps, max_halvings)
    else:
        V = (V[0] * scale, V[1] * scale) if scale != 1 else tuple(V)
    SV = first_return_map(TI, V, max_steps=max_steps)
    if min(SV.return_times) <= threshold:
        raise PreconditionError(f"return times to V do not exceed {threshold}")
    levels = [lv for tw in SV.towers for lv in tw.levels()]
    if not _aligned(Ji.union(Jpi), levels):
        raise PreconditionError("J and J' must be unions of tower levels over V")
    if not (_continuous_under(TI, Ji, l) and _continuous_under(TI, Jpi, l)):
        raise PreconditionError(f"J and J' must be bounded by discontinuities of T^{l}")

    jumper = OrbitJumper(TI, chain)
    # when V is a level of the chain, nested inductions can ride the chain
    vk = next((k + 1 for k, c in enumerate(chain) if c.J == tuple(V)), None)
    if vk is not None and chain[vk - 1].sub_iet.lengths != SV.sub_iet.lengths:
        vk = None
    returns, s_i, cells, rigid = [], [], [], []
    subs = []
    for p in range(SV.size):
        U = (SV.sub_iet.lefts[p], SV.sub_iet.ends[p])
        if vk is not None:
            ind = induce_within_chain(TI, chain, vk, p, max_steps=max_steps)
        else:
            ind = first_return_map(SV.sub_iet, U, max_steps=max_steps, weights=SV.return_times)
        subs.append((U, ind))
        returns.append(list(ind.return_times))
        s_i.append(ind.size)
        tw = SV.towers[p]
        for q in range(ind.size):
            src = (ind.sub_iet.lefts[q], ind.sub_iet.ends[q])
            dst = (src[0] + ind.sub_iet.offsets[q], src[1] + ind.sub_iet.offsets[q])
            r = ind.return_times[q]
            rigid.append(jumper.advance(src[0], r) == dst[0] and jumper.advance(src[1] - 1, r) == dst[1] - 1)
            for lo, hi in tw.levels():
                if Ji.contains_point(lo):
                    s = lo - U[0]
                    cells.append((dst[0] + s, dst[1] + s))
    superset = IntervalSet(tuple(cells))
    exact = None
    rmax = max(r for row in returns for r in row)
    if rmax <= exact_limit:
        exact = _exact_intersection(TI, Ji, sorted({r for row in returns for r in row}))
    target = exact if exact is not None else superset
    contained = superset.issubset(Ji) and (exact is None or exact.issubset(superset))
    disjoint = not intersects(target, Jpi)
    spots = _obstruction_spots(SV, subs, Ji, Jpi, jumper, spot_checks, seed)
    res = ObstructionResult(V, SV.size, s_i, returns, threshold, Ji, Jpi, superset, exact,
                            contained, disjoint, rigid, spots, scale, time.perf_counter() - t0)
    return res


def _integer_map(T, sets, extra: int = 1):
    if isinstance(T, Iet):
        pts = [x for S in sets for p in S.pieces for x in p]
        TI = rescale_to_integer(T, [*pts, Fraction(1, extra)])
        return TI, [S.to_integer(TI.scale) for S in sets], TI.scale
    return T, list(sets), 1


def _choose_V(TI, chain, threshold, S, max_steps, max_halvings):
    """First candidate whose return times exceed the threshold and whose
    tower levels S is a union of."""
    for ind in chain:
        if min(ind.return_times) > threshold:
            return ind.J
    a = TI.start
    width = TI.end - TI.start
    for _ in range(max_halvings):
        V = (a, a + width)
        if width > 0:
            try:
                SV = first_return_map(TI, V, max_steps=max_steps)
            except BudgetExceeded:
                SV = None
            if (SV is not None and V != (TI.start, TI.end) and min(SV.return_times) > threshold
                    and _aligned(S, [lv for tw in SV.towers for lv in tw.levels()])):
                return V
        if width % 2:
            raise PreconditionError("no qualifying V at this resolution; rescale the map first")
        width //= 2
    raise PreconditionError("no qualifying V within the halving budget")


def _exact_intersection(TI, J: IntervalSet, rs) -> IntervalSet:
    """``cap_r T^r(J)`` by iterating the image of J."""
    pieces = list(J.pieces)
    out = None
    n = 0
    for r in rs:
        while n < r:
            pieces = step_pieces(TI, pieces)
            n += 1
        img = IntervalSet._trusted(pieces)
        out = img if out is None else out.intersection(img)
    return out


def _obstruction_spots(SV, subs, J, Jp, jumper, count, seed) -> list:
    """Points y of J' together with the index (i, j) for which the unique
    T^r-preimage of y lies outside J, confirmed by a forward jump."""
    rng = random.Random(seed)
    out = []
    if not Jp:
        return out
    levels = []
    for p, tw in enumerate(SV.towers):
        for lo, hi in tw.levels():
            if Jp.contains_point(lo):
                levels.append((p, lo, hi))
    for _ in range(count):
        p, lo, hi = levels[rng.randrange(len(levels))]
        y = rng.randrange(int(lo), int(hi))
        U, ind = subs[p]
        s = lo - U[0]
        z = ind.sub_iet.inverse(y - s)
        q = ind.sub_iet.index(z)
        r = ind.return_times[q]
        x = z + s
        ok = jumper.advance(x, r) == y and not J.contains_point(x)
        out.append({"y": str(y), "piece": [p + 1, q + 1], "r": str(r), "x": str(x), "ok": ok})
    return out
