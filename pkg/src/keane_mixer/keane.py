"""Keane's 4-interval construction: landing matrices, return times, search.

Stage k uses the landing matrix ``A(m_k, n_k)``.  Level-(k+1) lengths are
``A(m_k, n_k)`` times level-k lengths, and ``b[k][j]`` (return time of
``I_j^(k)`` to ``I^(k)``) is the j-th column sum of ``A_0 A_1 ... A_{k-1}``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .exact import BudgetExceeded, Iet, Permutation, format_rational, parse_rational

KEANE_PERMUTATION = Permutation((4, 2, 1, 3))
UNIFORM_SEED = (Fraction(1, 4),) * 4

# Miller-Rabin with the first 13 primes as bases is exact below this bound.
DETERMINISTIC_LIMIT = 3317044064679887385961981
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def matrix_A(m: int, n: int) -> tuple:
    if m < 1 or n < 1:
        raise ValueError(f"need m, n >= 1, got m={m}, n={n}")
    return ((0, 0, 1, 1), (m - 1, m, 0, 0), (n, n, n - 1, n), (1, 1, 1, 1))


def matmul(A, B) -> tuple:
    return tuple(
        tuple(sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0])))
        for i in range(len(A))
    )


def matvec(A, v) -> tuple:
    return tuple(sum(a * x for a, x in zip(row, v)) for row in A)


def column_sums(A) -> tuple:
    return tuple(sum(row[j] for row in A) for j in range(len(A[0])))


IDENTITY4 = tuple(tuple(int(i == j) for j in range(4)) for i in range(4))


def matrix_product(stages) -> tuple:
    P = IDENTITY4
    for m, n in stages:
        P = matmul(P, matrix_A(m, n))
    return P


# ----------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class StageParams:
    """The sequence ``(m_k, n_k)`` plus the seed length vector."""

    stages: tuple
    seed: tuple = UNIFORM_SEED

    def __post_init__(self):
        stages = tuple((int(m), int(n)) for m, n in self.stages)
        for m, n in stages:
            if m < 1 or n < 1:
                raise ValueError(f"stage ({m}, {n}) has an entry below 1")
        seed = tuple(Fraction(x) if not isinstance(x, str) else parse_rational(x) for x in self.seed)
        if len(seed) != 4 or any(x <= 0 for x in seed):
            raise ValueError("seed must be 4 positive rationals")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "seed", seed)

    def __len__(self):
        return len(self.stages)

    def truncated(self, depth: int) -> "StageParams":
        return StageParams(self.stages[:depth], self.seed)

    def to_json(self) -> dict:
        return {
            "stages": [[str(m), str(n)] for m, n in self.stages],
            "seed": [format_rational(x) for x in self.seed],
        }

    @classmethod
    def from_json(cls, data: dict) -> "StageParams":
        if "stages" not in data:
            raise ValueError("params need a 'stages' list")
        seed = data.get("seed")
        seed = tuple(parse_rational(str(s)) for s in seed) if seed else UNIFORM_SEED
        return cls(tuple((int(m), int(n)) for m, n in data["stages"]), seed)


def _check_depth(p: StageParams, depth: int):
    if depth < 0 or depth > len(p.stages):
        raise ValueError(f"depth {depth} outside 0..{len(p.stages)}")


def lengths_from_params(p: StageParams, depth: int, seed=None) -> tuple:
    """Normalized ``A_0 ... A_{depth-1} seed``."""
    _check_depth(p, depth)
    seed = tuple(Fraction(x) for x in (seed if seed is not None else p.seed))
    v = matvec(matrix_product(p.stages[:depth]), seed)
    total = sum(v)
    return tuple(x / total for x in v)


def build_iet(p: StageParams, depth: int, seed=None) -> Iet:
    return Iet(lengths_from_params(p, depth, seed), KEANE_PERMUTATION)


# ----------------------------------------------------------------------------
# return times


def next_return_times(b, m: int, n: int) -> tuple:
    b1, b2, b3, b4 = b
    return (
        (m - 1) * b2 + n * b3 + b4,
        m * b2 + n * b3 + b4,
        b1 + (n - 1) * b3 + b4,
        b1 + n * b3 + b4,
    )


@dataclass(frozen=True)
class ReturnTable:
    """``b[k][j-1]`` for k = 0..depth; ``c[k]``, ``d[k]`` for k <= depth-2."""

    stages: tuple
    b: tuple
    c: tuple
    d: tuple

    @property
    def depth(self) -> int:
        return len(self.b) - 1

    def b4_prev(self, k: int) -> int:
        """``b[k][4]`` with the convention ``b[-1][4] = 1``."""
        return 1 if k < 0 else self.b[k][3]

    def window(self, k: int) -> tuple:
        return self.c[k], self.d[k]

    def to_json(self) -> dict:
        return {
            "b": [[str(x) for x in row] for row in self.b],
            "c": [str(x) for x in self.c],
            "d": [str(x) for x in self.d],
        }


def window_bounds(b, k: int) -> tuple:
    c = b[k + 1][1] * b[k + 2][2] + b[k + 2][2] + b[k + 2][3] + b[k + 1][3]
    d = b[k + 2][2] * b[k + 2][1] + b[k + 2][1]
    return c, d


def return_table(p, depth: int | None = None) -> ReturnTable:
    """Return times by recurrence, cross-checked against matrix column sums."""
    stages = p.stages if isinstance(p, StageParams) else tuple(tuple(s) for s in p)
    if depth is None:
        depth = len(stages)
    if depth < 0 or depth > len(stages):
        raise ValueError(f"depth {depth} outside 0..{len(stages)}")
    b = [(1, 1, 1, 1)]
    P = IDENTITY4
    for k in range(depth):
        m, n = stages[k]
        b.append(next_return_times(b[k], m, n))
        P = matmul(P, matrix_A(m, n))
        if column_sums(P) != b[-1]:
            raise AssertionError(f"recurrence and column sums disagree at level {k + 1}")
    cs, ds = [], []
    for k in range(depth - 1):
        c, d = window_bounds(b, k)
        cs.append(c)
        ds.append(d)
    return ReturnTable(tuple(stages[:depth]), tuple(b), tuple(cs), tuple(ds))


# ----------------------------------------------------------------------------
# primality


def _miller_rabin(x: int, bases) -> bool:
    d, s = x - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in bases:
        a %= x
        if a == 0:
            continue
        y = pow(a, d, x)
        if y == 1 or y == x - 1:
            continue
        for _ in range(s - 1):
            y = y * y % x
            if y == x - 1:
                break
        else:
            return False
    return True


def primality(x: int, rounds: int = 32) -> str:
    """'prime', 'probable prime' or 'composite'.

    Exact below ``DETERMINISTIC_LIMIT``; above it the 13 fixed bases are
    followed by ``rounds`` extra bases drawn from a generator seeded by x,
    so the answer is reproducible.
    """
    if x < 2:
        raise ValueError(f"primality is defined for x >= 2, got {x}")
    for p in _SMALL_PRIMES:
        if x % p == 0:
            return "prime" if x == p else "composite"
    if not _miller_rabin(x, _SMALL_PRIMES):
        return "composite"
    if x < DETERMINISTIC_LIMIT:
        return "prime"
    rng = random.Random(x)
    bases = [rng.randrange(2, x - 1) for _ in range(rounds)]
    return "probable prime" if _miller_rabin(x, bases) else "composite"


def is_prime(x: int) -> bool:
    return primality(x) != "composite"


# ----------------------------------------------------------------------------
# conditions


def units_ratio(primes) -> Fraction:
    """phi(g)/g for g the product of the given distinct primes."""
    r = Fraction(1)
    for p in set(primes):
        r *= Fraction(p - 1, p)
    return r


@dataclass
class ConditionEntry:
    condition: int
    k: int
    passed: bool
    witness: dict

    def to_json(self) -> dict:
        return {"condition": self.condition, "k": self.k, "passed": self.passed, "witness": self.witness}


@dataclass
class ConditionReport:
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list:
        return [e for e in self.entries if not e.passed]

    def get(self, condition: int, k: int) -> ConditionEntry:
        for e in self.entries:
            if e.condition == condition and e.k == k:
                return e
        raise KeyError((condition, k))

    def to_json(self) -> dict:
        return {"passed": self.passed, "entries": [e.to_json() for e in self.entries]}


def check_conditions(p, depth: int | None = None) -> ConditionReport:
    """Evaluate conditions 1-5 wherever the table reaches.

    1: b[k][2] prime (k >= 1); 2: b[i][2] does not divide b[k][3] (1 <= i < k);
    3: phi(g)/g > 1/2 for g = prod_{i<=k} b[i][2];
    4: b[k][2] b[k+1][3] + b[k+1][3] + b[k][4] + b[k-1][4] < m_k b[k][2];
    5: b[k][3] b[k][2] + b[k][2] < n_k b[k][3].
    """
    tab = return_table(p, depth)
    b, stages, K = tab.b, tab.stages, tab.depth
    rep = ConditionReport()
    primes = []
    for k in range(1, K + 1):
        b2 = b[k][1]
        status = primality(b2)
        rep.entries.append(ConditionEntry(1, k, status != "composite", {"b2": str(b2), "status": status}))
        bad = [b[i][1] for i in range(1, k) if b[k][2] % b[i][1] == 0]
        rep.entries.append(ConditionEntry(
            2, k, not bad, {"b3": str(b[k][2]), "divisors": [str(x) for x in bad]}))
        primes.append(b2)
        g = math.prod(primes)
        if len(set(primes)) == len(primes) and status != "composite":
            ratio = units_ratio(primes)
        else:
            ratio = Fraction(_phi(g), g)
        rep.entries.append(ConditionEntry(
            3, k, ratio > Fraction(1, 2), {"g": str(g), "ratio": format_rational(ratio)}))
    for k in range(K):
        m, n = stages[k]
        lhs = b[k][1] * b[k + 1][2] + b[k + 1][2] + b[k][3] + tab.b4_prev(k - 1)
        rhs = m * b[k][1]
        rep.entries.append(ConditionEntry(4, k, lhs < rhs, {"lhs": str(lhs), "rhs": str(rhs)}))
        lhs = b[k][2] * b[k][1] + b[k][1]
        rhs = n * b[k][2]
        rep.entries.append(ConditionEntry(5, k, lhs < rhs, {"lhs": str(lhs), "rhs": str(rhs)}))
    return rep


def _phi(g: int) -> int:
    # only reached when some factor is not a distinct prime; fine for small g
    out, x, p = g, g, 2
    while p * p <= x:
        if x % p == 0:
            while x % p == 0:
                x //= p
            out -= out // p
        p += 1
    if x > 1:
        out -= out // x
    return out


# ----------------------------------------------------------------------------
# search


@dataclass(frozen=True)
class SearchPolicy:
    """Scan caps: ``n_cap`` candidates for n_k, ``m_cap`` steps of the prime scan."""

    n_cap: int = 1_000_000
    m_cap: int = 1_000_000


@dataclass(frozen=True)
class StageChoice:
    m: int
    n: int
    f: int
    prime: int
    status: str


def _is_unit(x: int, g: int) -> bool:
    return math.gcd(x % g, g) == 1 if g > 1 else True


def search_stage(tab: ReturnTable, policy: SearchPolicy = SearchPolicy()) -> StageChoice:
    """Choose ``(m_k, n_k)`` for k = tab.depth.

    n_k is the smallest value satisfying condition 5 whose class
    f = b[k+1][3] mod g is a unit with f + b[k][3] - b[k][1] also a unit
    (the latter is the class of n_k b[k][3] + b[k][4], the start of the
    progression scanned for a prime).  m_k is then scanned upward from the
    smallest value satisfying condition 4 until b[k+1][2] is prime and the
    units ratio stays above 1/2.  Each choice is re-validated; a failure
    moves on to the next n_k.
    """
    k = tab.depth
    b = tab.b[k]
    b1, b2, b3, b4 = b
    primes = [tab.b[i][1] for i in range(1, k + 1)]
    g = math.prod(primes)
    ratio = units_ratio(primes)
    if policy.n_cap <= 0 or policy.m_cap <= 0:
        raise BudgetExceeded("search caps are zero", reached=0)
    n = (b3 * b2 + b2) // b3 + 1
    for _ in range(policy.n_cap):
        b3_next = b1 + (n - 1) * b3 + b4
        f = b3_next % g if g > 1 else 0
        if _is_unit(f, g) and _is_unit(f + b3 - b1, g):
            lhs = b2 * b3_next + b3_next + b4 + tab.b4_prev(k - 1)
            m = lhs // b2 + 1
            for _ in range(policy.m_cap):
                cand = m * b2 + n * b3 + b4
                status = primality(cand)
                if status != "composite" and cand not in primes and ratio * Fraction(cand - 1, cand) > Fraction(1, 2):
                    stages = tab.stages + ((m, n),)
                    if check_conditions(stages).passed:
                        return StageChoice(m, n, f, cand, status)
                    break
                m += 1
            else:
                raise BudgetExceeded(f"no prime within {policy.m_cap} steps for n={n}", reached=m)
        n += 1
    raise BudgetExceeded(f"no admissible n within {policy.n_cap} candidates", reached=n)


def search(count: int, policy: SearchPolicy = SearchPolicy(), seed=UNIFORM_SEED, progress=None) -> StageParams:
    if count < 1:
        raise ValueError("need at least one stage")
    stages = ()
    for _ in range(count):
        tab = return_table(stages)
        try:
            choice = search_stage(tab, policy)
        except BudgetExceeded as exc:
            exc.partial = StageParams(stages, seed)
            raise
        stages = stages + ((choice.m, choice.n),)
        if progress is not None:
            progress(choice)
    return StageParams(stages, seed)
