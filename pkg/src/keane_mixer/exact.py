"""Exact interval exchange transformations and finite unions of intervals.

Everything here is exact.  Lengths and endpoints are ``fractions.Fraction``
(or plain ``int`` once a map has been rescaled to integer coordinates), and
every interval is half-open ``[a, b)``: a discontinuity belongs to the
interval on its right.

Permutations follow the placement convention: ``Permutation((4, 2, 1, 3))``
means the 4th interval is placed first by ``T``, the 2nd second, the 1st
third and the 3rd last.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

Rational = Fraction

INT128_MAX = 2**127 - 1


class BudgetExceeded(RuntimeError):
    """A step or piece budget ran out before the computation finished.

    ``reached`` records how far the computation got (a step count or time
    index) so callers can report partial progress.
    """

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return parse_rational(x)
    if isinstance(x, float):
        raise TypeError("floats are not accepted; pass a Fraction, int or 'p/q' string")
    return Fraction(x)


def parse_rational(s: str) -> Fraction:
    """Parse ``"p/q"`` (or a bare integer string) into a Fraction."""
    s = s.strip()
    if "/" in s:
        p, q = s.split("/", 1)
        q = int(q)
        if q == 0:
            raise ValueError(f"zero denominator in {s!r}")
        return Fraction(int(p), q)
    return Fraction(int(s))


def format_rational(x) -> str:
    x = as_rational(x)
    return f"{x.numerator}/{x.denominator}"


def lcm_of_denominators(values: Iterable) -> int:
    return reduce(math.lcm, (as_rational(v).denominator for v in values), 1)


@dataclass(frozen=True)
class Permutation:
    """Placement-order permutation on ``{1..n}``."""

    images: tuple

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(1, len(images) + 1)):
            raise ValueError(f"not a permutation of 1..{len(images)}: {self.images}")
        object.__setattr__(self, "images", images)

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        text = text.strip().strip("()")
        parts = text.split() if (" " in text or "," in text) else list(text)
        return cls(tuple(int(p) for p in " ".join(parts).replace(",", " ").split()))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    def __len__(self):
        return len(self.images)

    def __str__(self):
        sep = "" if len(self.images) < 10 else " "
        return "(" + sep.join(str(i) for i in self.images) + ")"

    @property
    def slots(self) -> tuple:
        """``slots[j]`` is the 0-based slot where interval ``j+1`` lands."""
        out = [0] * len(self.images)
        for slot, name in enumerate(self.images):
            out[name - 1] = slot
        return tuple(out)

    def mirrored(self) -> "Permutation":
        """The same exchange read with the orientation of the line reversed."""
        n = len(self.images)
        return Permutation(tuple(n + 1 - i for i in reversed(self.images)))


class _Exchange:
    """Shared evaluation code for exact and integer-scaled exchanges.

    Subclasses set ``lengths``, ``permutation`` and ``start``; everything
    else is derived once in ``_derive``.
    """

    def _derive(self):
        n = len(self.lengths)
        if len(self.permutation) != n:
            raise ValueError("permutation size does not match number of lengths")
        if n == 0:
            raise ValueError("an exchange needs at least one interval")
        for length in self.lengths:
            if length <= 0:
                raise ValueError(f"non-positive length {length}")
        lefts = []
        acc = self.start
        for length in self.lengths:
            lefts.append(acc)
            acc = acc + length
        end = acc
        image_lefts = [None] * n
        acc = self.start
        for name in self.permutation.images:
            image_lefts[name - 1] = acc
            acc = acc + self.lengths[name - 1]
        object.__setattr__(self, "lefts", tuple(lefts))
        object.__setattr__(self, "ends", tuple(lefts[1:]) + (end,))
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "total", end - self.start)
        object.__setattr__(self, "offsets", tuple(image_lefts[j] - lefts[j] for j in range(n)))
        object.__setattr__(self, "slot_order", tuple(name - 1 for name in self.permutation.images))
        object.__setattr__(self, "image_lefts", tuple(image_lefts))
        sorted_image_lefts = tuple(image_lefts[j] for j in self.slot_order)
        object.__setattr__(self, "_sorted_image_lefts", sorted_image_lefts)

    @property
    def n(self) -> int:
        return len(self.lengths)

    def contains(self, x) -> bool:
        return self.start <= x < self.end

    def index(self, x) -> int:
        """0-based index of the interval containing ``x``."""
        if not (self.start <= x < self.end):
            raise ValueError(f"{x} outside domain [{self.start}, {self.end})")
        return bisect.bisect_right(self.lefts, x) - 1

    def __call__(self, x):
        return x + self.offsets[self.index(x)]

    def inverse(self, y):
        if not (self.start <= y < self.end):
            raise ValueError(f"{y} outside domain [{self.start}, {self.end})")
        slot = bisect.bisect_right(self._sorted_image_lefts, y) - 1
        j = self.slot_order[slot]
        return y - self.offsets[j]

    def intervals(self) -> list:
        return [(a, b) for a, b in zip(self.lefts, self.ends)]

    def image_intervals(self) -> list:
        return [(a + d, b + d) for (a, b), d in zip(self.intervals(), self.offsets)]

    def discontinuities(self) -> tuple:
        return self.lefts[1:]

    def is_bijective(self) -> bool:
        """Check that the image intervals tile the domain exactly."""
        images = sorted(self.image_intervals())
        if images[0][0] != self.start or images[-1][1] != self.end:
            return False
        return all(images[i][1] == images[i + 1][0] for i in range(len(images) - 1))


@dataclass(frozen=True, eq=False)
class Iet(_Exchange):
    """Interval exchange on ``[start, start + sum(lengths))`` with exact lengths.

    >>> T = Iet([Fraction(1, 2), Fraction(1, 2)], Permutation((2, 1)))
    >>> T(Fraction(1, 4))
    Fraction(3, 4)
    """

    lengths: tuple
    permutation: Permutation
    start: Fraction = Fraction(0)
    ambient: Fraction | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(as_rational(x) for x in self.lengths))
        object.__setattr__(self, "start", as_rational(self.start))
        if not isinstance(self.permutation, Permutation):
            object.__setattr__(self, "permutation", Permutation(tuple(self.permutation)))
        self._derive()
        if self.ambient is not None and self.total != as_rational(self.ambient):
            raise ValueError(f"lengths sum to {self.total}, expected {self.ambient}")

    def __eq__(self, other):
        return (
            isinstance(other, Iet)
            and self.lengths == other.lengths
            and self.permutation == other.permutation
            and self.start == other.start
        )

    def __hash__(self):
        return hash((self.lengths, self.permutation, self.start))

    def __repr__(self):
        ls = ", ".join(format_rational(x) for x in self.lengths)
        return f"Iet([{ls}], {self.permutation}, start={format_rational(self.start)})"

    @classmethod
    def rotation(cls, alpha) -> "Iet":
        """Rotation ``x -> x + alpha mod 1`` as a 2-interval exchange."""
        alpha = as_rational(alpha)
        if not 0 < alpha < 1:
            raise ValueError("rotation number must lie in (0, 1)")
        return cls((1 - alpha, alpha), Permutation((2, 1)))

    @classmethod
    def identity(cls, n: int = 1) -> "Iet":
        return cls((Fraction(1, n),) * n, Permutation.identity(n))

    def to_json(self) -> dict:
        return {
            "lengths": [format_rational(x) for x in self.lengths],
            "permutation": list(self.permutation.images),
            "start": format_rational(self.start),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Iet":
        return cls(
            tuple(parse_rational(s) for s in data["lengths"]),
            Permutation(tuple(data["permutation"])),
            parse_rational(data.get("start", "0/1")),
        )


@dataclass(frozen=True, eq=False)
class IntegerIet(_Exchange):
    """An exchange in integer coordinates: the rational map scaled by ``scale``.

    Point ``p`` here stands for ``p / scale`` in the rational picture.
    """

    scale: int
    lengths: tuple
    permutation: Permutation
    start: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "lengths", tuple(int(x) for x in self.lengths))
        object.__setattr__(self, "start", int(self.start))
        self._derive()

    @property
    def fits_int128(self) -> bool:
        return max(abs(self.start), abs(self.end), self.scale) <= INT128_MAX

    def to_rational(self) -> Iet:
        return Iet(
            tuple(Fraction(x, self.scale) for x in self.lengths),
            self.permutation,
            Fraction(self.start, self.scale),
        )


def iet_new(lengths: Sequence, permutation, start=0, ambient=None) -> Iet:
    """Build an exact IET; ``ambient`` (default 1 when ``start`` is 0) is the
    required total length."""
    if not isinstance(permutation, Permutation):
        permutation = Permutation(tuple(permutation))
    if ambient is None and as_rational(start) == 0:
        ambient = Fraction(1)
    return Iet(tuple(lengths), permutation, as_rational(start), ambient)


def iet_apply(T, x):
    return T(x)


def iet_apply_inverse(T, y):
    return T.inverse(y)


def orbit(T, x, n: int) -> list:
    if n < 0:
        raise ValueError("n must be non-negative")
    out = [x]
    for _ in range(n):
        x = T(x)
        out.append(x)
    return out


def rescale_to_integer(T: Iet, extra: Iterable = ()) -> IntegerIet:
    """Scale ``T`` by the least common denominator of its data (and of any
    ``extra`` points that must also land on the integer lattice)."""
    Q = lcm_of_denominators([*T.lengths, T.start, *extra])
    return IntegerIet(Q, tuple(int(x * Q) for x in T.lengths), T.permutation, int(T.start * Q))


# ----------------------------------------------------------------------------
# interval sets


def _normalize(pieces) -> tuple:
    pieces = sorted((a, b) for a, b in pieces if a != b)
    out = []
    for a, b in pieces:
        if a > b:
            raise ValueError(f"reversed interval [{a}, {b})")
        if out and a <= out[-1][1]:
            if b > out[-1][1]:
                out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return tuple(out)


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, disjoint, merged union of half-open intervals."""

    pieces: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", _normalize(self.pieces))

    @classmethod
    def interval(cls, a, b) -> "IntervalSet":
        return cls(((a, b),))

    @classmethod
    def _trusted(cls, pieces) -> "IntervalSet":
        obj = object.__new__(cls)
        object.__setattr__(obj, "pieces", tuple(pieces))
        return obj

    def __len__(self):
        return len(self.pieces)

    def __iter__(self):
        return iter(self.pieces)

    def __bool__(self):
        return bool(self.pieces)

    @property
    def measure(self):
        return sum((b - a for a, b in self.pieces), 0)

    def contains_point(self, x) -> bool:
        i = bisect.bisect_right(self.pieces, (x, x)) - 1
        for j in (i, i + 1):
            if 0 <= j < len(self.pieces) and self.pieces[j][0] <= x < self.pieces[j][1]:
                return True
        return False

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        P, R = self.pieces, other.pieces
        while i < len(P) and j < len(R):
            a = max(P[i][0], R[j][0])
            b = min(P[i][1], R[j][1])
            if a < b:
                out.append((a, b))
            if P[i][1] < R[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet._trusted(out)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.pieces + other.pieces)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        R = other.pieces
        j = 0
        for a, b in self.pieces:
            while j < len(R) and R[j][1] <= a:
                j += 1
            k = j
            cur = a
            while k < len(R) and R[k][0] < b:
                if R[k][0] > cur:
                    out.append((cur, R[k][0]))
                cur = max(cur, R[k][1])
                k += 1
            if cur < b:
                out.append((cur, b))
        return IntervalSet._trusted(out)

    def issubset(self, other: "IntervalSet") -> bool:
        return not self.difference(other)

    def scaled(self, factor) -> "IntervalSet":
        return IntervalSet._trusted([(a * factor, b * factor) for a, b in self.pieces])

    def to_integer(self, scale: int) -> "IntervalSet":
        out = []
        for a, b in self.pieces:
            A, B = as_rational(a) * scale, as_rational(b) * scale
            if A.denominator != 1 or B.denominator != 1:
                raise ValueError(f"[{a}, {b}) is not on the 1/{scale} lattice")
            out.append((int(A), int(B)))
        return IntervalSet._trusted(out)

    def to_rational(self, scale: int) -> "IntervalSet":
        return IntervalSet._trusted([(Fraction(a, scale), Fraction(b, scale)) for a, b in self.pieces])

    def to_json(self) -> list:
        return [[format_rational(a), format_rational(b)] for a, b in self.pieces]

    @classmethod
    def from_json(cls, data) -> "IntervalSet":
        return cls(tuple((parse_rational(a), parse_rational(b)) for a, b in data))


def intersects(S1: IntervalSet, S2: IntervalSet) -> bool:
    """Positive-length overlap; touching endpoints do not count."""
    P, R = S1.pieces, S2.pieces
    i = j = 0
    while i < len(P) and j < len(R):
        if P[i][1] <= R[j][0]:
            i += 1
        elif R[j][1] <= P[i][0]:
            j += 1
        else:
            return True
    return False


def step_pieces(T: _Exchange, pieces) -> list:
    """Apply ``T`` to sorted disjoint pieces; returns sorted merged pieces.

    Pieces inside one exchanged interval keep their order, so the image is
    the concatenation of per-interval runs in slot order; no sort needed.
    """
    lefts, ends, offs = T.lefts, T.ends, T.offsets
    n = len(lefts)
    runs = [[] for _ in range(n)]
    i = 0
    for a, b in pieces:
        while i < n - 1 and a >= ends[i]:
            i += 1
        while True:
            e = ends[i]
            d = offs[i]
            if b <= e:
                runs[i].append((a + d, b + d))
                break
            runs[i].append((a + d, e + d))
            a = e
            i += 1
    out = []
    for j in T.slot_order:
        for a, b in runs[j]:
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return out


def _check_inside(T: _Exchange, S: IntervalSet):
    if S and (S.pieces[0][0] < T.start or S.pieces[-1][1] > T.end):
        raise ValueError("interval set leaves the domain of the map")


def image_step(T: _Exchange, S: IntervalSet) -> IntervalSet:
    _check_inside(T, S)
    return IntervalSet._trusted(step_pieces(T, S.pieces))


@dataclass
class ImageRun:
    """Outcome of ``iterate_image``: ``hits[i]`` is the flag after step i+1."""

    final: IntervalSet
    hits: list | None
    piece_counts: list
    peak_pieces: int
    scale: int = 1


def iterate_image(T, S: IntervalSet, n: int, probe: IntervalSet | None = None,
                  max_pieces: int | None = None, max_steps: int | None = None) -> ImageRun:
    """Apply ``T`` to ``S`` n times, optionally recording overlap with ``probe``.

    Rational maps run in integer coordinates; the returned sets are converted
    back to the caller's coordinates.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if max_steps is not None and n > max_steps:
        raise BudgetExceeded(f"{n} steps requested, budget is {max_steps}", reached=0)
    scale = 1
    if isinstance(T, Iet):
        pts = [x for p in S.pieces for x in p]
        if probe is not None:
            pts += [x for p in probe.pieces for x in p]
        TI = rescale_to_integer(T, pts)
        scale = TI.scale
        S_int = S.to_integer(scale)
        probe_int = probe.to_integer(scale) if probe is not None else None
    else:
        TI, S_int, probe_int = T, S, probe
    _check_inside(TI, S_int)
    pieces = list(S_int.pieces)
    hits = [] if probe is not None else None
    counts = []
    peak = len(pieces)
    for step in range(1, n + 1):
        pieces = step_pieces(TI, pieces)
        k = len(pieces)
        counts.append(k)
        if k > peak:
            peak = k
            if max_pieces is not None and k > max_pieces:
                raise BudgetExceeded(f"piece count {k} exceeds budget {max_pieces}", reached=step)
        if hits is not None:
            hits.append(intersects(IntervalSet._trusted(pieces), probe_int))
    final = IntervalSet._trusted(pieces)
    if scale != 1:
        final = final.to_rational(scale)
    return ImageRun(final, hits, counts, peak, scale)
