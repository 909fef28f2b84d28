"""Finite unions of half-open rational intervals inside [0,1)."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .rationals import fmt, parse_rational

ZERO, ONE = Fraction(0), Fraction(1)


@dataclass(frozen=True)
class IntervalUnion:
    parts: tuple = ()  # sorted disjoint non-adjacent (a, b) pairs

    @staticmethod
    def of(pieces: Iterable) -> "IntervalUnion":
        ivs = sorted((Fraction(a), Fraction(b)) for a, b in pieces)
        out: list = []
        for a, b in ivs:
            a, b = max(a, ZERO), min(b, ONE)
            if a >= b:
                continue
            if out and a <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], b))
            else:
                out.append((a, b))
        return IntervalUnion(tuple(out))

    @staticmethod
    def full() -> "IntervalUnion":
        return IntervalUnion(((ZERO, ONE),))

    @staticmethod
    def empty() -> "IntervalUnion":
        return IntervalUnion(())

    @staticmethod
    def parse(text: str) -> "IntervalUnion":
        """Read "[a,b)+[c,d)"; "{}" or "" is the empty set."""
        text = text.strip()
        if text in ("", "{}"):
            return IntervalUnion.empty()
        pieces = []
        for chunk in text.split("+"):
            chunk = chunk.strip()
            if not (chunk.startswith("[") and chunk.endswith(")")):
                raise ValueError(f"bad interval {chunk!r}")
            a, b = chunk[1:-1].split(",")
            pieces.append((parse_rational(a), parse_rational(b)))
        return IntervalUnion.of(pieces)

    def __str__(self):
        if not self.parts:
            return "{}"
        return "+".join(f"[{fmt(a)},{fmt(b)})" for a, b in self.parts)

    def measure(self) -> Fraction:
        return sum((b - a for a, b in self.parts), ZERO)

    def contains(self, x) -> bool:
        return any(a <= x < b for a, b in self.parts)

    def is_empty(self) -> bool:
        return not self.parts

    def is_full(self) -> bool:
        return self.parts == ((ZERO, ONE),)

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion.of(self.parts + other.parts)

    def complement(self) -> "IntervalUnion":
        out, cur = [], ZERO
        for a, b in self.parts:
            if a > cur:
                out.append((cur, a))
            cur = b
        if cur < ONE:
            out.append((cur, ONE))
        return IntervalUnion(tuple(out))

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        out = []
        for a, b in self.parts:
            for c, d in other.parts:
                lo, hi = max(a, c), min(b, d)
                if lo < hi:
                    out.append((lo, hi))
        return IntervalUnion.of(out)

    def minus(self, other: "IntervalUnion") -> "IntervalUnion":
        return self.intersect(other.complement())

    def subset_of(self, other: "IntervalUnion") -> bool:
        return self.minus(other).is_empty()

    def endpoints(self) -> list:
        return sorted({x for ab in self.parts for x in ab})


def carve_interval_subset(X: IntervalUnion, A: Iterable, r) -> IntervalUnion:
    """Y with A inside Y inside X (strictly) and measure(Y) = r.

    Each point of A gets a small interval to its right (inside X); the rest
    of the mass is then taken from the left end of X.
    """
    r = Fraction(r)
    A = sorted(set(Fraction(a) for a in A))
    total = X.measure()
    if not (ZERO < r < total):
        raise ValueError("r must lie strictly between 0 and measure(X)")
    for a in A:
        if not X.contains(a):
            raise ValueError(f"point {fmt(a)} is not in X")
    # each point gets [a, a+delta) inside the X-part containing it
    budget = r / 2 if A else ZERO
    delta = budget / len(A) if A else ZERO
    pieces = []
    for a in A:
        end = next(b for lo, b in X.parts if lo <= a < b)
        nxt = min([p for p in A if p > a] + [end])
        pieces.append((a, min(a + delta, nxt)))
    Y = IntervalUnion.of(pieces)
    need = r - Y.measure()
    rest = X.minus(Y)
    fill = []
    for a, b in rest.parts:
        if need <= 0:
            break
        take = min(b - a, need)
        fill.append((a, a + take))
        need -= take
    Y = Y.union(IntervalUnion.of(fill))
    assert Y.measure() == r and Y.subset_of(X)
    return Y
