"""Finite unions of closed integer intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Tuple


@dataclass(frozen=True)
class IntervalSet:
    spans: Tuple[Tuple[int, int], ...] = ()

    @staticmethod
    def of(lo: int, hi: int) -> "IntervalSet":
        return IntervalSet(((lo, hi),)) if lo <= hi else EMPTY

    @staticmethod
    def points(values) -> "IntervalSet":
        out = EMPTY
        for v in sorted(set(values)):
            out = out.union(IntervalSet.of(v, v))
        return out

    @staticmethod
    def _norm(spans) -> "IntervalSet":
        spans = sorted(s for s in spans if s[0] <= s[1])
        merged = []
        for lo, hi in spans:
            if merged and lo <= merged[-1][1] + 1:
                if hi > merged[-1][1]:
                    merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        return IntervalSet(tuple(merged))

    def union(self, other: "IntervalSet") -> "IntervalSet":
        if not other.spans:
            return self
        if not self.spans:
            return other
        return IntervalSet._norm(self.spans + other.spans)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        a, b = self.spans, other.spans
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(tuple(out))

    def complement(self, universe: "IntervalSet") -> "IntervalSet":
        out = []
        for ulo, uhi in universe.spans:
            cur = ulo
            for lo, hi in self.spans:
                if hi < cur or lo > uhi:
                    continue
                if lo > cur:
                    out.append((cur, lo - 1))
                cur = max(cur, hi + 1)
            if cur <= uhi:
                out.append((cur, uhi))
        return IntervalSet(tuple(out))

    def __contains__(self, v: int) -> bool:
        return any(lo <= v <= hi for lo, hi in self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)

    def size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.spans)

    def __iter__(self) -> Iterator[int]:
        for lo, hi in self.spans:
            yield from range(lo, hi + 1)

    def nth(self, k: int) -> int:
        for lo, hi in self.spans:
            n = hi - lo + 1
            if k < n:
                return lo + k
            k -= n
        raise IndexError(k)

    def sample(self, rng) -> int:
        """Pick a span uniformly, then a value uniformly inside it.

        Span-uniform choice keeps small islands (e.g. a few existing keys
        next to a huge range) from being drowned out.
        """
        lo, hi = self.spans[rng.randrange(len(self.spans))]
        return rng.randint(lo, hi)

    def edges(self):
        for lo, hi in self.spans:
            yield lo
            yield hi

    def __repr__(self):
        return "{" + ", ".join(f"[{lo},{hi}]" for lo, hi in self.spans) + "}"


EMPTY = IntervalSet(())
