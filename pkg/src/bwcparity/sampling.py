"""Reproducible exact sampling: derived child seeds and exact rational
distribution sampling over a 64-bit draw with rejection.

A draw k of 64 bits stands for the dyadic interval [k, k+1) / 2^64.  An
outcome is accepted only when that whole interval lies inside the outcome's
cumulative cell, so acceptance regions are exact; straddling draws are
rejected and redrawn.  Dyadic distributions never reject.
"""

from __future__ import annotations

import hashlib
import random
from bisect import bisect_right
from fractions import Fraction

_SCALE = 1 << 64


def child_seed(seed: int, index) -> int:
    """Stable derived seed for run/stream ``index``."""
    h = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(h[:8], "big")


class Sampler:
    """Precompiled sampler for one fixed rational distribution."""

    __slots__ = ("items", "_mode", "_cuts", "_bounds")

    def __init__(self, dist: dict):
        items = sorted(dist.items())
        total = sum(q for _x, q in items)
        if total != 1:
            raise ValueError(f"distribution sums to {total}")
        self.items = [x for x, _q in items]
        probs = [Fraction(q) for _x, q in items]
        if len(items) == 1:
            self._mode = "const"
            self._cuts = None
            self._bounds = None
            return
        cum = []
        acc = Fraction(0)
        for q in probs:
            acc += q
            cum.append(acc)
        if all(_SCALE % c.denominator == 0 for c in cum):
            self._mode = "dyadic"
            self._cuts = [c.numerator * (_SCALE // c.denominator) for c in cum]
            self._bounds = None
        else:
            self._mode = "general"
            self._cuts = None
            self._bounds = [(c.numerator, c.denominator) for c in cum]

    def sample(self, rng: random.Random):
        if self._mode == "const":
            return self.items[0]
        if self._mode == "dyadic":
            k = rng.getrandbits(64)
            return self.items[bisect_right(self._cuts, k)]
        while True:
            k = rng.getrandbits(64)
            lo_num, lo_den = 0, 1
            for item, (num, den) in zip(self.items, self._bounds):
                # accept iff lo <= k/2^64 and (k+1)/2^64 <= cut
                if lo_num * _SCALE <= k * lo_den and (k + 1) * den <= num * _SCALE:
                    return item
                lo_num, lo_den = num, den


def sample_once(dist: dict, rng: random.Random):
    return Sampler(dist).sample(rng)
