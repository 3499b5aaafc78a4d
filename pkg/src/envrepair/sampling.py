"""Deterministic equal-distance selection over an ordered version list."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .errors import VersionsExhausted


def van_der_corput(k: int) -> Fraction:
    """k-th point of the base-2 van der Corput sequence, starting at 1/2.

    0 -> 1/2, 1 -> 1/4, 2 -> 3/4, 3 -> 1/8, 4 -> 5/8, ...
    """
    n = k + 1
    result = Fraction(0)
    denom = 1
    while n:
        denom *= 2
        n, bit = divmod(n, 2)
        result += Fraction(bit, denom)
    return result


def equal_distance_pick(versions: Sequence[str], previous: Sequence[str], module: str = "") -> str:
    """Pick the next version so successive picks spread evenly over the list.

    The k-th pick (k = number of catalog versions already tried) lands at
    fraction ``van_der_corput(k)`` of the versions not tried yet.
    """
    tried = set(previous)
    remaining = [v for v in versions if v not in tried]
    if not remaining:
        raise VersionsExhausted(module)
    k = sum(1 for v in set(versions) if v in tried)
    index = int(len(remaining) * van_der_corput(k))
    return remaining[min(index, len(remaining) - 1)]
