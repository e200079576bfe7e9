"""Canonical subset enumeration: by size, then lexicographic over position."""

from itertools import combinations
from typing import Iterator, Optional, Sequence


def canonical_subsets(items: Sequence, max_size: Optional[int] = None, min_size: int = 0) -> Iterator[tuple]:
    """Yield tuples of ``items`` ordered by size, then lexicographically by position.

    >>> list(canonical_subsets("ab"))
    [(), ('a',), ('b',), ('a', 'b')]
    """
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(min_size, top + 1):
        yield from combinations(items, k)


def subset_count(n: int, max_size: Optional[int] = None) -> int:
    from math import comb

    top = n if max_size is None else min(max_size, n)
    return sum(comb(n, k) for k in range(top + 1))
