"""Closed-form oracle for the joint-sequence truncation rule.

The production code shrinks the pair step by step (drop one token from the
longer segment, ties drop from the second); this derives the final kept
lengths directly, so the two routes are independent.
"""

from __future__ import annotations

import math


def kept_lengths(n_first: int, n_second: int, max_len: int) -> tuple[int, int]:
    """Final (first, second) content lengths for a [BOS a.. SEP b.. EOS] sequence."""
    budget = max_len - 3
    if n_first + n_second <= budget:
        return n_first, n_second
    first = min(n_first, max(math.ceil(budget / 2), budget - n_second))
    return first, budget - first
