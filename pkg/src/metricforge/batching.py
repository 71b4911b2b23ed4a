"""Deterministic grouping of records into padded mini-batches.

Records are windowed into maxi-batches of `mini_batch * maxi_batch_factor`
records. Sorting, when enabled, happens only within a window so streams
can be scored with bounded memory. The plan carries the permutation needed
to put scores back into input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import PAD_ID


@dataclass
class BatchConfig:
    mini_batch: int = 128
    maxi_batch_factor: int = 8
    sort_by_length: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.mini_batch < 1:
            raise ValueError("mini_batch must be positive")
        if self.maxi_batch_factor < 1:
            raise ValueError("maxi_batch_factor must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @property
    def window(self):
        return self.mini_batch * self.maxi_batch_factor


@dataclass
class BatchPlan:
    """batches hold original record indices; order is their concatenation,
    i.e. order[scoring_position] == original_index."""

    batches: list
    order: list = field(default_factory=list)

    def __post_init__(self):
        if not self.order:
            self.order = [i for batch in self.batches for i in batch]


@dataclass
class PaddedBatch:
    """ids is [batch, max_seq] PAD-filled; mask is 1 exactly on real
    tokens, and every row is a block of 1s followed by 0s."""

    ids: np.ndarray
    mask: np.ndarray
    segment_of: str = ""


def plan_batches(lengths, config: BatchConfig) -> BatchPlan:
    indices = list(range(len(lengths)))
    ordered = []
    for start in range(0, len(indices), config.window):
        window = indices[start : start + config.window]
        if config.sort_by_length:
            window = sorted(window, key=lambda i: (-lengths[i], i))
        ordered.extend(window)
    batches = [
        ordered[start : start + config.mini_batch]
        for start in range(0, len(ordered), config.mini_batch)
    ]
    return BatchPlan(batches=batches, order=ordered)


def pad_batch(sequences, segment_of="", limit=None) -> PaddedBatch:
    """Pad id sequences to the longest in the batch."""
    if not sequences:
        raise ValueError("cannot pad an empty batch")
    widths = [len(s) for s in sequences]
    if limit is not None:
        for w in widths:
            if w > limit:
                raise ValueError(f"sequence length {w} exceeds limit {limit}")
    max_seq = max(widths)
    ids = np.full((len(sequences), max_seq), PAD_ID, dtype=np.int32)
    mask = np.zeros((len(sequences), max_seq), dtype=bool)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
        mask[row, : len(seq)] = True
    return PaddedBatch(ids=ids, mask=mask, segment_of=segment_of)


def restore_order(scores, plan: BatchPlan):
    """Scores in scoring order -> scores in original input order."""
    if len(scores) != len(plan.order):
        raise ValueError(f"got {len(scores)} scores for {len(plan.order)} planned records")
    out = [None] * len(scores)
    for position, original in enumerate(plan.order):
        out[original] = scores[position]
    return out
