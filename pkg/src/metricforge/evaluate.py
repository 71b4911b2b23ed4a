"""Streaming evaluator tying tokenizer, batcher, and encoder together.

Records are consumed window by window (mini_batch * maxi_batch_factor at
a time), scored on a worker pool, and reported in input order. Record
validation is fail-fast: the first bad record aborts the stream with its
index, rather than silently misaligning scores against inputs.
"""

from __future__ import annotations

import enum
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .batching import BatchConfig, plan_batches, restore_order
from .container import Backing, open_container
from .encoder import ComputeMode, ScoringModel
from .errors import (
    ClosedEvaluatorError,
    ColumnCountError,
    EmptyReportError,
    KindMismatchError,
    VocabRequiredError,
)
from .kinds import FIELDS_REQUIRED, EvalRecord, Kind, record_from_columns
from .registry import Registry
from .vocab import encode_fields, load_vocab

__all__ = [
    "AverageMode",
    "EvalRecord",
    "Evaluator",
    "EvaluatorConfig",
    "ScoreReport",
    "apply_average_mode",
    "records_from_tsv_lines",
]


class AverageMode(enum.Enum):
    SKIP = "skip"
    APPEND = "append"
    ONLY = "only"

    @classmethod
    def parse(cls, value) -> "AverageMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if mode.value == value:
                return mode
        raise ValueError(f"unknown average mode {value!r}")


@dataclass
class EvaluatorConfig:
    """Everything needed to build an Evaluator.

    `model` is a file path or a registry metric name. `vocab` may be None
    only when the registry entry bundles one. `max_len` is clipped to the
    model's max_position.
    """

    model: str
    vocab: Optional[str] = None
    like: Optional[str] = None
    compute_mode: ComputeMode = ComputeMode.FP32
    max_len: int = 512
    batch: BatchConfig = field(default_factory=BatchConfig)
    average_mode: AverageMode = AverageMode.SKIP
    backing: Backing = Backing.MMAP
    validate: bool = True
    quiet: bool = False

    def __post_init__(self):
        self.compute_mode = ComputeMode.parse(self.compute_mode)
        self.average_mode = AverageMode.parse(self.average_mode)
        self.backing = Backing(self.backing)
        if self.like is not None:
            self.like = Kind.parse(self.like)
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2")


@dataclass
class ScoreReport:
    segment_scores: list

    @property
    def system_score(self) -> Optional[float]:
        """Compensated-sum mean of the segment scores; None when empty,
        so an absent average can never be mistaken for a real 0.0."""
        if not self.segment_scores:
            return None
        return math.fsum(self.segment_scores) / len(self.segment_scores)


def apply_average_mode(report: ScoreReport, mode) -> list:
    mode = AverageMode.parse(mode)
    if mode is AverageMode.SKIP:
        return list(report.segment_scores)
    if report.system_score is None:
        raise EmptyReportError(f"average mode {mode.value!r} needs at least one score")
    if mode is AverageMode.ONLY:
        return [report.system_score]
    return list(report.segment_scores) + [report.system_score]


def records_from_tsv_lines(lines, kind: Kind):
    """Yield EvalRecords from TAB-separated lines in the kind's (S, T, R)
    restricted column order. Tabs inside fields are indistinguishable from
    column separators, so a wrong column count is an error naming the
    0-based line index."""
    expected = len(FIELDS_REQUIRED[kind])
    for index, line in enumerate(lines):
        line = line.rstrip("\n")
        columns = line.split("\t")
        if len(columns) != expected:
            raise ColumnCountError(index, expected, len(columns))
        yield record_from_columns(columns, kind, index)


class Evaluator:
    """Scores streams of EvalRecords against one model.

    Construction opens the model (mmap by default), loads the vocabulary,
    spins up the worker pool, and runs a one-record warmup so that
    first-score latency is paid here and not in the first evaluate call.
    Concurrent evaluate calls are serialized internally.
    """

    def __init__(self, config: EvaluatorConfig):
        self.config = config
        registry = Registry()
        resolved = registry.resolve(config.model)
        vocab_path = config.vocab or resolved.vocab
        if vocab_path is None:
            raise VocabRequiredError(
                "a vocabulary path is required when the model is given as a file path"
            )
        self.container = open_container(resolved.model, config.backing, config.validate)
        self.kind = self.container.manifest.like
        if config.like is not None and config.like is not self.kind:
            raise KindMismatchError(
                f"requested kind {config.like.value!r} but model manifest says "
                f"{self.kind.value!r}"
            )
        self.model = ScoringModel(self.container, config.compute_mode)
        self.vocab = load_vocab(vocab_path)
        self.max_len = min(config.max_len, self.container.manifest.max_position)
        self._pool = (
            ThreadPoolExecutor(max_workers=config.batch.workers)
            if config.batch.workers > 1
            else None
        )
        self._lock = threading.Lock()
        self._closed = False
        self._warmup()

    def _warmup(self):
        record = EvalRecord(source="", translation="", reference="")
        encoded = encode_fields(self.vocab, record, self.kind, self.max_len)
        self.model.score_records([encoded])

    def _score_window(self, encoded_window):
        lengths = [sum(len(seq) for seq in record) for record in encoded_window]
        plan = plan_batches(lengths, self.config.batch)
        groups = [[encoded_window[i] for i in batch] for batch in plan.batches]
        if self._pool is not None:
            results = list(self._pool.map(self.model.score_records, groups))
        else:
            results = [self.model.score_records(group) for group in groups]
        flat = [float(s) for scores in results for s in scores]
        return restore_order(flat, plan)

    def evaluate(self, records) -> ScoreReport:
        """Score an ordered stream of EvalRecords; scores come back in
        input order regardless of sorting and worker scheduling."""
        with self._lock:
            if self._closed:
                raise ClosedEvaluatorError("evaluate() called on a closed Evaluator")
            window_size = self.config.batch.window
            scores = []
            window = []
            for position, record in enumerate(records):
                record.field_values(self.kind, position)
                window.append(encode_fields(self.vocab, record, self.kind, self.max_len))
                if len(window) == window_size:
                    scores.extend(self._score_window(window))
                    window = []
            if window:
                scores.extend(self._score_window(window))
            return ScoreReport(segment_scores=scores)

    def evaluate_lines(self, lines) -> ScoreReport:
        """TSV convenience wrapper over evaluate()."""
        return self.evaluate(records_from_tsv_lines(lines, self.kind))

    def close(self):
        with self._lock:
            if self._closed:
                return
            self._closed = True
            if self._pool is not None:
                self._pool.shutdown(wait=True)
            self.container.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @classmethod
    def new(cls, **kwargs) -> "Evaluator":
        """Keyword-style constructor: model_file, vocab_file, like, quiet,
        fp16, cpu_threads, mini_batch, average, plus any EvaluatorConfig
        field. Unknown keywords are rejected by name."""
        batch_kwargs = {}
        config_kwargs = {}
        renames = {"model_file": "model", "vocab_file": "vocab"}
        for key, value in kwargs.items():
            if key == "fp16":
                config_kwargs["compute_mode"] = ComputeMode.FP16 if value else ComputeMode.FP32
            elif key == "average":
                config_kwargs["average_mode"] = AverageMode.parse(value)
            elif key in ("cpu_threads", "workers"):
                batch_kwargs["workers"] = int(value)
            elif key in ("mini_batch", "maxi_batch_factor", "sort_by_length"):
                batch_kwargs[key] = value
            elif key in renames:
                config_kwargs[renames[key]] = value
            elif key in EvaluatorConfig.__dataclass_fields__:
                config_kwargs[key] = value
            else:
                raise TypeError(f"unknown keyword argument {key!r}")
        config_kwargs["batch"] = BatchConfig(**batch_kwargs)
        return cls(EvaluatorConfig(**config_kwargs))
