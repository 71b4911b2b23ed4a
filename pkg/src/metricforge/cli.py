"""metricforge-eval: TSV scoring CLI plus convert/inspect/bench tools.

Scores go to STDOUT (or -o), one `%.4f` line per record; everything else
goes to STDERR. Exit codes: 0 success, 2 usage errors (bad flags, unknown
model name, missing field files, line or column count mismatches), 1
runtime errors (downloads, I/O, container validation).
"""

from __future__ import annotations

import argparse
import sys
import time

from .batching import BatchConfig
from .container import Backing, convert_interchange, open_container, write_container
from .encoder import ComputeMode
from .errors import (
    ColumnCountError,
    ContainerError,
    InterchangeError,
    MetricForgeError,
    MissingFieldError,
    UnknownMetricError,
    VocabRequiredError,
)
from .evaluate import (
    AverageMode,
    Evaluator,
    EvaluatorConfig,
    apply_average_mode,
    records_from_tsv_lines,
)
from .kinds import FIELDS_REQUIRED, record_from_columns

_FIELD_FLAGS = {"S": "--src", "T": "--mt", "R": "--ref"}
_FIELD_ATTRS = {"S": "src", "T": "mt", "R": "ref"}


def _usage_error(message) -> int:
    print(f"metricforge-eval: error: {message}", file=sys.stderr)
    return 2


def _runtime_error(message) -> int:
    print(f"metricforge-eval: error: {message}", file=sys.stderr)
    return 1


def _add_batch_flags(parser):
    parser.add_argument("--mini-batch", type=int, default=128, metavar="N")
    parser.add_argument(
        "--maxi-batch", type=int, default=8, metavar="N", help="maxi-batch window factor"
    )
    parser.add_argument("--no-sort", action="store_true", help="disable length sorting")
    parser.add_argument(
        "--workers", "--cpu-threads", dest="workers", type=int, default=1, metavar="N"
    )


def _batch_config(args) -> BatchConfig:
    return BatchConfig(
        mini_batch=args.mini_batch,
        maxi_batch_factor=args.maxi_batch,
        sort_by_length=not args.no_sort,
        workers=args.workers,
    )


def _eval_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metricforge-eval",
        description="Score translations with an encoder-based metric model.",
    )
    parser.add_argument("-m", "--model", required=True, help="metric name or container path")
    parser.add_argument("-v", "--vocab", help="vocabulary path (needed with a container path)")
    parser.add_argument("-s", "--src", help="source-side text file")
    parser.add_argument("-t", "--mt", help="translation text file")
    parser.add_argument("-r", "--ref", help="reference text file")
    parser.add_argument(
        "--stdin", action="store_true", help="read TSV records from standard input"
    )
    parser.add_argument(
        "-a", "--average", choices=[m.value for m in AverageMode], default="skip"
    )
    parser.add_argument("--like", choices=["comet-qe", "comet", "bleurt"])
    parser.add_argument("--fp16", action="store_true")
    _add_batch_flags(parser)
    parser.add_argument("-o", "--out", help="write scores here instead of STDOUT")
    parser.add_argument("--eager", action="store_true", help="read the model up front (no mmap)")
    parser.add_argument("--precision", type=int, default=4, metavar="N")
    parser.add_argument("--quiet", action="store_true")
    return parser


def _build_evaluator(args) -> Evaluator:
    return Evaluator(
        EvaluatorConfig(
            model=args.model,
            vocab=args.vocab,
            like=args.like,
            compute_mode=ComputeMode.FP16 if args.fp16 else ComputeMode.FP32,
            batch=_batch_config(args),
            backing=Backing.EAGER if args.eager else Backing.MMAP,
            quiet=args.quiet,
        )
    )


def _records_from_files(args, kind):
    """Read the field files the kind requires; reject extras and length
    mismatches (first offending line number, 1-based)."""
    letters = FIELDS_REQUIRED[kind]
    for letter, attr in _FIELD_ATTRS.items():
        if getattr(args, attr) and letter not in letters:
            raise _UsageProblem(
                f"metric kind {kind.value!r} does not use {_FIELD_FLAGS[letter]}"
            )
    columns = []
    paths = []
    for letter in letters:
        path = getattr(args, _FIELD_ATTRS[letter])
        if not path:
            raise _UsageProblem(
                f"metric kind {kind.value!r} requires {_FIELD_FLAGS[letter]} (or --stdin)"
            )
        paths.append(path)
        with open(path, "r", encoding="utf-8") as f:
            columns.append(f.read().splitlines())
    counts = [len(c) for c in columns]
    if len(set(counts)) > 1:
        offending = min(counts) + 1
        detail = ", ".join(f"{p}: {n} lines" for p, n in zip(paths, counts))
        raise _UsageProblem(f"input files disagree at line {offending} ({detail})")
    return [
        record_from_columns(values, kind, index)
        for index, values in enumerate(zip(*columns))
    ]


class _UsageProblem(Exception):
    pass


def run_eval(argv) -> int:
    args = _eval_parser().parse_args(argv)
    if args.stdin and (args.src or args.mt or args.ref):
        return _usage_error("--stdin excludes --src/--mt/--ref")

    try:
        evaluator = _build_evaluator(args)
    except (UnknownMetricError, VocabRequiredError) as exc:
        return _usage_error(str(exc))
    except (MetricForgeError, OSError) as exc:
        return _runtime_error(str(exc))

    with evaluator:
        try:
            if args.stdin:
                records = records_from_tsv_lines(sys.stdin, evaluator.kind)
            else:
                records = _records_from_files(args, evaluator.kind)
        except _UsageProblem as exc:
            return _usage_error(str(exc))
        except OSError as exc:
            return _runtime_error(str(exc))

        started = time.perf_counter()
        try:
            report = evaluator.evaluate(records)
            outputs = apply_average_mode(report, args.average)
        except (ColumnCountError, MissingFieldError) as exc:
            return _usage_error(str(exc))
        except MetricForgeError as exc:
            return _runtime_error(str(exc))
        elapsed = time.perf_counter() - started

    lines = "".join(f"{value:.{args.precision}f}\n" for value in outputs)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(lines)
    else:
        sys.stdout.write(lines)
        sys.stdout.flush()
    if not args.quiet:
        print(
            f"scored {len(report.segment_scores)} records in {elapsed:.2f}s",
            file=sys.stderr,
        )
    return 0


def run_convert(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="metricforge-eval convert",
        description="Pack an interchange directory into a model container.",
    )
    parser.add_argument("directory", help="interchange directory")
    parser.add_argument("output", help="container path to write")
    args = parser.parse_args(argv)
    try:
        manifest, tensors = convert_interchange(args.directory)
        checksum = write_container(manifest, tensors, args.output)
    except (InterchangeError, ContainerError, OSError) as exc:
        return _runtime_error(str(exc))
    print(checksum)
    return 0


def run_inspect(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="metricforge-eval inspect",
        description="Print a container's manifest and tensor table.",
    )
    parser.add_argument("model", help="container path")
    args = parser.parse_args(argv)
    try:
        container = open_container(args.model, Backing.MMAP, validate=False)
    except (ContainerError, OSError) as exc:
        return _runtime_error(str(exc))
    with container:
        m = container.manifest
        print(f"format_version: {m.format_version}")
        print(f"like: {m.like.value}")
        print(f"vocab_size: {m.vocab_size}")
        print(f"d_model: {m.d_model}")
        print(f"n_heads: {m.n_heads}")
        print(f"n_layers: {m.n_layers}")
        print(f"d_ffn: {m.d_ffn}")
        print(f"max_position: {m.max_position}")
        print(f"norm_style: {m.norm_style.value}")
        print(f"head_hidden: {','.join(str(w) for w in m.head_hidden)}")
        print(f"checksum: {m.checksum}")
        print(f"tensors: {len(container.tensors)}")
        print("name\tdtype\tshape\toffset\tnbytes")
        for spec in container.tensors.values():
            shape = "x".join(str(d) for d in spec.shape)
            print(f"{spec.name}\t{spec.dtype.value}\t{shape}\t{spec.offset}\t{spec.nbytes}")
    return 0


def _read_rss_mb() -> float:
    with open("/proc/self/status", "r", encoding="ascii") as f:
        for line in f:
            if line.startswith("VmRSS:"):
                return int(line.split()[1]) / 1024.0
    return 0.0


def _synthetic_lines(kind, count):
    words = ["north", "wind", "and", "the", "sun", "were", "disputing", "which", "was", "stronger"]
    lines = []
    for i in range(count):
        text = " ".join(words[(i + j) % len(words)] for j in range(3 + i % 5))
        other = " ".join(words[(i + j + 1) % len(words)] for j in range(3 + (i + 2) % 5))
        lines.append("\t".join([text, other, text][: len(FIELDS_REQUIRED[kind])]))
    return lines


def run_bench(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="metricforge-eval bench",
        description="Measure warmup, throughput, and resident memory.",
    )
    parser.add_argument("-m", "--model", required=True)
    parser.add_argument("-v", "--vocab")
    parser.add_argument("-i", "--input", help="TSV records; synthesized when omitted")
    parser.add_argument("-n", "--records", type=int, default=1000, metavar="N")
    parser.add_argument("--repeats", type=int, default=3, metavar="N")
    parser.add_argument("--fp16", action="store_true", help="also measure the fp16 path")
    _add_batch_flags(parser)
    args = parser.parse_args(argv)

    def build(backing, mode):
        return Evaluator(
            EvaluatorConfig(
                model=args.model,
                vocab=args.vocab,
                compute_mode=mode,
                batch=_batch_config(args),
                backing=backing,
                validate=False,
                quiet=True,
            )
        )

    rows = []
    try:
        # Warmup: construction through the first scored record.
        for backing in (Backing.MMAP, Backing.EAGER):
            started = time.perf_counter()
            evaluator = build(backing, ComputeMode.FP32)
            rows.append(("warmup", backing.value, time.perf_counter() - started, "s"))
            if backing is Backing.EAGER:
                evaluator.close()
            else:
                keep = evaluator

        with keep:
            if args.input:
                with open(args.input, "r", encoding="utf-8") as f:
                    lines = f.read().splitlines()
            else:
                lines = _synthetic_lines(keep.kind, args.records)

            modes = [ComputeMode.FP32] + ([ComputeMode.FP16] if args.fp16 else [])
            for mode in modes:
                evaluator = keep if mode is ComputeMode.FP32 else build(Backing.MMAP, mode)
                timings = []
                for _ in range(args.repeats + 1):
                    started = time.perf_counter()
                    evaluator.evaluate_lines(lines)
                    timings.append(time.perf_counter() - started)
                timings = timings[1:]  # discard run
                rate = len(lines) / (sum(timings) / len(timings))
                rows.append(("throughput", mode.value, rate, "records/s"))
                if evaluator is not keep:
                    evaluator.close()
            rows.append(("memory", "rss", _read_rss_mb(), "MB"))
    except UnknownMetricError as exc:
        return _usage_error(str(exc))
    except (MetricForgeError, OSError) as exc:
        return _runtime_error(str(exc))

    print("metric\tmode\tvalue\tunit")
    for metric, mode, value, unit in rows:
        print(f"{metric}\t{mode}\t{value:.4f}\t{unit}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if argv and argv[0] == "convert":
        return run_convert(argv[1:])
    if argv and argv[0] == "inspect":
        return run_inspect(argv[1:])
    if argv and argv[0] == "bench":
        return run_bench(argv[1:])
    return run_eval(argv)


if __name__ == "__main__":
    sys.exit(main())
