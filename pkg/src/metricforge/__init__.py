"""Fast evaluation engine for encoder-based MT metrics."""

from .batching import BatchConfig, BatchPlan, PaddedBatch, pad_batch, plan_batches, restore_order
from .container import (
    Backing,
    Dtype,
    ModelContainer,
    ModelManifest,
    NormStyle,
    TensorSpec,
    convert_interchange,
    open_container,
    read_manifest,
    write_container,
)
from .encoder import ComputeMode, ScoringModel, required_tensor_shapes
from .evaluate import (
    AverageMode,
    EvalRecord,
    Evaluator,
    EvaluatorConfig,
    ScoreReport,
    apply_average_mode,
    records_from_tsv_lines,
)
from .kinds import FIELDS_REQUIRED, Kind
from .registry import BUILTIN_METRICS, Registry, RegistryEntry
from .vocab import TokenSequence, Vocabulary, encode_fields, load_vocab

__version__ = "0.1.0"

__all__ = [
    "AverageMode",
    "BUILTIN_METRICS",
    "Backing",
    "BatchConfig",
    "BatchPlan",
    "ComputeMode",
    "Dtype",
    "EvalRecord",
    "Evaluator",
    "EvaluatorConfig",
    "FIELDS_REQUIRED",
    "Kind",
    "ModelContainer",
    "ModelManifest",
    "NormStyle",
    "PaddedBatch",
    "Registry",
    "RegistryEntry",
    "ScoreReport",
    "ScoringModel",
    "TensorSpec",
    "TokenSequence",
    "Vocabulary",
    "apply_average_mode",
    "convert_interchange",
    "encode_fields",
    "load_vocab",
    "open_container",
    "pad_batch",
    "plan_batches",
    "read_manifest",
    "records_from_tsv_lines",
    "required_tensor_shapes",
    "restore_order",
    "write_container",
    "__version__",
]
