"""Transformer encoder forward pass, pooling, and regression head.

Fixed numerics, chosen once so independent implementations agree bit for
bit on what to compute: GELU is the tanh approximation, layer norm uses
eps 1e-5, attention scales by 1/sqrt(d_model/n_heads), pooling takes the
first (BOS) position. FP16 mode keeps weights and activations in binary16
but accumulates matmuls, softmax, and norm statistics in fp32.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .batching import PaddedBatch, pad_batch
from .container import ModelContainer, NormStyle
from .errors import ContainerError
from .kinds import Kind


class ComputeMode(enum.Enum):
    FP32 = "fp32"
    FP16 = "fp16"

    @classmethod
    def parse(cls, value) -> "ComputeMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if mode.value == value:
                return mode
        raise ValueError(f"unknown compute mode {value!r}")


# Per-kind feature width (multiple of d_model) and the logical segments
# scored per record, in field order.
FEATURE_MULTIPLIER = {Kind.COMET_QE: 4, Kind.COMET: 6, Kind.BLEURT: 1}
SEGMENT_ROLES = {
    Kind.COMET_QE: ("src", "mt"),
    Kind.COMET: ("src", "mt", "ref"),
    Kind.BLEURT: ("joint",),
}


def gelu(x):
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale
    and shift. The eps guard makes the all-zero row map to the bias."""
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gain + bias


def masked_softmax(logits, key_mask):
    """Softmax over the last axis with masked keys forced to -inf first,
    so they get exactly zero weight."""
    masked = np.where(key_mask, logits, -np.inf)
    peak = masked.max(axis=-1, keepdims=True)
    exps = np.exp(masked - peak)
    return exps / exps.sum(axis=-1, keepdims=True)


def required_tensor_shapes(manifest) -> dict:
    """Tensor name -> shape contract implied by a manifest."""
    d, ffn = manifest.d_model, manifest.d_ffn
    shapes = {
        "emb.tok": (manifest.vocab_size, d),
        "emb.pos": (manifest.max_position, d),
    }
    for i in range(manifest.n_layers):
        for proj in ("q", "k", "v", "o"):
            shapes[f"layer.{i}.att.{proj}.w"] = (d, d)
            shapes[f"layer.{i}.att.{proj}.b"] = (d,)
        for norm in ("norm1", "norm2"):
            shapes[f"layer.{i}.{norm}.g"] = (d,)
            shapes[f"layer.{i}.{norm}.b"] = (d,)
        shapes[f"layer.{i}.ffn.w1"] = (d, ffn)
        shapes[f"layer.{i}.ffn.b1"] = (ffn,)
        shapes[f"layer.{i}.ffn.w2"] = (ffn, d)
        shapes[f"layer.{i}.ffn.b2"] = (d,)
    widths = [FEATURE_MULTIPLIER[manifest.like] * d] + list(manifest.head_hidden) + [1]
    for j in range(len(widths) - 1):
        shapes[f"head.{j}.w"] = (widths[j], widths[j + 1])
        shapes[f"head.{j}.b"] = (widths[j + 1],)
    return shapes


class ScoringModel:
    """A container bound to a compute mode, ready to score batches.

    Weights already stored in the compute dtype are used as zero-copy
    views; otherwise they are converted once here (round-to-nearest-even
    for fp32 -> fp16).
    """

    def __init__(self, container: ModelContainer, compute_mode=ComputeMode.FP32):
        self.manifest = container.manifest
        self.mode = ComputeMode.parse(compute_mode)
        self._store = np.float16 if self.mode is ComputeMode.FP16 else np.float32
        self.w = {}
        for name, shape in required_tensor_shapes(self.manifest).items():
            if name not in container.tensors:
                raise ContainerError(f"{container.path}: missing tensor {name!r}")
            tensor = container.get_tensor(name)
            if tensor.shape != shape:
                raise ContainerError(
                    f"{container.path}: tensor {name!r} has shape {tensor.shape}, "
                    f"manifest implies {shape}"
                )
            self.w[name] = tensor if tensor.dtype == self._store else tensor.astype(self._store)
        self._scale = 1.0 / math.sqrt(self.manifest.d_model / self.manifest.n_heads)
        self._n_head_stages = len(self.manifest.head_hidden) + 1

    def _mm(self, a, b):
        # fp32 accumulation; result lands back in the storage dtype.
        out = a.astype(np.float32, copy=False) @ b.astype(np.float32, copy=False)
        return out.astype(self._store, copy=False)

    def _affine(self, x, prefix):
        return self._mm(x, self.w[f"{prefix}.w"]) + self.w[f"{prefix}.b"]

    def _norm(self, x, gain, bias):
        out = layer_norm(x.astype(np.float32, copy=False), gain.astype(np.float32), bias.astype(np.float32))
        return out.astype(self._store, copy=False)

    def _attention(self, x, key_mask, layer):
        pre = f"layer.{layer}.att"
        B, L, d = x.shape
        heads = self.manifest.n_heads
        d_head = d // heads

        def split(t):
            return t.reshape(B, L, heads, d_head).transpose(0, 2, 1, 3).astype(np.float32)

        q = split(self._affine(x, f"{pre}.q"))
        k = split(self._affine(x, f"{pre}.k"))
        v = split(self._affine(x, f"{pre}.v"))
        logits = (q @ k.transpose(0, 1, 3, 2)) * self._scale
        weights = masked_softmax(logits, key_mask[:, None, None, :])
        ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, L, d)
        return self._affine(ctx.astype(self._store, copy=False), f"{pre}.o")

    def _ffn(self, x, layer):
        hidden = self._mm(x, self.w[f"layer.{layer}.ffn.w1"]) + self.w[f"layer.{layer}.ffn.b1"]
        hidden = gelu(hidden.astype(np.float32)).astype(self._store, copy=False)
        return self._mm(hidden, self.w[f"layer.{layer}.ffn.w2"]) + self.w[f"layer.{layer}.ffn.b2"]

    def forward(self, batch: PaddedBatch) -> np.ndarray:
        """Encoder states [batch, max_seq, d_model] in the storage dtype.
        PAD keys never receive attention weight; PAD query rows produce
        values the caller is expected to ignore."""
        ids, mask = batch.ids, batch.mask
        m = self.manifest
        if ids.shape[1] > m.max_position:
            raise ValueError(
                f"sequence length {ids.shape[1]} exceeds max_position {m.max_position}"
            )
        if ids.min() < 0 or ids.max() >= m.vocab_size:
            raise ValueError(f"token id out of range for vocab_size {m.vocab_size}")
        x = (self.w["emb.tok"][ids] + self.w["emb.pos"][: ids.shape[1]]).astype(
            self._store, copy=False
        )
        pre_norm = m.norm_style is NormStyle.PRE
        for i in range(m.n_layers):
            g1, b1 = self.w[f"layer.{i}.norm1.g"], self.w[f"layer.{i}.norm1.b"]
            g2, b2 = self.w[f"layer.{i}.norm2.g"], self.w[f"layer.{i}.norm2.b"]
            if pre_norm:
                x = x + self._attention(self._norm(x, g1, b1), mask, i)
                x = x + self._ffn(self._norm(x, g2, b2), i)
            else:
                x = self._norm(x + self._attention(x, mask, i), g1, b1)
                x = self._norm(x + self._ffn(x, i), g2, b2)
        return x

    def pool(self, states, mask) -> np.ndarray:
        """First-token (BOS) sentence embeddings, [batch, d_model]."""
        if not mask[:, 0].all():
            raise ValueError("cannot pool a row with no tokens")
        return states[:, 0, :]

    def encode_pooled(self, batch: PaddedBatch) -> np.ndarray:
        return self.pool(self.forward(batch), batch.mask)

    def head(self, features) -> np.ndarray:
        x = features.astype(self._store, copy=False)
        for j in range(self._n_head_stages):
            x = self._mm(x, self.w[f"head.{j}.w"]) + self.w[f"head.{j}.b"]
            if j < self._n_head_stages - 1:
                x = np.tanh(x.astype(np.float32)).astype(self._store, copy=False)
        return x[:, 0].astype(np.float32)

    def features(self, pooled) -> np.ndarray:
        """Per-kind feature vectors from pooled segment embeddings given
        in field order."""
        kind = self.manifest.like
        pooled = [p.astype(np.float32) for p in pooled]
        if kind is Kind.COMET_QE:
            s, t = pooled
            parts = [t, s, t * s, np.abs(t - s)]
        elif kind is Kind.COMET:
            s, t, r = pooled
            parts = [t, r, t * s, t * r, np.abs(t - s), np.abs(t - r)]
        else:
            (joint,) = pooled
            parts = [joint]
        return np.concatenate(parts, axis=1)

    def score_records(self, encoded_records) -> np.ndarray:
        """Scores for a mini-batch. `encoded_records` holds, per record,
        the TokenSequence list from encode_fields for this model's kind."""
        roles = SEGMENT_ROLES[self.manifest.like]
        pooled = []
        for seg_index, role in enumerate(roles):
            batch = pad_batch(
                [record[seg_index].ids for record in encoded_records],
                segment_of=role,
                limit=self.manifest.max_position,
            )
            pooled.append(self.encode_pooled(batch))
        return self.head(self.features(pooled))
