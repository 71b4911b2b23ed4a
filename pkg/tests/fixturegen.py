"""Deterministic synthetic fixtures: vocabularies, tiny models, records.

Everything is seeded so repeated runs produce byte-identical files. Run as
a script to materialize a fixture set for out-of-tree consumers:

    python3 tests/fixturegen.py OUT_DIR
"""

from __future__ import annotations

import os
import sys

import numpy as np

from metricforge import ModelManifest, required_tensor_shapes, write_container
from metricforge.kinds import FIELDS_REQUIRED, Kind

WORDS = [
    "the", "north", "wind", "and", "sun", "were", "disputing", "which",
    "was", "stronger", "when", "a", "traveler", "came", "along", "wrapped",
    "in", "warm", "cloak", "they", "agreed", "that", "one", "who", "first",
    "succeeded", "making", "take", "his",
]

MARKER = "▁"


def vocab_lines() -> list:
    """64 lines: 5 specials, 29 marker-prefixed words, the bare marker,
    3 common suffixes, 26 single letters."""
    lines = ["<pad>", "<unk>", "<s>", "</s>", "<sep>"]
    lines += [MARKER + w for w in WORDS]
    lines += [MARKER, "ing", "ed", "er"]
    lines += [chr(c) for c in range(ord("a"), ord("z") + 1)]
    assert len(lines) == 64
    return lines


def write_vocab(path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(vocab_lines()) + "\n")
    return path


def tiny_manifest(kind, **overrides) -> ModelManifest:
    base = dict(
        like=kind,
        vocab_size=64,
        d_model=16,
        n_heads=2,
        n_layers=2,
        d_ffn=32,
        max_position=128,
        norm_style="post",
        head_hidden=[16],
    )
    base.update(overrides)
    return ModelManifest(**base)


def make_weights(manifest, seed) -> dict:
    """Name -> fp32 array. Norm gains sit near 1, everything else is a
    small-spread normal so scores stay in tanh's linear-ish range."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in required_tensor_shapes(manifest).items():
        if name.endswith(".g"):
            arr = 1.0 + 0.1 * rng.standard_normal(shape)
        elif name.endswith(".b") and ".norm" in name:
            arr = 0.05 * rng.standard_normal(shape)
        else:
            arr = 0.25 * rng.standard_normal(shape)
        weights[name] = arr.astype(np.float32)
    return weights


def weights_to_tensors(weights, dtype="f32"):
    out = []
    for name, arr in weights.items():
        cast = arr.astype(np.float16) if dtype == "f16" else arr.astype(np.float32)
        out.append((name, dtype, cast.shape, cast.tobytes()))
    return out


def write_tiny_model(path, kind, seed=1234, dtype="f32", **overrides) -> str:
    manifest = tiny_manifest(kind, **overrides)
    tensors = weights_to_tensors(make_weights(manifest, seed), dtype)
    write_container(manifest, tensors, path)
    return str(path)


def write_interchange(directory, kind, seed=1234, **overrides):
    """Interchange layout: manifest.json + tensors.json + <name>.bin."""
    import json

    os.makedirs(directory, exist_ok=True)
    manifest = tiny_manifest(kind, **overrides)
    weights = make_weights(manifest, seed)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
    index = []
    for name, arr in weights.items():
        index.append({"name": name, "dtype": "f32", "shape": list(arr.shape)})
        with open(os.path.join(directory, name + ".bin"), "wb") as f:
            f.write(arr.astype(np.float32).tobytes())
    with open(os.path.join(directory, "tensors.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2)
    return directory


def write_big_model(path, mebibytes=200) -> str:
    """A container dominated by one huge zero embedding table; loading it
    eagerly must read every byte while mmap touches almost none."""
    d_model = 16
    rows = mebibytes * (1 << 20) // (4 * d_model)
    manifest = ModelManifest(
        like=Kind.COMET_QE,
        vocab_size=rows,
        d_model=d_model,
        n_heads=2,
        n_layers=1,
        d_ffn=16,
        max_position=64,
        head_hidden=[],
    )
    weights = make_weights(manifest, seed=99)
    weights["emb.tok"] = np.zeros((rows, d_model), dtype=np.float32)
    write_container(manifest, weights_to_tensors(weights), path)
    return str(path)


def random_texts(rng, count):
    texts = []
    for _ in range(count):
        n = int(rng.integers(1, 12))
        words = [WORDS[int(rng.integers(0, len(WORDS)))] for _ in range(n)]
        if rng.random() < 0.15:
            words.insert(int(rng.integers(0, n)), "Zq!7")  # forces UNK fallback
        texts.append(" ".join(words))
    return texts


def random_tsv_lines(kind, count, seed=0) -> list:
    rng = np.random.default_rng(seed)
    kind = Kind.parse(kind)
    columns = [random_texts(rng, count) for _ in FIELDS_REQUIRED[kind]]
    return ["\t".join(values) for values in zip(*columns)]


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_vocab(os.path.join(out_dir, "vocab.txt"))
    for kind in Kind:
        name = kind.value.replace("-", "_")
        write_tiny_model(os.path.join(out_dir, f"{name}.mfrg"), kind)
        lines = random_tsv_lines(kind, 20, seed=42)
        with open(os.path.join(out_dir, f"{name}_sample.tsv"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    print(f"fixtures written to {out_dir}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print("usage: python3 tests/fixturegen.py OUT_DIR", file=sys.stderr)
        sys.exit(2)
    main(sys.argv[1])
