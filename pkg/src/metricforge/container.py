"""Binary model container: writer, eager/mmap readers, interchange converter.

File layout (all integers little-endian):

    bytes 0..7    magic ``MFRG0001``
    bytes 8..11   uint32 header length H
    bytes 12..    header: canonical JSON, UTF-8
    ..            zero padding to the next 64-byte boundary
    ..            payload: tensor regions, each starting on a 64-byte
                  boundary relative to the payload start, zero-padded gaps

The header is ``{"manifest": {...}, "tensors": [...]}`` serialized with
sorted keys and no insignificant whitespace, so identical inputs produce
identical files. The manifest checksum is the SHA-256 hex digest of the
payload bytes only (padding included); the header is excluded so editing
metadata never invalidates cached payload hashes.
"""

from __future__ import annotations

import enum
import hashlib
import json
import mmap
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    ContainerError,
    DuplicateTensorError,
    InterchangeError,
    TensorSizeError,
    TruncatedFileError,
    UnknownTensorError,
    UnsupportedVersionError,
)
from .kinds import Kind

MAGIC = b"MFRG0001"
FORMAT_VERSION = 1
ALIGNMENT = 64

_CHECKSUM_CHUNK = 1 << 20


class Dtype(enum.Enum):
    F32 = "f32"
    F16 = "f16"

    @property
    def size(self):
        return 4 if self is Dtype.F32 else 2

    @property
    def numpy(self):
        return np.dtype("<f4") if self is Dtype.F32 else np.dtype("<f2")

    @classmethod
    def parse(cls, value) -> "Dtype":
        if isinstance(value, cls):
            return value
        for dtype in cls:
            if dtype.value == value:
                return dtype
        raise ContainerError(f"unknown dtype {value!r}")


class NormStyle(enum.Enum):
    PRE = "pre"
    POST = "post"

    @classmethod
    def parse(cls, value) -> "NormStyle":
        if isinstance(value, cls):
            return value
        for style in cls:
            if style.value == value:
                return style
        raise ContainerError(f"unknown norm_style {value!r}")


class Backing(enum.Enum):
    MMAP = "mmap"
    EAGER = "eager"


@dataclass(frozen=True)
class TensorSpec:
    name: str
    dtype: Dtype
    shape: tuple
    offset: int
    nbytes: int


@dataclass
class ModelManifest:
    """Hyperparameters and metric-kind metadata for one scoring model."""

    like: Kind
    vocab_size: int
    d_model: int
    n_heads: int
    n_layers: int
    d_ffn: int
    max_position: int
    norm_style: NormStyle = NormStyle.POST
    head_hidden: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION
    checksum: str = ""

    def __post_init__(self):
        self.like = Kind.parse(self.like)
        self.norm_style = NormStyle.parse(self.norm_style)
        self.head_hidden = [int(w) for w in self.head_hidden]
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ffn", "max_position"):
            if int(getattr(self, name)) <= 0:
                raise ContainerError(f"manifest field {name} must be positive")
        if any(w <= 0 for w in self.head_hidden):
            raise ContainerError("head_hidden widths must be positive")
        if self.d_model % self.n_heads != 0:
            raise ContainerError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    @property
    def fields_required(self):
        from .kinds import FIELDS_REQUIRED

        return FIELDS_REQUIRED[self.like]

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "like": self.like.value,
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "d_ffn": self.d_ffn,
            "max_position": self.max_position,
            "norm_style": self.norm_style.value,
            "head_hidden": list(self.head_hidden),
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                like=data["like"],
                vocab_size=data["vocab_size"],
                d_model=data["d_model"],
                n_heads=data["n_heads"],
                n_layers=data["n_layers"],
                d_ffn=data["d_ffn"],
                max_position=data["max_position"],
                norm_style=data.get("norm_style", "post"),
                head_hidden=data.get("head_hidden", []),
                format_version=data.get("format_version", FORMAT_VERSION),
                checksum=data.get("checksum", ""),
            )
        except KeyError as exc:
            raise ContainerError(f"manifest missing field {exc.args[0]!r}") from None


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def _align_up(n, boundary=ALIGNMENT):
    return (n + boundary - 1) // boundary * boundary


def write_container(manifest: ModelManifest, tensors, path) -> str:
    """Write tensors to a container file; returns the payload checksum.

    `tensors` is an ordered iterable of (name, dtype, shape, raw_bytes)
    with raw little-endian bytes. The manifest's checksum field is
    ignored on input and recomputed here.
    """
    specs = []
    chunks = []
    seen = set()
    offset = 0
    for name, dtype, shape, raw in tensors:
        if not name:
            raise ContainerError("tensor name must be non-empty")
        if name in seen:
            raise DuplicateTensorError(f"duplicate tensor name {name!r}")
        seen.add(name)
        dtype = Dtype.parse(dtype)
        shape = tuple(int(d) for d in shape)
        if any(d <= 0 for d in shape):
            raise ContainerError(f"tensor {name!r} has non-positive dimension in {shape}")
        nbytes = dtype.size
        for d in shape:
            nbytes *= d
        if len(raw) != nbytes:
            raise TensorSizeError(
                f"tensor {name!r}: got {len(raw)} bytes, dtype/shape imply {nbytes}"
            )
        aligned = _align_up(offset)
        if aligned > offset:
            chunks.append(b"\x00" * (aligned - offset))
        specs.append(TensorSpec(name, dtype, shape, aligned, nbytes))
        chunks.append(bytes(raw))
        offset = aligned + nbytes

    payload = b"".join(chunks)
    checksum = hashlib.sha256(payload).hexdigest()
    manifest_dict = manifest.to_dict()
    manifest_dict["checksum"] = checksum
    header = _canonical_json(
        {
            "manifest": manifest_dict,
            "tensors": [
                {
                    "name": s.name,
                    "dtype": s.dtype.value,
                    "shape": list(s.shape),
                    "offset": s.offset,
                    "nbytes": s.nbytes,
                }
                for s in specs
            ],
        }
    )
    preamble = len(MAGIC) + 4 + len(header)
    pad = _align_up(preamble) - preamble
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        f.write(b"\x00" * pad)
        f.write(payload)
    return checksum


class ModelContainer:
    """An opened container. Tensor views are read-only and, in MMAP mode,
    zero-copy slices of the mapped file."""

    def __init__(self, path, manifest, specs, buffer, payload_start, backing, mapped=None):
        self.path = path
        self.manifest = manifest
        self.tensors = {s.name: s for s in specs}
        self.backing = backing
        self._buffer = buffer
        self._payload_start = payload_start
        self._mmap = mapped

    def names(self):
        return list(self.tensors)

    def get_tensor(self, name) -> np.ndarray:
        if name not in self.tensors:
            raise UnknownTensorError(f"unknown tensor {name!r} in {self.path}")
        spec = self.tensors[name]
        view = np.frombuffer(
            self._buffer,
            dtype=spec.dtype.numpy,
            count=int(np.prod(spec.shape, dtype=np.int64)),
            offset=self._payload_start + spec.offset,
        ).reshape(spec.shape)
        view.flags.writeable = False
        return view

    def close(self):
        self._buffer = None
        if self._mmap is not None:
            try:
                self._mmap.close()
            except BufferError:
                # Live tensor views still pin the mapping; it is released
                # once the last view is garbage collected.
                pass
            self._mmap = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _parse_specs(header, path):
    manifest = ModelManifest.from_dict(header.get("manifest", {}))
    if manifest.format_version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format_version {manifest.format_version} not supported"
        )
    specs = []
    for entry in header.get("tensors", []):
        spec = TensorSpec(
            name=entry["name"],
            dtype=Dtype.parse(entry["dtype"]),
            shape=tuple(entry["shape"]),
            offset=int(entry["offset"]),
            nbytes=int(entry["nbytes"]),
        )
        expected = spec.dtype.size * int(np.prod(spec.shape, dtype=np.int64))
        if spec.nbytes != expected:
            raise TensorSizeError(
                f"{path}: tensor {spec.name!r} nbytes {spec.nbytes} != dtype/shape size {expected}"
            )
        if spec.offset % ALIGNMENT != 0:
            raise ContainerError(f"{path}: tensor {spec.name!r} offset not 64-byte aligned")
        specs.append(spec)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DuplicateTensorError(f"{path}: duplicate tensor names in index")
    last_end = 0
    for spec in sorted(specs, key=lambda s: s.offset):
        if spec.offset < last_end:
            raise ContainerError(f"{path}: tensor {spec.name!r} overlaps a previous region")
        last_end = spec.offset + spec.nbytes
    return manifest, specs


def _verify_checksum(buffer, payload_start, expected, path):
    digest = hashlib.sha256()
    view = memoryview(buffer)
    # Feed fixed-size chunks so an mmap-backed buffer is streamed page by
    # page instead of being materialized at once.
    try:
        for pos in range(payload_start, len(view), _CHECKSUM_CHUNK):
            digest.update(view[pos : pos + _CHECKSUM_CHUNK])
    finally:
        view.release()
    if digest.hexdigest() != expected:
        raise ChecksumMismatchError(
            f"{path}: payload checksum mismatch (expected {expected}, got {digest.hexdigest()})"
        )


def read_manifest(path) -> ModelManifest:
    """Parse just the manifest without touching the payload."""
    with open(path, "rb") as f:
        head = f.read(len(MAGIC) + 4)
        if head[: len(MAGIC)] != MAGIC:
            raise BadMagicError(f"{path}: not a model container (bad magic)")
        if len(head) < len(MAGIC) + 4:
            raise TruncatedFileError(f"{path}: truncated before header length")
        header_len = int.from_bytes(head[len(MAGIC) :], "little")
        header_blob = f.read(header_len)
    if len(header_blob) < header_len:
        raise TruncatedFileError(f"{path}: truncated inside header")
    try:
        header = json.loads(header_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable header ({exc})") from None
    manifest, _ = _parse_specs(header, path)
    return manifest


def open_container(path, mode=Backing.MMAP, validate=True) -> ModelContainer:
    """Open a container for reading.

    MMAP mode maps the file and serves zero-copy tensor views; EAGER mode
    reads the whole payload up front. Both expose byte-identical views.
    With validate=True the payload hash is checked (an mmap is streamed
    in chunks rather than loaded whole).
    """
    mode = Backing(mode)
    size = os.path.getsize(path)
    f = open(path, "rb")
    try:
        head = f.read(len(MAGIC) + 4)
        if head[: len(MAGIC)] != MAGIC:
            raise BadMagicError(f"{path}: not a model container (bad magic)")
        if len(head) < len(MAGIC) + 4:
            raise TruncatedFileError(f"{path}: truncated before header length")
        header_len = int.from_bytes(head[len(MAGIC) :], "little")
        header_blob = f.read(header_len)
        if len(header_blob) < header_len:
            raise TruncatedFileError(f"{path}: truncated inside header")
        try:
            header = json.loads(header_blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: unreadable header ({exc})") from None
        manifest, specs = _parse_specs(header, path)
        payload_start = _align_up(len(MAGIC) + 4 + header_len)
        for spec in specs:
            if payload_start + spec.offset + spec.nbytes > size:
                raise TruncatedFileError(
                    f"{path}: tensor {spec.name!r} extends past end of file"
                )

        mapped = None
        if mode is Backing.MMAP:
            mapped = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
            buffer = mapped
        else:
            f.seek(0)
            buffer = f.read()
        if validate:
            try:
                _verify_checksum(buffer, payload_start, manifest.checksum, path)
            except ChecksumMismatchError:
                if mapped is not None:
                    mapped.close()
                raise
        return ModelContainer(path, manifest, specs, buffer, payload_start, mode, mapped)
    finally:
        f.close()


def convert_interchange(directory):
    """Read an interchange directory into (manifest, tensor list).

    Layout: `manifest.json`, a `tensors.json` index of {name, dtype,
    shape} entries in container order, and one raw `<name>.bin` file per
    tensor. The result feeds write_container directly.
    """
    manifest_path = os.path.join(directory, "manifest.json")
    index_path = os.path.join(directory, "tensors.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = ModelManifest.from_dict(json.load(f))
    except FileNotFoundError:
        raise InterchangeError(f"missing file: {manifest_path}") from None
    except (json.JSONDecodeError, ContainerError) as exc:
        raise InterchangeError(f"malformed file {manifest_path}: {exc}") from None
    try:
        with open(index_path, "r", encoding="utf-8") as f:
            index = json.load(f)
    except FileNotFoundError:
        raise InterchangeError(f"missing file: {index_path}") from None
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed file {index_path}: {exc}") from None

    tensors = []
    for entry in index:
        try:
            name, dtype, shape = entry["name"], entry["dtype"], entry["shape"]
        except (TypeError, KeyError):
            raise InterchangeError(
                f"malformed file {index_path}: entry {entry!r} needs name/dtype/shape"
            ) from None
        bin_path = os.path.join(directory, name + ".bin")
        try:
            with open(bin_path, "rb") as f:
                raw = f.read()
        except FileNotFoundError:
            raise InterchangeError(f"missing file: {bin_path}") from None
        tensors.append((name, dtype, shape, raw))
    return manifest, tensors
