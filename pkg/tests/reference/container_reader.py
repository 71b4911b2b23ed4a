"""Independent byte-level re-reader for the model container format.

Deliberately shares no code with the package: it re-derives everything
from the on-disk layout (magic, little-endian header length, canonical
JSON header, 64-byte aligned payload) so round-trip tests have a second
opinion on what the writer produced.
"""

from __future__ import annotations

import hashlib
import json

MAGIC = b"MFRG0001"
ALIGN = 64

_DTYPE_SIZE = {"f32": 4, "f16": 2}


def read_raw(path):
    """Parse a container file into (manifest_dict, {name: raw_bytes}, payload_ok)."""
    blob = open(path, "rb").read()
    if blob[:8] != MAGIC:
        raise ValueError("bad magic")
    header_len = int.from_bytes(blob[8:12], "little")
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    payload_start = 12 + header_len
    if payload_start % ALIGN:
        payload_start += ALIGN - payload_start % ALIGN
    payload = blob[payload_start:]

    tensors = {}
    for entry in header["tensors"]:
        size = _DTYPE_SIZE[entry["dtype"]]
        for dim in entry["shape"]:
            size *= dim
        assert size == entry["nbytes"], "index nbytes disagrees with dtype*shape"
        assert entry["offset"] % ALIGN == 0, "unaligned tensor offset"
        tensors[entry["name"]] = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]

    digest = hashlib.sha256(payload).hexdigest()
    payload_ok = digest == header["manifest"]["checksum"]
    return header["manifest"], tensors, payload_ok
