"""Binary checkpoint format.

Layout: 8-byte magic ``QDIFFCKP``, 8-byte little-endian header length, the
UTF-8 JSON header, then raw little-endian float32 tensors in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .encoder import EncoderConfig
from .model import QDiffModel, Variant

MAGIC = b"QDIFFCKP"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


class CheckpointError(ValueError):
    pass


def save(model, path):
    path = Path(path)
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset,
                         "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "encoder_config": model.encoder_config.to_dict(),
        "variant": model.variant.value,
        "attend_specials": model.attend_specials,
        "difficulty_labels": list(model.difficulty_labels),
        "bloom_labels": list(model.bloom_labels),
        "vocabulary": list(model.vocab.tokens),
        "frozen": sorted(model.frozen),
        "tensors": manifest,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)


def load(path):
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + _LEN.size or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a QDiff checkpoint (bad magic)")
    (hlen,) = _LEN.unpack_from(data, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if start + hlen > len(data):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version!r}, expected {FORMAT_VERSION}"
        )
    body = memoryview(data)[start + hlen:]
    params = {}
    for entry in header["tensors"]:
        end = entry["offset"] + entry["nbytes"]
        if end > len(body):
            raise CheckpointError(f"{path}: truncated tensor data ({entry['name']})")
        arr = np.frombuffer(body[entry["offset"]:end], dtype="<f4")
        params[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    return QDiffModel(
        encoder_config=EncoderConfig(**header["encoder_config"]),
        vocab=Vocabulary(tuple(header["vocabulary"])),
        difficulty_labels=tuple(header["difficulty_labels"]),
        bloom_labels=tuple(header["bloom_labels"]),
        variant=Variant(header["variant"]),
        params=params,
        attend_specials=bool(header["attend_specials"]),
        frozen=frozenset(header["frozen"]),
    )
