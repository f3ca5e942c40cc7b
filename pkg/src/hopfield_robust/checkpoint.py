"""Binary checkpoint format.

Layout::

    b"HRCKPT\\0\\n"                  8-byte magic
    uint32 LE                       header length in bytes
    header                          UTF-8 JSON, sorted keys: version, kind, seed,
                                    config, entries [{name, shape}]
    payload                         for each entry in order: little-endian float32,
                                    4 * prod(shape) bytes

Files are byte-deterministic for a given (kind, seed, config, parameters).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError

MAGIC = b"HRCKPT\x00\n"
VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    params: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    seed: int = 0
    version: int = VERSION


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in ckpt.params.items()]
    header = json.dumps(
        {"version": ckpt.version, "kind": ckpt.kind, "seed": int(ckpt.seed),
         "config": ckpt.config, "entries": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    payload = b"".join(np.asarray(v, dtype="<f4").tobytes() for v in ckpt.params.values())
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise LengthError("checkpoint header truncated")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
        entries = [(e["name"], tuple(int(d) for d in e["shape"])) for e in header["entries"]]
        kind, version = header["kind"], int(header["version"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint header unreadable: {exc}") from None
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    offset = 12 + hlen
    need = sum(4 * int(np.prod(s)) for _, s in entries)
    if len(data) - offset != need:
        raise LengthError(f"checkpoint payload has {len(data) - offset} bytes, entries need {need}")
    params = {}
    for name, shape in entries:
        n = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 4 * n
    return Checkpoint(kind, params, header.get("config", {}), int(header.get("seed", 0)), version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
