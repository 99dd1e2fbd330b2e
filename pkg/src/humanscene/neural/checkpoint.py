"""Binary checkpoint format.

Layout: 8-byte magic, u32 format version, u32 header length, UTF-8 JSON
header, then the parameter payload and the EMA payload as flat little-endian
float32, both in the header's parameter order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HSCKPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, header: dict, params: dict, ema: dict | None = None) -> None:
    names = sorted(params)
    header = dict(header)
    header["params"] = [[k, list(params[k].shape)] for k in names]
    header["has_ema"] = ema is not None
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(head)))
        fh.write(head)
        for payload in (params, ema) if ema is not None else (params,):
            for k in names:
                fh.write(np.ascontiguousarray(payload[k], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict, dict | None]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    offset = 16 + hlen

    def read_block():
        nonlocal offset
        out = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            nbytes = 4 * count
            if offset + nbytes > len(data):
                raise CheckpointError(f"{path}: truncated payload at {name}")
            out[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
            offset += nbytes
        return out

    params = read_block()
    ema = read_block() if header.get("has_ema") else None
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return header, params, ema


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
