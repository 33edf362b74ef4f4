"""DVCK checkpoint format.

Layout (little endian)::

    b"DVCK" | version: u8 | count: u32 |
    count x [name_len: u32 | name: utf-8 | rank: u32 | dims: rank x u32 | payload: f32...]

Every entry of the module state dict is stored, batch-norm running
statistics included; integer counters are stored as float32.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from ..core import BadMagic, TruncatedFile

MAGIC = b"DVCK"
VERSION = 1


def encode_state(state: dict) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(state))]
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode_state(data: bytes) -> "OrderedDict[str, np.ndarray]":
    if data[:4] != MAGIC:
        raise BadMagic("not a DVCK checkpoint")
    try:
        version, count = struct.unpack_from("<BI", data, 4)
        if version != VERSION:
            raise BadMagic(f"unsupported checkpoint version {version}")
        pos = 9
        out = OrderedDict()
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 4 * size > len(data):
                raise TruncatedFile("checkpoint payload truncated")
            out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error:
        raise TruncatedFile("checkpoint header truncated") from None
    return out


def save_checkpoint(module: torch.nn.Module, path) -> None:
    Path(path).write_bytes(encode_state(module.state_dict()))


def load_checkpoint(module: torch.nn.Module, path) -> None:
    arrays = decode_state(Path(path).read_bytes())
    current = module.state_dict()
    state = {}
    for name, ref in current.items():
        if name not in arrays:
            raise KeyError(f"checkpoint lacks {name}")
        state[name] = torch.as_tensor(arrays[name]).to(ref.dtype).reshape(ref.shape)
    module.load_state_dict(state)
