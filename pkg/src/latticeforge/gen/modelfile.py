"""Binary model file.

Layout::

    b"LFMODEL\\n"                     8-byte magic
    uint64 LE                         header length in bytes
    header                            UTF-8 JSON, keys sorted
    tensor data                       float64 LE, in header order
    32 bytes                          SHA-256 of everything above

The header holds the format version, generator config, noise schedule,
property normalization and the tensor manifest (name, shape).
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .model import DTYPE, GenConfig, param_shapes
from .schedule import NoiseSchedule
from .train import ModelParams

MAGIC = b"LFMODEL\n"
FORMAT_VERSION = 1


class ModelFileError(Exception):
    pass


class CorruptFileError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class ShapeMismatchError(ModelFileError):
    pass


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def to_bytes(model: ModelParams) -> bytes:
    names = list(model.params)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.as_dict(),
        "schedule": model.schedule.as_dict(),
        "prop_mean": _floats(model.prop_mean),
        "prop_std": _floats(model.prop_std),
        "ref_props": [_floats(r) for r in np.asarray(model.ref_props).reshape(-1, 9)],
        "ref_counts": [int(c) for c in model.ref_counts],
        "tensors": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(model.params[n].detach().numpy().astype("<f8").tobytes() for n in names)
    blob = MAGIC + struct.pack("<Q", len(head)) + head + body
    return blob + hashlib.sha256(blob).digest()


def save_model(model: ModelParams, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def from_bytes(data: bytes) -> ModelParams:
    if len(data) < len(MAGIC) + 8 + 32 or data[: len(MAGIC)] != MAGIC:
        raise CorruptFileError("corrupt file: bad magic or truncated")
    blob, digest = data[:-32], data[-32:]
    if hashlib.sha256(blob).digest() != digest:
        raise CorruptFileError("corrupt file: checksum mismatch (truncated or modified)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16 : 16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"corrupt file: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"version mismatch: file has {header.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    cfg_dict = dict(header["config"])
    cfg_dict["scale_range"] = tuple(cfg_dict["scale_range"])
    cfg = GenConfig(**cfg_dict)
    expected = param_shapes(cfg)
    listed = OrderedDict((t["name"], tuple(t["shape"])) for t in header["tensors"])
    if list(listed) != list(expected) or any(listed[k] != expected[k] for k in expected):
        bad = [k for k in set(listed) | set(expected) if listed.get(k) != expected.get(k)]
        raise ShapeMismatchError(f"shape mismatch for tensors: {sorted(bad)[:5]}")
    offset = 16 + hlen
    need = sum(int(np.prod(s)) for s in listed.values()) * 8
    if len(blob) - offset != need:
        raise CorruptFileError(f"corrupt file: expected {need} tensor bytes, found {len(blob) - offset}")
    params = OrderedDict()
    for name, shape in listed.items():
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        params[name] = torch.tensor(arr.astype(np.float64), dtype=DTYPE)
        offset += count * 8
    return ModelParams(
        params,
        cfg,
        NoiseSchedule(**header["schedule"]),
        np.array(header["prop_mean"]),
        np.array(header["prop_std"]),
        np.array(header["ref_props"], dtype=float).reshape(-1, 9),
        np.array(header["ref_counts"], dtype=np.int64),
    )


def load_model(path) -> ModelParams:
    return from_bytes(Path(path).read_bytes())
