"""Versioned binary checkpoint container.

Byte layout (all integers little-endian, floats IEEE-754 little-endian):

    magic   4 bytes  b"MLCK"
    version u32      currently 1
    cfg_len u64      length of the UTF-8 JSON model-config blob
    config  cfg_len bytes
    count   u32      number of named arrays
    then per array:
        name_len u16, name (UTF-8)
        dtype    u8   (0 = float64, 1 = int64)
        ndim     u8
        dims     ndim x u64
        data     row-major, element width 8

Round-trips are bit-exact; loading verifies magic, version and
truncation, and optionally an expected model config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct

import numpy as np

from . import network as net
from .descriptors import DescriptorParams
from .conv import ConvParams

MAGIC = b"MLCK"
VERSION = 1
_DTYPES = {0: "<f8", 1: "<i8"}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.int64): 1}


class CheckpointError(ValueError):
    pass


def _config_dict(config: net.ModelConfig) -> dict:
    d = dataclasses.asdict(config)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def save_checkpoint(path: str, params: net.ModelParams,
                    config: net.ModelConfig) -> None:
    blob = json.dumps(_config_dict(config), sort_keys=True).encode()
    arrays = params.named_arrays()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<Q", len(blob))
    out += blob
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        out += struct.pack("<%dQ" % arr.ndim, *arr.shape)
        out += arr.astype("<f8" if arr.dtype.kind == "f" else "<i8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_checkpoint(path: str, expected_config: net.ModelConfig | None = None):
    """Returns (params, config). Raises CheckpointError on bad files or a
    config mismatch against ``expected_config``."""
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint file")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<Q", take(8))
    cfg = json.loads(bytes(take(cfg_len)).decode())
    for k in ("block_channels", "region_sizes", "t_schedule"):
        cfg[k] = tuple(cfg[k])
    config = net.ModelConfig(**cfg)
    if expected_config is not None and _config_dict(expected_config) != _config_dict(config):
        raise CheckpointError("checkpoint config does not match expected config")
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode()
        code, ndim = struct.unpack("<BB", take(2))
        dims = struct.unpack("<%dQ" % ndim, take(8 * ndim)) if ndim else ()
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(take(8 * n), dtype=_DTYPES[code]).reshape(dims)
        arrays[name] = arr.astype(arr.dtype.newbyteorder("="))
    params = _params_from_arrays(arrays, config)
    return params, config


def _params_from_arrays(arrays: dict[str, np.ndarray],
                        config: net.ModelConfig) -> net.ModelParams:
    try:
        dp = DescriptorParams(arrays["descriptor.geo"], arrays["descriptor.geom"])
        layers = []
        i = 0
        while f"conv{i}.w0" in arrays:
            layers.append(ConvParams(arrays[f"conv{i}.w0"], arrays[f"conv{i}.w1"],
                                     arrays[f"conv{i}.w2"], arrays[f"conv{i}.bias"]))
            i += 1
        return net.ModelParams(dp, layers, arrays["classifier.w"],
                               arrays["classifier.b"])
    except KeyError as e:
        raise CheckpointError(f"checkpoint missing array {e}") from None


def checkpoint_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
