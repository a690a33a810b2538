"""Binary checkpoint format.

Layout::

    b"WINCKPT1"
    uint32 little-endian header length
    header: UTF-8 JSON (model spec, target mode, noise policy, metadata)
    float32 little-endian blocks, layer by layer:
        conv weights (k, c_in, f, f), conv bias (k,)
        and when the layer has BN: gamma, beta, running_mean, running_var

The JSON header is written with sorted keys and no whitespace variation, so
identical models produce identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import nn
from .model import Layer, Model, ModelSpec

MAGIC = b"WINCKPT1"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    """Malformed or incompatible checkpoint file."""


def _blocks(model: Model):
    for layer in model.layers:
        yield layer.conv.weights
        yield layer.conv.bias
        if layer.bn is not None:
            yield layer.bn.gamma
            yield layer.bn.beta
            yield layer.bn.running_mean
            yield layer.bn.running_var


def to_bytes(model: Model, noise: dict | None = None, meta: dict | None = None) -> bytes:
    header = {
        "format": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "target_mode": model.spec.target_mode,
        "noise": noise or model.meta.get("noise", {}),
        "meta": meta if meta is not None else {k: v for k, v in model.meta.items() if k != "noise"},
        "bn": [
            {"eps": l.bn.eps, "momentum": l.bn.momentum, "tracked": l.bn.tracked}
            for l in model.layers if l.bn is not None
        ],
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(b, dtype="<f4").tobytes() for b in _blocks(model))
    return MAGIC + struct.pack("<I", len(text)) + text + body


def save(model: Model, path, noise: dict | None = None, meta: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(model, noise, meta))


def from_bytes(raw: bytes) -> Model:
    if raw[:8] != MAGIC:
        raise CheckpointError("bad checkpoint magic (expected WINCKPT1)")
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint header")
    (n,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + n].decode("utf-8"))
        spec = ModelSpec.from_dict(header["spec"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from e
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")
    body = memoryview(raw)[12 + n:]
    pos = 0

    def take(shape) -> np.ndarray:
        nonlocal pos
        count = int(np.prod(shape))
        end = pos + 4 * count
        if end > len(body):
            raise CheckpointError("truncated checkpoint parameter data")
        arr = np.frombuffer(body[pos:end], dtype="<f4").astype(np.float64).reshape(shape)
        pos = end
        return arr

    bn_meta = iter(header.get("bn", []))
    layers, c_in = [], spec.channels
    for ls in spec.layers:
        conv = nn.ConvParams(take((ls.filters, c_in, ls.kernel, ls.kernel)), take((ls.filters,)))
        bn = None
        if ls.bn:
            m = next(bn_meta, {})
            bn = nn.BnParams(take((ls.filters,)), take((ls.filters,)), take((ls.filters,)), take((ls.filters,)),
                             eps=m.get("eps", nn.BN_EPS), momentum=m.get("momentum", nn.BN_MOMENTUM),
                             tracked=m.get("tracked", 1))
        layers.append(Layer(ls, conv, bn))
        c_in = ls.filters
    if pos != len(body):
        raise CheckpointError(f"{len(body) - pos} trailing bytes after parameter data")
    meta = dict(header.get("meta", {}))
    meta["noise"] = header.get("noise", {})
    return Model(spec, layers, meta)


def load(path) -> Model:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e
    return from_bytes(raw)
