"""SRPX model files: magic, u32 version, u8 kind, then u64-length-prefixed f64 blocks.

Blocks follow parameter declaration order, then the frozen normalization
buffers, then a final block holding ``[label_count, dither_seed]``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .pipelines import KIND_CODES, PipelineModel, _buffer_shapes, _param_shapes

MAGIC = b"SRPX"
VERSION = 1


def dumps(model: PipelineModel) -> bytes:
    parts = [MAGIC, struct.pack("<IB", VERSION, KIND_CODES[model.kind])]
    blocks = list(model.params.values()) + [model.buffers[k] for k in _buffer_shapes(model.kind)]
    blocks.append(np.array([model.label_count, model.dither_seed], dtype=np.float64))
    for b in blocks:
        flat = np.ascontiguousarray(b, dtype="<f8").reshape(-1)
        parts.append(struct.pack("<Q", flat.size))
        parts.append(flat.tobytes())
    return b"".join(parts)


def loads(data: bytes, source: str = "<bytes>") -> PipelineModel:
    if data[:4] != MAGIC:
        raise ValueError(f"{source}: not a model file (magic {data[:4]!r})")
    version, code = struct.unpack_from("<IB", data, 4)
    if version != VERSION:
        raise ValueError(f"{source}: unsupported model file version {version}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if code not in kinds:
        raise ValueError(f"{source}: unknown pipeline kind code {code}")
    kind = kinds[code]
    off = 9
    blocks = []
    while off < len(data):
        if off + 8 > len(data):
            raise ValueError(f"{source}: truncated block header")
        (n,) = struct.unpack_from("<Q", data, off)
        off += 8
        if off + 8 * n > len(data):
            raise ValueError(f"{source}: truncated block")
        blocks.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64))
        off += 8 * n
    if not blocks:
        raise ValueError(f"{source}: no parameter blocks")
    label_count, dither_seed = (int(v) for v in blocks[-1])
    pshapes = _param_shapes(kind, label_count)
    bshapes = _buffer_shapes(kind)
    if len(blocks) != len(pshapes) + len(bshapes) + 1:
        raise ValueError(f"{source}: expected {len(pshapes) + len(bshapes) + 1} blocks, found {len(blocks)}")
    params, buffers = {}, {}
    it = iter(blocks)
    for name, shape in list(pshapes.items()):
        params[name] = _shaped(next(it), shape, name, source)
    for name, shape in bshapes.items():
        buffers[name] = _shaped(next(it), shape, name, source)
    return PipelineModel(kind, label_count, params, buffers, dither_seed)


def _shaped(block: np.ndarray, shape, name: str, source: str) -> np.ndarray:
    if block.size != int(np.prod(shape)):
        raise ValueError(f"{source}: block {name} has {block.size} values, expected {int(np.prod(shape))}")
    return block.reshape(shape)


def save_model(model: PipelineModel, path: str | Path) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path: str | Path) -> PipelineModel:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"model file not found: {p}")
    return loads(p.read_bytes(), str(p))
