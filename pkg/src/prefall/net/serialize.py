"""Binary model files.

Layout (all little-endian)::

    8 bytes   magic  b"PREFALL\\0"
    uint32    format version
    uint32 x4 input_dim, hidden_units, num_classes, K
    float64   input scale (degrees per unit input)
    float64[] W (4H x I), U (4H x H), b (4H), V (C x H), c (C), row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ModelFormatError, ModelShapeError, ModelVersionError, TruncatedModelError
from .model import BLOCKS, LstmParams, NetConfig

MAGIC = b"PREFALL\x00"
MODEL_FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI4Id")


def model_bytes(p: LstmParams, cfg: NetConfig) -> bytes:
    if p.config(cfg.K) != cfg:
        raise ModelShapeError(f"parameters {p.config(cfg.K)} do not match config {cfg}")
    head = _HEADER.pack(MAGIC, MODEL_FORMAT_VERSION, cfg.input_dim, cfg.hidden_units, cfg.num_classes, cfg.K, p.input_scale)
    return head + b"".join(a.astype("<f8").tobytes() for a in p.blocks)


def save_model(p: LstmParams, cfg: NetConfig, path: Path | str) -> None:
    Path(path).write_bytes(model_bytes(p, cfg))


def parse_model(data: bytes, source: str = "<bytes>") -> tuple[LstmParams, NetConfig]:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{source}: not a model file (bad magic header)")
    if len(data) < _HEADER.size:
        raise TruncatedModelError(f"{source}: truncated header")
    _, version, I, H, C, K, scale = _HEADER.unpack_from(data)
    if version > MODEL_FORMAT_VERSION:
        raise ModelVersionError(f"{source}: model format version {version} is newer than supported ({MODEL_FORMAT_VERSION})")
    if version < 1:
        raise ModelFormatError(f"{source}: invalid format version {version}")
    try:
        cfg = NetConfig(I, H, C, K)
    except ConfigError as exc:
        raise ModelShapeError(f"{source}: {exc}") from None
    shapes = cfg.shapes()
    need = sum(int(np.prod(shapes[n])) for n in BLOCKS) * 8
    payload = data[_HEADER.size :]
    if len(payload) < need:
        raise TruncatedModelError(f"{source}: expected {need} payload bytes, found {len(payload)}")
    if len(payload) > need:
        raise ModelShapeError(f"{source}: {len(payload) - need} trailing bytes after parameter blocks")
    blocks, at = {}, 0
    for name in BLOCKS:
        size = int(np.prod(shapes[name]))
        blocks[name] = np.frombuffer(payload, dtype="<f8", count=size, offset=at * 8).reshape(shapes[name]).astype(np.float64)
        at += size
    return LstmParams(**blocks, input_scale=scale), cfg


def load_model(path: Path | str) -> tuple[LstmParams, NetConfig]:
    return parse_model(Path(path).read_bytes(), str(path))
