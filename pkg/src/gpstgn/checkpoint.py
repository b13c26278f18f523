"""Binary checkpoint format.

Little-endian layout::

    b"TLGP"  u32 version(=1)
    u32 len  UTF-8 key=value config text
    u32 tensor count
    per tensor: u16 len, UTF-8 name, u8 rank, u32 dims[rank], f64 values (row-major)
    u32 CRC-32 of every preceding byte

Normalization statistics travel as the tensors ``norm.mean``/``norm.std`` so
they round-trip bit-exactly like the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import struct
import zlib

import numpy as np

from .autodiff import Tensor
from .data import NormStats
from .errors import CheckpointError
from .model import ModelConfig, param_shapes

MAGIC = b"TLGP"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    norm: NormStats | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def tensors(self) -> dict[str, Tensor]:
        return {k: Tensor(v, name=k, requires_grad=True) for k, v in self.params.items()}

    def equals(self, other: "Checkpoint") -> bool:
        """Bitwise equality of all payloads plus config and metadata."""
        if self.config != other.config or self.metadata != other.metadata:
            return False
        if list(self.params) != list(other.params):
            return False
        for k in self.params:
            a, b = self.params[k], other.params[k]
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        if (self.norm is None) != (other.norm is None):
            return False
        if self.norm is not None:
            if self.norm.mode != other.norm.mode:
                return False
            if self.norm.mean.tobytes() != other.norm.mean.tobytes():
                return False
            if self.norm.std.tobytes() != other.norm.std.tobytes():
                return False
        return True


def from_params(cfg: ModelConfig, params, norm=None, metadata=None) -> Checkpoint:
    arrays = {k: np.array(v.data if isinstance(v, Tensor) else v, dtype=np.float64) for k, v in params.items()}
    return Checkpoint(cfg, arrays, norm, dict(metadata or {}))


def _config_text(ckpt: Checkpoint) -> str:
    cfg = ckpt.config
    items = {
        "model.num_blocks": str(cfg.num_blocks),
        "model.channels": ";".join("/".join(str(c) for c in t) for t in cfg.channels),
        "model.kt": str(cfg.kt),
        "model.ks": str(cfg.ks),
        "model.his": str(cfg.his),
        "model.activation": cfg.activation,
        "model.in_channels": str(cfg.in_channels),
        "model.head_linear_layers": str(cfg.head_linear_layers),
    }
    if ckpt.norm is not None:
        items["norm.mode"] = ckpt.norm.mode
    for k, v in ckpt.metadata.items():
        if "\n" in str(v) or "=" in k:
            raise CheckpointError(f"metadata entry {k!r} cannot be serialized")
        items[f"meta.{k}"] = str(v)
    return "".join(f"{k}={v}\n" for k, v in items.items())


def _parse_config(text: str):
    items = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"bad config line {line!r}")
        items[key] = value
    try:
        cfg = ModelConfig(
            num_blocks=int(items["model.num_blocks"]),
            channels=tuple(tuple(int(c) for c in t.split("/")) for t in items["model.channels"].split(";")),
            kt=int(items["model.kt"]),
            ks=int(items["model.ks"]),
            his=int(items["model.his"]),
            activation=items["model.activation"],
            in_channels=int(items["model.in_channels"]),
            head_linear_layers=int(items["model.head_linear_layers"]),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid model config in checkpoint: {exc}") from exc
    metadata = {k[5:]: v for k, v in items.items() if k.startswith("meta.")}
    return cfg, items.get("norm.mode"), metadata


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    out = [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
    out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def dumps(ckpt: Checkpoint) -> bytes:
    tensors = dict(ckpt.params)
    if ckpt.norm is not None:
        tensors["norm.mean"] = ckpt.norm.mean
        tensors["norm.std"] = ckpt.norm.std
    text = _config_text(ckpt).encode("utf-8")
    body = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(text)), text]
    body.append(struct.pack("<I", len(tensors)))
    body.extend(_pack_tensor(k, np.asarray(v, dtype=np.float64)) for k, v in tensors.items())
    blob = b"".join(body)
    return blob + struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes) -> Checkpoint:
    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    if len(data) < 16:
        raise CheckpointError("checkpoint is truncated")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(payload)
    r.take(4)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch (corrupt or truncated)")
    (text_len,) = r.unpack("<I")
    try:
        text = r.take(text_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError("config text is not UTF-8") from exc
    cfg, norm_mode, metadata = _parse_config(text)
    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
        tensors[name] = arr
    if r.pos != len(payload):
        raise CheckpointError("trailing bytes after last tensor")

    norm = None
    if norm_mode is not None:
        try:
            norm = NormStats(tensors.pop("norm.mean"), tensors.pop("norm.std"), norm_mode)
        except KeyError as exc:
            raise CheckpointError("normalization statistics missing") from exc

    expected = param_shapes(cfg)
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointError(f"parameters inconsistent with config: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape}, config implies {tuple(shape)}"
            )
    params = {name: tensors[name] for name in tensors}
    return Checkpoint(cfg, params, norm, metadata)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)
