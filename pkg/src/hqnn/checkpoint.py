"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"HQNN"                    magic
    u32                        format version
    u8                         head type: 0 classical, 1 quantum
    u32                        tensor count
    per tensor:
        u16 + utf-8 bytes      name
        u8                     rank
        u32 * rank             dims
        f64 * prod(dims)       row-major payload

The architecture is recovered from tensor names and shapes.
"""
from __future__ import annotations

import re
import struct
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import FormatError
from .models import Model, ModelSpec, block_spatial_sizes, build_model

MAGIC = b"HQNN"
VERSION = 1


def encode_checkpoint(model: Model) -> bytes:
    parts = [MAGIC, struct.pack("<IBI", VERSION, 1 if model.spec.quantum_head else 0, len(model.params))]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: Model, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(model))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.source}: truncated at offset {self.pos} reading {what} "
                f"(needs {n} bytes, {len(self.buf) - self.pos} left)"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> tuple[bool, dict[str, np.ndarray]]:
    r = _Reader(buf, source)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "format version")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported format version {version} at offset 4, expected {VERSION}")
    (head,) = r.unpack("<B", "head type")
    if head not in (0, 1):
        raise FormatError(f"{source}: invalid head type {head} at offset 8")
    (count,) = r.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        start = r.pos
        (n,) = r.unpack("<H", f"name length of tensor {i}")
        try:
            name = r.take(n, f"name of tensor {i}").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{source}: tensor name at offset {start + 2} is not valid UTF-8") from None
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        size = int(np.prod(dims, dtype=np.int64))
        payload = r.take(8 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(buf):
        raise FormatError(f"{source}: {len(buf) - r.pos} trailing bytes at offset {r.pos}")
    return head == 1, tensors


def infer_spec(tensors: dict[str, np.ndarray], quantum: bool) -> ModelSpec:
    """Recover the architecture description from parameter names and shapes."""
    if "patch.weight" in tensors:
        d, cols = tensors["patch.weight"].shape
        patch = int(round((cols / 3) ** 0.5))
        heads = sum(1 for k in tensors if re.fullmatch(r"msa\.head\d+\.wq", k))
        return ModelSpec("vit", quantum, vit_patch=patch, vit_embed_dim=d, vit_heads=heads)
    convs = sorted(k for k in tensors if re.fullmatch(r"conv\d+\.weight", k))
    if not convs or "fc0.weight" not in tensors:
        raise FormatError("checkpoint does not describe a known architecture")
    channels = tuple(int(tensors[k].shape[0]) for k in convs)
    family = {1: "nn4eo_v1", 2: "nn4eo_v2", 3: "nn4eo_v3"}.get(len(channels))
    if family is None:
        raise FormatError(f"checkpoint has {len(channels)} conv blocks; expected 1-3")
    flat = tensors["fc0.weight"].shape[1]
    for padding in ("same", "valid"):
        try:
            spec = ModelSpec(family, quantum, conv_channels=channels, padding=padding)
        except ValueError:
            continue
        h, w = block_spatial_sizes(spec)[-1]
        if channels[-1] * h * w == flat:
            return spec
    raise FormatError(f"fc0 input size {flat} matches neither same nor valid padding")


def load_checkpoint(path, spec: ModelSpec | None = None) -> Model:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read checkpoint ({exc})") from exc
    quantum, tensors = decode_checkpoint(buf, str(path))
    spec = infer_spec(tensors, quantum) if spec is None else replace(spec, quantum_head=quantum)
    model = build_model(spec, seed=0)
    if set(tensors) != set(model.params):
        missing = sorted(set(model.params) - set(tensors))
        extra = sorted(set(tensors) - set(model.params))
        raise FormatError(f"{path}: tensor names do not match {spec.display_name} (missing {missing}, extra {extra})")
    for name, t in model.params.items():
        if tensors[name].shape != t.shape:
            raise FormatError(f"{path}: tensor {name} has shape {tensors[name].shape}, expected {t.shape}")
        t.data = tensors[name]
    return model
