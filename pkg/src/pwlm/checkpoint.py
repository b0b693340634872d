"""Bit-exact binary model persistence.

Layout (all integers little-endian):

    magic    4 bytes  "PWLM"
    version  u32      currently 1
    kind     u32 len + UTF-8      "gpt" | "vqt" | "codes"
    config   u32 len + UTF-8      flat key=value lines
    n_blocks u32
    blocks   per block: u32 name len + name UTF-8,
             u32 ndim, u32 dims[ndim], float32 LE payload
    checksum u64      FNV-1a over every preceding byte

Parameter blocks appear in the model's deterministic iteration order, so
save -> load -> save reproduces the file byte for byte. Arrays are stored
as float32; a float64 reference-mode model is narrowed on save.
"""

from __future__ import annotations

import dataclasses
import struct
import typing
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import (
    ChecksumMismatch, ConfigError, FormatError, IoError, KindMismatch,
    ShapeMismatch, VersionUnsupported,
)
from .gpt import GptConfig, GptModel
from .tokenizer import FULL_ALPHABET
from .vqt import VqtConfig, VqtModel

MAGIC = b"PWLM"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


# ----- config <-> key=value text -----

def _encode_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bytes):
        return "full" if value == FULL_ALPHABET else value.hex()
    return str(value)


def _decode_value(text: str, typ):
    origin = typing.get_origin(typ)
    if origin is Union:  # Optional[...]
        if text == "none":
            return None
        inner = [a for a in typing.get_args(typ) if a is not type(None)][0]
        return _decode_value(text, inner)
    if typ is bytes:
        return FULL_ALPHABET if text == "full" else bytes.fromhex(text)
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is str:
        return text
    raise ConfigError(f"cannot decode config field of type {typ}")


def config_to_text(cfg) -> str:
    lines = [f"{f.name}={_encode_value(getattr(cfg, f.name))}"
             for f in dataclasses.fields(cfg)]
    return "\n".join(lines) + "\n"


def config_from_text(cls, text: str):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    known = {f.name for f in dataclasses.fields(cls)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"config line {lineno}: expected key=value")
        if key not in known:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        kwargs[key] = _decode_value(value, hints[key])
    return cls(**kwargs)


# ----- binary writer/reader -----

def _block_bytes(name: str, array: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    name_b = name.encode()
    head = struct.pack("<I", len(name_b)) + name_b
    head += struct.pack("<I", array.ndim)
    head += struct.pack(f"<{array.ndim}I", *array.shape)
    return head + payload


def _model_arrays(model: Union[GptModel, VqtModel]) -> Dict[str, np.ndarray]:
    arrays = {name: t.data for name, t in model.params.items()}
    if isinstance(model, VqtModel):
        arrays["quantizer.codebook"] = model.codebook
        arrays["quantizer.ema_counts"] = model.ema_counts
        arrays["quantizer.ema_sums"] = model.ema_sums
    return arrays


def save_checkpoint(model: Union[GptModel, VqtModel], path) -> None:
    kind = model.kind.encode()
    # payloads are float32, so a reference-mode config is narrowed on save
    cfg = dataclasses.replace(model.cfg, dtype="float32")
    config = config_to_text(cfg).encode()
    arrays = _model_arrays(model)
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<I", len(kind)), kind,
             struct.pack("<I", len(config)), config,
             struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        parts.append(_block_bytes(name, arr))
    blob = b"".join(parts)
    blob += struct.pack("<Q", fnv1a64(blob))
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError("checkpoint truncated")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_metadata(path) -> Tuple[str, str, Dict[str, Tuple[int, ...]]]:
    """(kind, config text, block name -> shape) after checksum validation."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path} is not a PWLM checkpoint")
    stored = struct.unpack("<Q", blob[-8:])[0]
    if fnv1a64(blob[:-8]) != stored:
        raise ChecksumMismatch(f"{path}: trailing checksum does not validate")
    r = _Reader(blob[:-8])
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise VersionUnsupported(f"{path}: format version {version}, expected {VERSION}")
    kind = r.take(r.u32()).decode()
    config = r.take(r.u32()).decode()
    shapes: Dict[str, Tuple[int, ...]] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        r.take(4 * int(np.prod(shape, dtype=np.int64)))
        shapes[name] = shape
    return kind, config, shapes


def load_checkpoint(path, expect_kind: Optional[str] = None
                    ) -> Union[GptModel, VqtModel]:
    """Rebuild a model; loaded weights match the saved ones bit for bit."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path} is not a PWLM checkpoint")
    stored = struct.unpack("<Q", blob[-8:])[0]
    if fnv1a64(blob[:-8]) != stored:
        raise ChecksumMismatch(f"{path}: trailing checksum does not validate")
    r = _Reader(blob[:-8])
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise VersionUnsupported(f"{path}: format version {version}, expected {VERSION}")
    kind = r.take(r.u32()).decode()
    if expect_kind is not None and kind != expect_kind:
        raise KindMismatch(f"{path} holds a {kind!r} model, expected {expect_kind!r}")
    config_text = r.take(r.u32()).decode()
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)

    if kind in ("gpt", "codes"):
        cfg = config_from_text(GptConfig, config_text)
        model = GptModel(cfg)
    elif kind == "vqt":
        cfg = config_from_text(VqtConfig, config_text)
        model = VqtModel(cfg)
    else:
        raise FormatError(f"unknown model kind {kind!r}")

    expected = _model_arrays(model)
    if set(expected) != set(arrays):
        missing = set(expected) ^ set(arrays)
        raise FormatError(f"parameter blocks do not match config: {sorted(missing)}")
    for name, t in model.params.items():
        if arrays[name].shape != t.data.shape:
            raise ShapeMismatch(
                f"{name}: stored shape {arrays[name].shape}, "
                f"config implies {t.data.shape}")
        t.data = arrays[name].astype(np.float32).copy()
    if isinstance(model, VqtModel):
        model.codebook = arrays["quantizer.codebook"].astype(np.float32).copy()
        model.ema_counts = arrays["quantizer.ema_counts"].astype(np.float32).copy()
        model.ema_sums = arrays["quantizer.ema_sums"].astype(np.float32).copy()
    model.kind = kind
    return model
