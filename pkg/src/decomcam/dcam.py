"""DCAM tensor-dump container: bit-exact binary bridge to exporters.

Layout (all integers little-endian):

    magic   8 bytes  "DCAMTNSR"
    version u32      = 1
    count   u32      number of entries
    entry   repeated:
        name_len u16, name UTF-8 bytes
        ndim     u8
        ndim == 0: byte_len u32, raw bytes (UTF-8 for meta.* entries)
        ndim >= 1: ndim x u32 dims, then prod(dims) float32 values,
                   row-major

Required entries: "image" (3, H, W), "activations" (K, M, N),
"gradients" (same shape as activations), "score" (one element; written
as a shape-[1] tensor), and the byte-string entries "meta.concept",
"meta.layer", "meta.model". Unknown entries are preserved.

Writing is canonical (fixed entry order, extras sorted by name), so the
same dump always serializes to identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, SchemaError

MAGIC = b"DCAMTNSR"
VERSION = 1
_REQUIRED = ("image", "activations", "gradients", "score", "meta.concept", "meta.layer", "meta.model")


@dataclass
class TensorDump:
    """In-memory form of one exported (image, activations, gradients) record."""

    image: np.ndarray  # (3, H, W) float32
    activations: np.ndarray  # (K, M, N) float32
    gradients: np.ndarray  # (K, M, N) float32
    score: float
    concept: str
    layer: str
    model: str
    extras: dict[str, np.ndarray | bytes] = field(default_factory=dict)


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    head = struct.pack("<H", len(name.encode())) + name.encode()
    head += struct.pack("<B", arr.ndim)
    head += b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + arr.tobytes()


def _pack_bytes(name: str, payload: bytes) -> bytes:
    head = struct.pack("<H", len(name.encode())) + name.encode()
    return head + struct.pack("<BI", 0, len(payload)) + payload


def write_tensor_dump(path: str | Path, dump: TensorDump) -> None:
    """Serialize a dump; byte-identical output for identical content."""
    parts = [MAGIC, struct.pack("<II", VERSION, 7 + len(dump.extras))]
    parts.append(_pack_tensor("image", dump.image))
    parts.append(_pack_tensor("activations", dump.activations))
    parts.append(_pack_tensor("gradients", dump.gradients))
    parts.append(_pack_tensor("score", np.array([dump.score], dtype="<f4")))
    parts.append(_pack_bytes("meta.concept", dump.concept.encode()))
    parts.append(_pack_bytes("meta.layer", dump.layer.encode()))
    parts.append(_pack_bytes("meta.model", dump.model.encode()))
    for name in sorted(dump.extras):
        value = dump.extras[name]
        if isinstance(value, bytes):
            parts.append(_pack_bytes(name, value))
        else:
            parts.append(_pack_tensor(name, np.asarray(value)))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated dump: needed {n} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_tensor_dump(path: str | Path) -> TensorDump:
    """Parse and validate a DCAM file."""
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(8, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic at offset 0: {magic!r} (expected {MAGIC!r})")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported dump version {version} at offset 8")
    count = r.u32("entry count")

    entries: dict[str, np.ndarray | bytes] = {}
    for _ in range(count):
        name_len = r.u16("entry name length")
        name = r.take(name_len, "entry name").decode("utf-8")
        ndim = r.u8(f"ndim of {name!r}")
        if ndim == 0:
            byte_len = r.u32(f"byte length of {name!r}")
            entries[name] = r.take(byte_len, f"payload of {name!r}")
        else:
            dims = tuple(r.u32(f"dim of {name!r}") for _ in range(ndim))
            n_values = int(np.prod(dims, dtype=np.int64))
            raw = r.take(4 * n_values, f"payload of {name!r}")
            entries[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last entry at offset {r.pos}")

    missing = [n for n in _REQUIRED if n not in entries]
    if missing:
        raise SchemaError(f"missing required entries: {', '.join(missing)}")

    def tensor(name: str, ndim: int) -> np.ndarray:
        value = entries.pop(name)
        if not isinstance(value, np.ndarray) or value.ndim != ndim:
            raise SchemaError(f"entry {name!r} must be a {ndim}-D tensor")
        return value

    def text(name: str) -> str:
        value = entries.pop(name)
        if not isinstance(value, bytes):
            raise SchemaError(f"entry {name!r} must be a byte-string entry")
        return value.decode("utf-8")

    image = tensor("image", 3)
    if image.shape[0] != 3:
        raise SchemaError(f"image must have 3 channels, got shape {image.shape}")
    acts = tensor("activations", 3)
    grads = tensor("gradients", 3)
    if acts.shape != grads.shape:
        raise SchemaError(f"activations {acts.shape} and gradients {grads.shape} differ in shape")
    score_raw = entries.pop("score")
    if isinstance(score_raw, np.ndarray) and score_raw.size == 1:
        score = float(score_raw.reshape(-1)[0])
    elif isinstance(score_raw, bytes) and len(score_raw) == 4:
        # tolerated alternative: scalar written as a raw ndim-0 entry
        score = float(struct.unpack("<f", score_raw)[0])
    else:
        raise SchemaError("score must hold exactly one float32 value")

    return TensorDump(
        image=image,
        activations=acts,
        gradients=grads,
        score=score,
        concept=text("meta.concept"),
        layer=text("meta.layer"),
        model=text("meta.model"),
        extras=entries,
    )


class DumpProbe:
    """ActivationProbe backed by a static dump.

    A dump cannot run fresh forward passes, so it only serves the
    decomposition stage; integration weighting must come either from
    singular values or from a live scoring endpoint.
    """

    def __init__(self, dump: TensorDump):
        self.dump = dump

    @classmethod
    def from_file(cls, path: str | Path) -> "DumpProbe":
        return cls(load_tensor_dump(path))

    def probe(self, img: np.ndarray, concept: str) -> tuple[np.ndarray, np.ndarray, float]:
        d = self.dump
        return d.activations.astype(np.float32), d.gradients.astype(np.float32), d.score
