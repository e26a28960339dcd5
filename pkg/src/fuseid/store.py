"""Versioned binary persistence for models, galleries, policies, normalizers.

Every artifact is one little-endian file: a fixed 29-byte header (magic,
version, kind, modality, two size fields), a kind-specific payload of
8-byte IEEE-754 floats and length-prefixed UTF-8 strings, and a CRC-32
trailer over all preceding bytes. Round-trips are bit-exact. The full
byte-offset layout lives in FORMAT.md at the repository root.

Writes go to a temp file in the target directory followed by an atomic
rename, so readers never observe a half-written artifact.
"""

from __future__ import annotations

import os
import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArtifactKindError,
    ChecksumError,
    FormatError,
    MagicMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)
from .fusion import FusionPolicy
from .matching import DistanceNormalizer
from .modality import Modality
from .subspace import FeatureVector, SubspaceModel

MAGIC = b"FUSEID\0"
VERSION = 1

KIND_MODEL = 0
KIND_GALLERY = 1
KIND_POLICY = 2
KIND_NORMALIZER = 3

_MODALITY_BYTE = {Modality.FACE: 0, Modality.PALM: 1}
_BYTE_MODALITY = {0: Modality.FACE, 1: Modality.PALM}
MODALITY_NONE = 255

_HEADER = struct.Struct("<7sIBBQQ")  # magic, version, kind, modality, n, K
HEADER_SIZE = _HEADER.size  # 29


@dataclass(frozen=True)
class GalleryRecord:
    """One enrolled subject: feature vectors per modality plus a timestamp."""

    subject_id: str
    face: tuple[FeatureVector, ...] = ()
    palm: tuple[FeatureVector, ...] = ()
    enrolled_at: float = 0.0

    def __post_init__(self):
        sid = self.subject_id
        if not sid or not sid.isprintable() or "\n" in sid or "\r" in sid:
            raise ValueError(f"subject id must be non-empty printable text, got {sid!r}")
        face = tuple(self.face)
        palm = tuple(self.palm)
        if not face and not palm:
            raise ValueError(f"record {sid!r} must carry at least one modality")
        for vectors, modality in ((face, Modality.FACE), (palm, Modality.PALM)):
            lengths = {len(v) for v in vectors}
            if len(lengths) > 1:
                raise ValueError(f"record {sid!r} has mixed {modality} feature lengths")
            for v in vectors:
                if v.modality is not modality:
                    raise ValueError(f"record {sid!r} holds a {v.modality} vector in its {modality} list")
        object.__setattr__(self, "face", face)
        object.__setattr__(self, "palm", palm)
        object.__setattr__(self, "enrolled_at", float(self.enrolled_at))

    def vectors(self, modality: Modality) -> tuple[FeatureVector, ...]:
        return self.face if modality is Modality.FACE else self.palm

    @classmethod
    def now(cls, subject_id: str, face=(), palm=()) -> "GalleryRecord":
        return cls(subject_id=subject_id, face=tuple(face), palm=tuple(palm), enrolled_at=time.time())


# ---------------------------------------------------------------------------
# low-level read/write helpers


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def raw(self, data: bytes):
        self.chunks.append(data)

    def u32(self, value: int):
        self.raw(struct.pack("<I", value))

    def f64(self, value: float):
        self.raw(struct.pack("<d", value))

    def f64_array(self, arr: np.ndarray):
        self.raw(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def string(self, text: str):
        data = text.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes, base_offset: int):
        self.data = data
        self.pos = 0
        self.base = base_offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"payload ends at byte {self.base + len(self.data)}, "
                f"needed {n} more bytes at offset {self.base + self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def string(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"invalid UTF-8 string at offset {self.base + self.pos}: {e}") from None

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} unexpected trailing payload bytes")


def _write_artifact(path, kind: int, modality_byte: int, n: int, k: int, payload: bytes):
    header = _HEADER.pack(MAGIC, VERSION, kind, modality_byte, n, k)
    body = header + payload
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _read_artifact(path, expected_kind: int) -> tuple[int, int, int, _Reader]:
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE + 4:
        raise TruncatedFileError(f"{path}: {len(data)} bytes is too short for a header and trailer")
    if data[:7] != MAGIC:
        raise MagicMismatchError(f"{path}: bad magic {data[:7]!r}, expected {MAGIC!r}")
    magic, version, kind, modality_byte, n, k = _HEADER.unpack(data[:HEADER_SIZE])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this build supports {VERSION}")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: CRC mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})")
    if kind != expected_kind:
        raise ArtifactKindError(f"{path}: artifact kind {kind}, expected {expected_kind}")
    return modality_byte, n, k, _Reader(data[HEADER_SIZE:-4], HEADER_SIZE)


def _modality_from_byte(value: int, path) -> Modality:
    if value not in _BYTE_MODALITY:
        raise FormatError(f"{path}: unknown modality byte {value}")
    return _BYTE_MODALITY[value]


# ---------------------------------------------------------------------------
# model


def save_model(model: SubspaceModel, path):
    w = _Writer()
    w.f64_array(model.mean)
    w.f64_array(model.eigenvalues)
    w.f64_array(model.basis.reshape(-1))  # row-major n*K
    w.raw(struct.pack("<QQ", model.canonical_size[0], model.canonical_size[1]))
    _write_artifact(path, KIND_MODEL, _MODALITY_BYTE[model.modality], model.n_pixels, model.k, w.bytes())


def load_model(path) -> SubspaceModel:
    modality_byte, n, k, r = _read_artifact(path, KIND_MODEL)
    modality = _modality_from_byte(modality_byte, path)
    mean = r.f64_array(n)
    eigenvalues = r.f64_array(k)
    basis = r.f64_array(n * k).reshape(n, k)
    rows, cols = struct.unpack("<QQ", r.take(16))
    r.done()
    if rows * cols != n:
        raise FormatError(f"{path}: canonical size {rows}x{cols} does not match n={n}")
    return SubspaceModel(
        modality=modality, mean=mean, eigenvalues=eigenvalues, basis=basis,
        canonical_size=(rows, cols),
    )


# ---------------------------------------------------------------------------
# gallery


def save_gallery(records, path):
    records = list(records)
    w = _Writer()
    for rec in records:
        if not isinstance(rec, GalleryRecord):
            raise TypeError(f"expected GalleryRecord, got {type(rec).__name__}")
        w.string(rec.subject_id)
        for vectors in (rec.face, rec.palm):
            w.u32(len(vectors))
            for v in vectors:
                w.u32(len(v))
                w.f64_array(v.coords)
        w.f64(rec.enrolled_at)
    _write_artifact(path, KIND_GALLERY, MODALITY_NONE, len(records), 0, w.bytes())


def load_gallery(path) -> list[GalleryRecord]:
    _, n_records, _, r = _read_artifact(path, KIND_GALLERY)
    records = []
    for _ in range(n_records):
        sid = r.string()
        per_modality = []
        for modality in (Modality.FACE, Modality.PALM):
            count = r.u32()
            vectors = []
            for _ in range(count):
                dim = r.u32()
                vectors.append(FeatureVector(r.f64_array(dim), modality))
            per_modality.append(tuple(vectors))
        enrolled_at = r.f64()
        records.append(
            GalleryRecord(subject_id=sid, face=per_modality[0], palm=per_modality[1], enrolled_at=enrolled_at)
        )
    r.done()
    return records


# ---------------------------------------------------------------------------
# policy


def save_policy(policy: FusionPolicy, path):
    w = _Writer()
    w.f64(policy.alpha)
    w.f64(policy.beta)
    w.f64(policy.threshold)
    _write_artifact(path, KIND_POLICY, MODALITY_NONE, 0, 0, w.bytes())


def load_policy(path) -> FusionPolicy:
    _, _, _, r = _read_artifact(path, KIND_POLICY)
    alpha = r.f64()
    beta = r.f64()
    threshold = r.f64()
    r.done()
    return FusionPolicy(alpha=alpha, beta=beta, threshold=threshold)


# ---------------------------------------------------------------------------
# distance normalizer


def save_normalizer(normalizer: DistanceNormalizer, modality: Modality, path):
    w = _Writer()
    w.f64(normalizer.d_min)
    w.f64(normalizer.d_max)
    _write_artifact(path, KIND_NORMALIZER, _MODALITY_BYTE[modality], 0, 0, w.bytes())


def load_normalizer(path) -> tuple[DistanceNormalizer, Modality]:
    modality_byte, _, _, r = _read_artifact(path, KIND_NORMALIZER)
    modality = _modality_from_byte(modality_byte, path)
    d_min = r.f64()
    d_max = r.f64()
    r.done()
    return DistanceNormalizer(d_min=d_min, d_max=d_max), modality
