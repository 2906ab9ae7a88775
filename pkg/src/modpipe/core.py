"""Canonical content types, media codecs, and content hashing.

Media payloads use deliberately minimal canonical encodings so every
codec is bit-exact without media libraries:

* raster: binary portable pixmap, P5 (grayscale) or P6 (RGB), maxval 255
* audio:  ``PCM1`` magic, u32-le sample rate, then 16-bit little-endian
  mono samples
* text:   UTF-8

The canonical writers are bijective with the decoders: re-encoding a
decoded payload reproduces the original bytes exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import MalformedPayload

HASH_ALGORITHM_ID = "sha-256"
_DIGEST_LENGTHS = {"sha-256": 32}

AUDIO_MAGIC = b"PCM1"

MODALITIES = ("raster", "audio", "text")


@dataclass(frozen=True)
class Digest:
    """A named hash over a byte string."""

    algorithm_id: str
    digest: bytes

    def __post_init__(self):
        expected = _DIGEST_LENGTHS.get(self.algorithm_id)
        if expected is not None and len(self.digest) != expected:
            raise ValueError(
                f"digest length {len(self.digest)} does not match {self.algorithm_id}"
            )

    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class OriginContext:
    """Where a content item came from and how far it is likely to travel."""

    source_id: str
    category_tags: frozenset[str] = frozenset({"uncategorized"})
    expected_reach: int = 0
    verified_source: bool = False

    def __post_init__(self):
        if not self.category_tags:
            raise ValueError("category_tags must be non-empty (use 'uncategorized')")
        if self.expected_reach < 0:
            raise ValueError("expected_reach must be >= 0")
        object.__setattr__(self, "category_tags", frozenset(self.category_tags))


@dataclass(frozen=True)
class ContentItem:
    """A unit of platform content plus its optional embedded marker block.

    ``payload`` holds the canonical bytes for the declared modality;
    ``marker_block`` is carried out-of-band of the payload (metadata),
    so stripping or adding it never changes the payload bytes.
    """

    id: str
    modality: str
    payload: bytes
    origin: OriginContext = field(default_factory=lambda: OriginContext("unknown"))
    marker_block: Optional[bytes] = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")

    def with_payload(self, payload: bytes) -> "ContentItem":
        return replace(self, payload=payload)

    def with_marker_block(self, block: Optional[bytes]) -> "ContentItem":
        return replace(self, marker_block=block)


# ---------------------------------------------------------------------------
# Raster codec (binary PGM/PPM, maxval 255)
# ---------------------------------------------------------------------------

def encode_raster(pixels: np.ndarray) -> bytes:
    """Canonical P5/P6 encoding of a (h, w) or (h, w, 3) uint8 array."""
    if pixels.dtype != np.uint8 or pixels.ndim not in (2, 3):
        raise ValueError("raster must be uint8 with shape (h, w) or (h, w, 3)")
    if pixels.ndim == 3 and pixels.shape[2] != 3:
        raise ValueError("color rasters must have exactly 3 channels")
    h, w = pixels.shape[:2]
    magic = b"P5" if pixels.ndim == 2 else b"P6"
    return magic + b"\n" + f"{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _pnm_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    # Standard PNM header tokenization: whitespace-separated ints, '#'
    # starts a comment running to end of line.
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise MalformedPayload("truncated pixmap header")
        try:
            tokens.append(int(data[i:j]))
        except ValueError as exc:
            raise MalformedPayload(f"bad pixmap header token {data[i:j]!r}") from exc
        i = j
    if i >= n or not data[i : i + 1].isspace():
        raise MalformedPayload("pixmap header not terminated by whitespace")
    return tokens, i + 1


def decode_raster(payload: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to a uint8 array of shape (h, w) or (h, w, 3)."""
    if payload[:2] not in (b"P5", b"P6"):
        raise MalformedPayload("not a binary portable pixmap (P5/P6)")
    channels = 1 if payload[:2] == b"P5" else 3
    (w, h, maxval), offset = _pnm_tokens(payload, 3, 2)
    if w <= 0 or h <= 0:
        raise MalformedPayload(f"bad pixmap dimensions {w}x{h}")
    if maxval != 255:
        raise MalformedPayload(f"unsupported maxval {maxval} (canonical form is 255)")
    expected = w * h * channels
    body = payload[offset:]
    if len(body) != expected:
        raise MalformedPayload(
            f"pixmap body has {len(body)} bytes, expected {expected}"
        )
    pixels = np.frombuffer(body, dtype=np.uint8)
    return pixels.reshape((h, w) if channels == 1 else (h, w, 3)).copy()


# ---------------------------------------------------------------------------
# Audio codec (PCM1 header + 16-bit little-endian mono samples)
# ---------------------------------------------------------------------------

def encode_audio(sample_rate: int, samples: np.ndarray) -> bytes:
    if samples.dtype != np.int16 or samples.ndim != 1:
        raise ValueError("audio samples must be a 1-d int16 array")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    header = AUDIO_MAGIC + int(sample_rate).to_bytes(4, "little")
    return header + samples.astype("<i2").tobytes()


def decode_audio(payload: bytes) -> tuple[int, np.ndarray]:
    if payload[:4] != AUDIO_MAGIC:
        raise MalformedPayload("missing PCM1 audio magic")
    if len(payload) < 8:
        raise MalformedPayload("truncated audio header")
    rate = int.from_bytes(payload[4:8], "little")
    if rate <= 0:
        raise MalformedPayload(f"bad sample rate {rate}")
    body = payload[8:]
    if len(body) % 2 != 0:
        raise MalformedPayload("audio body is not whole 16-bit samples")
    return rate, np.frombuffer(body, dtype="<i2").copy()


def decode_text(payload: bytes) -> str:
    try:
        return payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPayload(f"payload is not valid UTF-8: {exc}") from exc


def validate_payload(item: ContentItem) -> None:
    """Raise MalformedPayload unless the payload decodes for its modality."""
    if item.modality == "raster":
        decode_raster(item.payload)
    elif item.modality == "audio":
        decode_audio(item.payload)
    else:
        decode_text(item.payload)


def content_hash(item: ContentItem) -> Digest:
    """Digest over payload bytes only; the marker block never contributes.

    This is the anchor cryptographic markers sign, so embedding or
    stripping a metadata marker must not move it.
    """
    validate_payload(item)
    return Digest(HASH_ALGORITHM_ID, hashlib.sha256(item.payload).digest())


# ---------------------------------------------------------------------------
# Corpus manifest (one JSON object per line)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRecord:
    """One manifest line: an item plus optional ground truth."""

    item: ContentItem
    payload_path: str
    marker_path: Optional[str] = None
    is_deepfake: Optional[bool] = None


def _origin_to_json(origin: OriginContext) -> dict:
    return {
        "source_id": origin.source_id,
        "category_tags": sorted(origin.category_tags),
        "expected_reach": origin.expected_reach,
        "verified_source": origin.verified_source,
    }


def _origin_from_json(obj: dict) -> OriginContext:
    tags = obj.get("category_tags") or ["uncategorized"]
    return OriginContext(
        source_id=obj["source_id"],
        category_tags=frozenset(tags),
        expected_reach=int(obj.get("expected_reach", 0)),
        verified_source=bool(obj.get("verified_source", False)),
    )


def manifest_line(record: ManifestRecord) -> str:
    obj = {
        "id": record.item.id,
        "modality": record.item.modality,
        "payload_path": record.payload_path,
        "origin": _origin_to_json(record.item.origin),
    }
    if record.marker_path is not None:
        obj["marker_path"] = record.marker_path
    if record.is_deepfake is not None:
        obj["ground_truth"] = {"is_deepfake": record.is_deepfake}
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_manifest(records: Iterable[ManifestRecord], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(manifest_line(record) + "\n")


def read_manifest(path: Path) -> Iterator[ManifestRecord]:
    """Stream manifest records, loading payload and marker bytes from disk.

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            payload = (base / obj["payload_path"]).read_bytes()
            marker = None
            if obj.get("marker_path"):
                marker = (base / obj["marker_path"]).read_bytes()
            truth = obj.get("ground_truth") or {}
            item = ContentItem(
                id=obj["id"],
                modality=obj["modality"],
                payload=payload,
                origin=_origin_from_json(obj["origin"]),
                marker_block=marker,
            )
            yield ManifestRecord(
                item=item,
                payload_path=obj["payload_path"],
                marker_path=obj.get("marker_path"),
                is_deepfake=truth.get("is_deepfake"),
            )
