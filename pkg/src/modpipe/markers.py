"""The four marking methods and the manipulation-attack battery.

Schemes:

* metadata: the marker travels in the item's marker block, payload
  untouched; trivially removed by stripping the block.
* cryptographic: a detached Ed25519 signature over the payload digest,
  carried in the marker block. The signature binds content, issuer,
  polarity, scheme and key id, so any payload or field change is
  detectable. (Applied uniformly, text included, since the signature is
  detached rather than embedded in pixels.)
* statistical: a keyed pseudorandom pixel subset has the first
  channel's least-significant bits forced to a keyed pattern; blind
  detection correlates surviving LSBs against the pattern.
* frequency: per 8x8 block, two mid-band coefficients of a type-II DCT
  on the first channel are replaced by +/- delta under a keyed sign
  sequence; detection correlates extracted coefficient signs.

Positive polarity leaves the keyed pattern as-is (detection correlation
+1); negative polarity inverts it (correlation -1). Detection therefore
reports a signed correlation and the tau threshold applies to the
positive side for the deepfake-marking use.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.fft import dctn, idctn

from . import wire
from .core import ContentItem, Digest, content_hash, decode_audio, decode_raster, encode_audio, encode_raster
from .errors import (
    BadDimensions,
    DuplicateMarker,
    ImageTooSmall,
    InvalidAttackParams,
    KeyChainMismatch,
    MalformedMarkerBlock,
    NoMarkerFound,
    UnsupportedModality,
)
from .prng import hash_grid, keyed_hash
from .trustchain import CertChain, sign_bytes

logger = logging.getLogger(__name__)

MARKER_MAGIC = b"DFMK"
MARKER_VERSION = 0x01

# Watermark constants: subset size cap, detection threshold, frequency
# strength and the two fixed mid-band coefficient slots.
SELECTION_CAP = 4096
DEFAULT_TAU = 0.5
DEFAULT_DELTA = 4.0
MIDBAND_SLOTS = ((3, 4), (4, 3))

_TAG_SELECT = 0x53454C
_TAG_PATTERN = 0x504154
_TAG_FREQ = 0x465251
_TAG_NOISE = 0x4E4F49


class Scheme(str, Enum):
    METADATA = "metadata"
    FREQUENCY = "frequency"
    CRYPTOGRAPHIC = "cryptographic"
    STATISTICAL = "statistical"


class Polarity(str, Enum):
    POSITIVE = "positive"  # attests "generated or manipulated by AI"
    NEGATIVE = "negative"  # attests authenticity


_SCHEME_BYTES = {
    Scheme.METADATA: 0x01,
    Scheme.FREQUENCY: 0x02,
    Scheme.CRYPTOGRAPHIC: 0x03,
    Scheme.STATISTICAL: 0x04,
}
_BYTE_SCHEMES = {v: k for k, v in _SCHEME_BYTES.items()}
_POLARITY_BYTES = {Polarity.POSITIVE: 0x01, Polarity.NEGATIVE: 0x02}
_BYTE_POLARITIES = {v: k for k, v in _POLARITY_BYTES.items()}


@dataclass(frozen=True)
class Marker:
    """An embedded provenance claim plus the material to verify it."""

    scheme: Scheme
    polarity: Polarity
    issuer_id: str
    payload_digest: Digest
    signature: bytes
    chain: CertChain
    key_id: str = ""

    def __post_init__(self):
        if self.scheme in (Scheme.CRYPTOGRAPHIC, Scheme.METADATA) and not self.signature:
            raise ValueError(f"{self.scheme.value} markers require a signature")
        if self.scheme in (Scheme.STATISTICAL, Scheme.FREQUENCY) and not self.key_id:
            raise ValueError(f"{self.scheme.value} markers require a key_id")

    def signing_body(self) -> bytes:
        # Everything semantically load-bearing is under the signature;
        # the chain is excluded because chain verification stands alone.
        return (
            b"DFSG"
            + wire.u8(_SCHEME_BYTES[self.scheme])
            + wire.u8(_POLARITY_BYTES[self.polarity])
            + wire.str16(self.issuer_id)
            + wire.str16(self.key_id)
            + wire.str16(self.payload_digest.algorithm_id)
            + wire.bytes16(self.payload_digest.digest)
        )

    def to_bytes(self) -> bytes:
        return (
            MARKER_MAGIC
            + wire.u8(MARKER_VERSION)
            + wire.u8(_SCHEME_BYTES[self.scheme])
            + wire.u8(_POLARITY_BYTES[self.polarity])
            + wire.str16(self.issuer_id)
            + wire.str16(self.key_id)
            + wire.str16(self.payload_digest.algorithm_id)
            + wire.bytes16(self.payload_digest.digest)
            + wire.bytes16(self.signature)
            + self.chain.to_bytes()
        )

    @classmethod
    def read_from(cls, reader: wire.Reader) -> "Marker":
        if reader.take(4) != MARKER_MAGIC:
            raise wire.WireError("missing marker magic")
        version = reader.u8()
        if version != MARKER_VERSION:
            raise wire.WireError(f"unsupported marker version {version}")
        scheme_b, polarity_b = reader.u8(), reader.u8()
        if scheme_b not in _BYTE_SCHEMES or polarity_b not in _BYTE_POLARITIES:
            raise wire.WireError("unknown scheme or polarity byte")
        return cls(
            scheme=_BYTE_SCHEMES[scheme_b],
            polarity=_BYTE_POLARITIES[polarity_b],
            issuer_id=reader.str16(),
            key_id=reader.str16(),
            payload_digest=Digest(reader.str16(), reader.bytes16()),
            signature=reader.bytes16(),
            chain=CertChain.read_from(reader),
        )


# ---------------------------------------------------------------------------
# Marker block: one or more DFMK records concatenated
# ---------------------------------------------------------------------------

def parse_marker_block(block: bytes) -> list[Marker]:
    """All markers in a block.

    Raises NoMarkerFound when the block does not even start with the
    magic, MalformedMarkerBlock when the magic matches but parsing fails
    (tamper evidence, treated differently downstream).
    """
    if not block or block[:4] != MARKER_MAGIC:
        raise NoMarkerFound("no marker block present")
    reader = wire.Reader(block)
    markers = []
    while not reader.done():
        try:
            markers.append(Marker.read_from(reader))
        except (wire.WireError, ValueError) as exc:
            raise MalformedMarkerBlock(str(exc)) from exc
    return markers


def embed_metadata_marker(item: ContentItem, marker: Marker) -> ContentItem:
    """Append a marker record to the item's metadata block.

    Payload bytes are untouched by construction; the returned item's
    digest equals the input's.
    """
    existing: list[Marker] = []
    if item.marker_block is not None:
        existing = parse_marker_block(item.marker_block)
        if any(m.issuer_id == marker.issuer_id for m in existing):
            raise DuplicateMarker(f"issuer {marker.issuer_id!r} already has a marker")
    block = (item.marker_block or b"") + marker.to_bytes()
    return item.with_marker_block(block)


def extract_metadata_marker(item: ContentItem) -> Marker:
    """First marker in the block; NoMarkerFound when absent.

    Never raises on arbitrary non-magic bytes beyond NoMarkerFound;
    MalformedMarkerBlock signals a recognizable but unparseable block.
    """
    if item.marker_block is None:
        raise NoMarkerFound("item carries no marker block")
    return parse_marker_block(item.marker_block)[0]


def sign_content(
    item: ContentItem,
    issuer_secret: bytes,
    polarity: Polarity,
    chain: CertChain,
    scheme: Scheme = Scheme.CRYPTOGRAPHIC,
    key_id: str = "",
) -> Marker:
    """Create a chain-backed signed marker over the item's payload digest."""
    from .trustchain import generate_keypair

    _, public = generate_keypair(issuer_secret)
    if not chain.certs or chain.leaf.public_key != public:
        raise KeyChainMismatch("issuer key's public half is not the chain leaf")
    digest = content_hash(item)
    unsigned = Marker(
        scheme=scheme,
        polarity=polarity,
        issuer_id=chain.leaf.subject_id,
        payload_digest=digest,
        signature=b"\0",  # placeholder, replaced below
        chain=chain,
        key_id=key_id,
    )
    return replace(unsigned, signature=sign_bytes(issuer_secret, unsigned.signing_body()))


# ---------------------------------------------------------------------------
# Statistical (LSB) watermark
# ---------------------------------------------------------------------------

def _first_channel(pixels: np.ndarray) -> np.ndarray:
    return pixels if pixels.ndim == 2 else pixels[:, :, 0]


@lru_cache(maxsize=256)
def _selection(key: int, full_w: int, full_h: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keyed pixel subset and bit pattern over an original-geometry grid.

    Selection scores are keyed per coordinate, so a detector that knows
    where a cropped region sat in the original image can recompute the
    surviving subset. Returns (xs, ys, pattern_bits) of length
    min(SELECTION_CAP, full_w * full_h), deterministically ordered.
    Cached per (key, geometry); callers must treat the arrays as
    read-only.
    """
    ys, xs = np.mgrid[0:full_h, 0:full_w]
    xs = xs.ravel()
    ys = ys.ravel()
    scores = hash_grid(key, _TAG_SELECT, xs, ys)
    k = min(SELECTION_CAP, xs.size)
    # lexsort tiebreak on linear index keeps the selection exact and stable
    order = np.lexsort((np.arange(xs.size), scores))[:k]
    sel_x, sel_y = xs[order], ys[order]
    pattern = (hash_grid(key, _TAG_PATTERN, sel_x, sel_y) & np.uint64(1)).astype(np.uint8)
    return sel_x, sel_y, pattern


def embed_statistical(item: ContentItem, key: int, polarity: Polarity) -> ContentItem:
    """Force selected first-channel LSBs to pattern XOR polarity bit.

    Per-pixel change is at most 1, the imperceptibility proxy.
    """
    if item.modality != "raster":
        raise UnsupportedModality("statistical watermark requires a raster")
    pixels = decode_raster(item.payload)
    h, w = pixels.shape[:2]
    if w * h < 64:
        raise ImageTooSmall(f"{w}x{h} raster has fewer than 64 pixels")
    xs, ys, pattern = _selection(key, w, h)
    bit = 0 if polarity is Polarity.POSITIVE else 1
    channel = _first_channel(pixels)
    channel[ys, xs] = (channel[ys, xs] & 0xFE) | (pattern ^ bit)
    return item.with_payload(encode_raster(pixels))


def detect_statistical(
    item: ContentItem,
    key: int,
    region: Optional[tuple[int, int, int, int]] = None,
) -> float:
    """Signed correlation of first-channel LSBs against the keyed pattern.

    ``region`` = (x0, y0, full_w, full_h) places this raster inside the
    original marked geometry (crop-aware detection); default assumes the
    item is the original. Correlation is computed over the selected
    pixels that survive inside the region; +1 means an intact positive
    mark, -1 an intact negative mark, near 0 no mark under this key.
    """
    if item.modality != "raster":
        raise UnsupportedModality("statistical detection requires a raster")
    pixels = decode_raster(item.payload)
    h, w = pixels.shape[:2]
    x0, y0, full_w, full_h = region if region is not None else (0, 0, w, h)
    if full_w * full_h < 64:
        raise ImageTooSmall(f"{full_w}x{full_h} geometry has fewer than 64 pixels")
    xs, ys, pattern = _selection(key, full_w, full_h)
    inside = (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)
    if not inside.any():
        return 0.0
    lsb = _first_channel(pixels)[ys[inside] - y0, xs[inside] - x0] & 1
    matches = float(np.mean(lsb == pattern[inside]))
    return 2.0 * matches - 1.0


# ---------------------------------------------------------------------------
# Frequency (block-DCT) watermark
# ---------------------------------------------------------------------------

def _to_blocks(channel: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Edge-pad to multiples of 8 and reshape to (by, bx, 8, 8) float64."""
    h, w = channel.shape
    pad_h, pad_w = (-h) % 8, (-w) % 8
    padded = np.pad(channel.astype(np.float64), ((0, pad_h), (0, pad_w)), mode="edge")
    ph, pw = padded.shape
    blocks = padded.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3)
    return blocks, h, w


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    by, bx = blocks.shape[:2]
    merged = blocks.transpose(0, 2, 1, 3).reshape(by * 8, bx * 8)
    return np.clip(np.rint(merged[:h, :w]), 0, 255).astype(np.uint8)


@lru_cache(maxsize=256)
def _keyed_signs(key: int, by: int, bx: int) -> np.ndarray:
    """+/-1 sign per (block row, block col, slot), keyed and crop-fragile.

    Cached per (key, block grid); treat the array as read-only.
    """
    ys, xs = np.mgrid[0:by, 0:bx]
    signs = np.empty((by, bx, len(MIDBAND_SLOTS)), dtype=np.float64)
    for j in range(len(MIDBAND_SLOTS)):
        bits = hash_grid(keyed_hash(key, _TAG_FREQ, j), _TAG_FREQ, xs.ravel(), ys.ravel())
        signs[:, :, j] = (1.0 - 2.0 * (bits & np.uint64(1)).astype(np.float64)).reshape(by, bx)
    return signs


def embed_frequency(
    item: ContentItem, key: int, polarity: Polarity, delta: float = DEFAULT_DELTA
) -> ContentItem:
    """Replace two mid-band DCT coefficients per block with keyed signs.

    The coefficient is set to sign * delta (sign XOR polarity), which
    forces the detected sign deterministically; rounding after the
    inverse transform is the only slip source.
    """
    if item.modality != "raster":
        raise UnsupportedModality("frequency watermark requires a raster")
    pixels = decode_raster(item.payload)
    h, w = pixels.shape[:2]
    if h < 8 or w < 8:
        raise BadDimensions(f"{w}x{h} raster is smaller than one 8x8 block")
    channel = _first_channel(pixels)
    blocks, h, w = _to_blocks(channel)
    coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
    signs = _keyed_signs(key, blocks.shape[0], blocks.shape[1])
    if polarity is Polarity.NEGATIVE:
        signs = -signs
    for j, (u, v) in enumerate(MIDBAND_SLOTS):
        coeffs[:, :, u, v] = signs[:, :, j] * delta
    marked = _from_blocks(idctn(coeffs, axes=(-2, -1), norm="ortho"), h, w)
    if pixels.ndim == 2:
        pixels = marked
    else:
        pixels[:, :, 0] = marked
    return item.with_payload(encode_raster(pixels))


def detect_frequency(item: ContentItem, key: int) -> float:
    """Signed correlation between extracted coefficient signs and the key."""
    if item.modality != "raster":
        raise UnsupportedModality("frequency detection requires a raster")
    pixels = decode_raster(item.payload)
    h, w = pixels.shape[:2]
    if h < 8 or w < 8:
        raise BadDimensions(f"{w}x{h} raster is smaller than one 8x8 block")
    blocks, _, _ = _to_blocks(_first_channel(pixels))
    coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
    signs = _keyed_signs(key, blocks.shape[0], blocks.shape[1])
    agreements = []
    for j, (u, v) in enumerate(MIDBAND_SLOTS):
        extracted = np.where(coeffs[:, :, u, v] >= 0.0, 1.0, -1.0)
        agreements.append(extracted == signs[:, :, j])
    return 2.0 * float(np.mean(np.concatenate([a.ravel() for a in agreements]))) - 1.0


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackSpec:
    """A manipulation attack: kind plus kind-specific parameters.

    recompress: q >= 1 quantization step (round-half-up to multiples of q)
    crop: rect = (x, y, w, h) inside the image
    noise: sigma >= 0 amplitude of seeded uniform integer noise, seed
    strip_metadata: no parameters
    """

    kind: str
    q: Optional[int] = None
    rect: Optional[tuple[int, int, int, int]] = None
    sigma: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("strip_metadata", "recompress", "crop", "noise"):
            raise InvalidAttackParams(f"unknown attack kind {self.kind!r}")
        if self.kind == "recompress" and (self.q is None or self.q < 1):
            raise InvalidAttackParams("recompress requires q >= 1")
        if self.kind == "crop" and self.rect is None:
            raise InvalidAttackParams("crop requires a rectangle")
        if self.kind == "noise" and (self.sigma is None or self.sigma < 0):
            raise InvalidAttackParams("noise requires sigma >= 0")


def _quantize_half_up(values: np.ndarray, q: int, lo: int, hi: int) -> np.ndarray:
    out = np.floor(values.astype(np.float64) / q + 0.5) * q
    return np.clip(out, lo, hi)


def _uniform_noise(seed: int, sigma: int, n: int) -> np.ndarray:
    """Seeded uniform integers in [-sigma, sigma] from the keyed generator."""
    idx = np.arange(n, dtype=np.uint64)
    draws = hash_grid(seed, _TAG_NOISE, idx, np.zeros(n, dtype=np.uint64))
    return (draws % np.uint64(2 * sigma + 1)).astype(np.int64) - sigma


def apply_attack(item: ContentItem, attack: AttackSpec) -> ContentItem:
    """Deterministically manipulate an item per the attack spec."""
    if attack.kind == "strip_metadata":
        return item.with_marker_block(None)

    if item.modality == "text":
        raise InvalidAttackParams(f"{attack.kind} does not apply to text")

    if attack.kind == "recompress":
        if item.modality == "raster":
            pixels = decode_raster(item.payload)
            out = _quantize_half_up(pixels, attack.q, 0, 255).astype(np.uint8)
            return item.with_payload(encode_raster(out))
        rate, samples = decode_audio(item.payload)
        out = _quantize_half_up(samples, attack.q, -32768, 32767).astype(np.int16)
        return item.with_payload(encode_audio(rate, out))

    if attack.kind == "crop":
        if item.modality != "raster":
            raise InvalidAttackParams("crop applies to rasters only")
        pixels = decode_raster(item.payload)
        h, w = pixels.shape[:2]
        x, y, cw, ch = attack.rect
        if x < 0 or y < 0 or cw < 1 or ch < 1 or x + cw > w or y + ch > h:
            raise InvalidAttackParams(f"crop rect {attack.rect} outside {w}x{h}")
        return item.with_payload(encode_raster(pixels[y : y + ch, x : x + cw].copy()))

    # noise
    if attack.sigma == 0:
        return item
    if item.modality == "raster":
        pixels = decode_raster(item.payload)
        noise = _uniform_noise(attack.seed, attack.sigma, pixels.size).reshape(pixels.shape)
        out = np.clip(pixels.astype(np.int64) + noise, 0, 255).astype(np.uint8)
        return item.with_payload(encode_raster(out))
    rate, samples = decode_audio(item.payload)
    noise = _uniform_noise(attack.seed, attack.sigma, samples.size)
    out = np.clip(samples.astype(np.int64) + noise, -32768, 32767).astype(np.int16)
    return item.with_payload(encode_audio(rate, out))


def standard_attack_battery(width: int, height: int) -> list[AttackSpec]:
    """The fixed battery used for the vulnerability matrix.

    Parameters are engineering choices sized so each scheme has at
    least one defeating attack: stripping kills block-carried markers,
    q=2 recompression zeroes LSBs, a block-misaligning crop breaks the
    DCT grid, and heavy noise swamps coefficient signs.
    """
    return [
        AttackSpec(kind="strip_metadata"),
        AttackSpec(kind="recompress", q=2),
        AttackSpec(kind="recompress", q=16),
        AttackSpec(kind="crop", rect=(4, 4, ((width - 4) // 8) * 8, ((height - 4) // 8) * 8)),
        AttackSpec(kind="noise", sigma=48, seed=0xA77AC4),
    ]
