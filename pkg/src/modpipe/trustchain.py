"""Certification-chain verification for provenance markers.

A marker is only as trustworthy as the chain from its issuer up to a
root the platform already trusts, so markers embed the full chain and
verification walks it leaf-to-root: every link signature, every
validity window, and bytewise root membership in the trust store.

Signatures are Ed25519 (deterministic, RFC 8032) over the length-
prefixed binary forms defined here; certificates sign the complete
subject body (ids, key, validity) so any single-field mutation is
tamper-evident.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import wire
from .core import ContentItem, Digest, content_hash
from .errors import MalformedPayload

if TYPE_CHECKING:  # avoid a runtime cycle with markers.py
    from .markers import Marker

logger = logging.getLogger(__name__)

SIGNATURE_ALGORITHM_ID = "ed25519"


def generate_keypair(seed32: bytes) -> tuple[bytes, bytes]:
    """Derive an Ed25519 keypair from 32 seed bytes; returns (secret, public)."""
    if len(seed32) != 32:
        raise ValueError("seed must be exactly 32 bytes")
    sk = Ed25519PrivateKey.from_private_bytes(seed32)
    return seed32, _public_bytes(sk.public_key())


def _public_bytes(pk: Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return pk.public_bytes(Encoding.Raw, PublicFormat.Raw)


def sign_bytes(secret: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


def verify_bytes(public: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


class ChainFailure(str, Enum):
    BROKEN_LINK = "BrokenLink"
    EXPIRED = "Expired"
    UNTRUSTED_ROOT = "UntrustedRoot"
    MALFORMED_CERT = "MalformedCert"


class VerificationStatus(str, Enum):
    VALID_POSITIVE = "valid_positive"
    VALID_NEGATIVE = "valid_negative"
    INVALID = "invalid"
    ABSENT = "absent"


@dataclass(frozen=True)
class Certificate:
    """A subject key endorsed by its issuer (self-signed when root)."""

    subject_id: str
    public_key: bytes
    issuer_id: str
    not_before: int
    not_after: int
    signature: bytes = b""

    @property
    def is_root(self) -> bool:
        return self.subject_id == self.issuer_id

    def signing_body(self) -> bytes:
        # The parent signs everything but the signature itself, validity
        # included, so expiry windows cannot be silently rewritten.
        return (
            wire.str16(self.subject_id)
            + wire.bytes16(self.public_key)
            + wire.str16(self.issuer_id)
            + wire.u64(self.not_before)
            + wire.u64(self.not_after)
        )

    def to_bytes(self) -> bytes:
        return self.signing_body() + wire.bytes16(self.signature)

    @classmethod
    def read_from(cls, reader: wire.Reader) -> "Certificate":
        return cls(
            subject_id=reader.str16(),
            public_key=reader.bytes16(),
            issuer_id=reader.str16(),
            not_before=reader.u64(),
            not_after=reader.u64(),
            signature=reader.bytes16(),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        reader = wire.Reader(data)
        cert = cls.read_from(reader)
        if not reader.done():
            raise wire.WireError("trailing bytes after certificate")
        return cert


def issue_certificate(
    subject_id: str,
    subject_public: bytes,
    issuer_id: str,
    issuer_secret: bytes,
    not_before: int,
    not_after: int,
) -> Certificate:
    cert = Certificate(subject_id, subject_public, issuer_id, not_before, not_after)
    return Certificate(
        subject_id,
        subject_public,
        issuer_id,
        not_before,
        not_after,
        sign_bytes(issuer_secret, cert.signing_body()),
    )


@dataclass(frozen=True)
class CertChain:
    """Certificates ordered leaf to root."""

    certs: tuple[Certificate, ...]

    def __post_init__(self):
        object.__setattr__(self, "certs", tuple(self.certs))

    @property
    def leaf(self) -> Certificate:
        return self.certs[0]

    @property
    def root(self) -> Certificate:
        return self.certs[-1]

    def to_bytes(self) -> bytes:
        out = wire.u16(len(self.certs))
        for cert in self.certs:
            out += wire.bytes16(cert.to_bytes())
        return out

    @classmethod
    def read_from(cls, reader: wire.Reader) -> "CertChain":
        count = reader.u16()
        certs = [Certificate.from_bytes(reader.bytes16()) for _ in range(count)]
        return cls(tuple(certs))

    @classmethod
    def from_bytes(cls, data: bytes) -> "CertChain":
        reader = wire.Reader(data)
        chain = cls.read_from(reader)
        if not reader.done():
            raise wire.WireError("trailing bytes after chain")
        return chain


@dataclass(frozen=True)
class MarkerVerification:
    """Outcome of the level-1 marker check."""

    status: VerificationStatus
    reasons: tuple[str, ...] = ()
    marker: Optional["Marker"] = None

    def __post_init__(self):
        object.__setattr__(self, "reasons", tuple(self.reasons))
        if self.status in (VerificationStatus.VALID_POSITIVE, VerificationStatus.VALID_NEGATIVE):
            assert not self.reasons, "valid verification must not carry reasons"
        if self.status is VerificationStatus.INVALID:
            assert self.reasons, "invalid verification must carry at least one reason"


class TrustStore:
    """Set of trusted root certificates, matched bytewise."""

    def __init__(self, roots: list[Certificate]):
        self.roots = list(roots)
        self._root_bytes = {cert.to_bytes() for cert in roots}

    def contains(self, cert: Certificate) -> bool:
        return cert.to_bytes() in self._root_bytes

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for raw in sorted(self._root_bytes):
            h.update(raw)
        return h.hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            [base64.b64encode(cert.to_bytes()).decode("ascii") for cert in self.roots]
        )

    @classmethod
    def from_json(cls, text: str) -> "TrustStore":
        return cls([Certificate.from_bytes(base64.b64decode(b)) for b in json.loads(text)])

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "TrustStore":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _verify_chain_static(chain_bytes: bytes, root_fingerprints: frozenset[bytes]):
    """Time-independent chain checks plus the intersected validity window.

    Returns (failure or None, window_lo, window_hi); the caller applies
    the `now in window` check, which is the only part that varies per
    call, so one cache entry serves a whole batch.
    """
    try:
        chain = CertChain.from_bytes(chain_bytes)
    except (wire.WireError, ValueError):
        return ChainFailure.MALFORMED_CERT, 0, 0
    if not chain.certs:
        return ChainFailure.MALFORMED_CERT, 0, 0
    for i, cert in enumerate(chain.certs):
        parent = chain.certs[i + 1] if i + 1 < len(chain.certs) else cert
        if i + 1 < len(chain.certs) and cert.issuer_id != parent.subject_id:
            return ChainFailure.BROKEN_LINK, 0, 0
        if i + 1 == len(chain.certs) and not cert.is_root:
            return ChainFailure.BROKEN_LINK, 0, 0
        if not verify_bytes(parent.public_key, cert.signature, cert.signing_body()):
            return ChainFailure.BROKEN_LINK, 0, 0
    if chain.root.to_bytes() not in root_fingerprints:
        return ChainFailure.UNTRUSTED_ROOT, 0, 0
    window_lo = max(cert.not_before for cert in chain.certs)
    window_hi = min(cert.not_after for cert in chain.certs)
    return None, window_lo, window_hi


# High-throughput paths verify the same chain for every item; cache keyed
# on the exact chain bytes and store contents so a hit can never mask a
# changed input.
_chain_cache = lru_cache(maxsize=4096)(_verify_chain_static)


def verify_chain(
    chain: CertChain, trust_store: TrustStore, now: int
) -> Optional[ChainFailure]:
    """None when the chain verifies; otherwise the first failure code."""
    if not chain.certs:
        return ChainFailure.MALFORMED_CERT
    failure, lo, hi = _chain_cache(chain.to_bytes(), frozenset(trust_store._root_bytes))
    if failure is not None:
        return failure
    if not (lo <= now <= hi):
        return ChainFailure.EXPIRED
    return None


def verify_marker(
    marker: "Marker", item: ContentItem, trust_store: TrustStore, now: int
) -> MarkerVerification:
    """Full level-1 verification of one marker against one item.

    Valid only when the chain verifies, the marker signature verifies
    under the leaf key, and the signed digest matches the item's payload
    hash. Total: never raises; all failures become reasons.
    """
    reasons: list[str] = []
    failure = verify_chain(marker.chain, trust_store, now)
    if failure is not None:
        reasons.append(failure.value)
    if not verify_bytes(
        marker.chain.leaf.public_key if marker.chain.certs else b"",
        marker.signature,
        marker.signing_body(),
    ):
        reasons.append("SignatureInvalid")
    try:
        digest = content_hash(item)
    except MalformedPayload:
        reasons.append("MalformedPayload")
        digest = None
    if digest is not None and (
        marker.payload_digest.algorithm_id != digest.algorithm_id
        or marker.payload_digest.digest != digest.digest
    ):
        reasons.append("DigestMismatch")
    if reasons:
        return MarkerVerification(VerificationStatus.INVALID, tuple(reasons), marker)
    from .markers import Polarity

    status = (
        VerificationStatus.VALID_POSITIVE
        if marker.polarity is Polarity.POSITIVE
        else VerificationStatus.VALID_NEGATIVE
    )
    return MarkerVerification(status, (), marker)
