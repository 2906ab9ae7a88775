import hashlib

import numpy as np
import pytest

from modpipe.core import ContentItem, OriginContext, encode_audio, encode_raster
from modpipe.corpus import smooth_raster
from modpipe.trustchain import CertChain, TrustStore, generate_keypair, issue_certificate

NOW = 1_700_000_000
NOT_BEFORE = 1_500_000_000
NOT_AFTER = 4_000_000_000


def seeded_secret(tag: str) -> bytes:
    return hashlib.sha256(tag.encode()).digest()


@pytest.fixture
def pki():
    """Root -> intermediate -> leaf chain plus a store trusting the root."""
    root_secret, root_public = generate_keypair(seeded_secret("root"))
    mid_secret, mid_public = generate_keypair(seeded_secret("mid"))
    leaf_secret, leaf_public = generate_keypair(seeded_secret("leaf"))
    root = issue_certificate("root", root_public, "root", root_secret, NOT_BEFORE, NOT_AFTER)
    mid = issue_certificate("mid", mid_public, "root", root_secret, NOT_BEFORE, NOT_AFTER)
    leaf = issue_certificate("issuer-1", leaf_public, "mid", mid_secret, NOT_BEFORE, NOT_AFTER)
    return {
        "chain": CertChain((leaf, mid, root)),
        "store": TrustStore([root]),
        "leaf_secret": leaf_secret,
        "mid_secret": mid_secret,
        "root_secret": root_secret,
        "root": root,
        "mid": mid,
        "leaf": leaf,
    }


def raster_item(item_id: str = "img-1", seed: int = 1, size: int = 64) -> ContentItem:
    pixels = smooth_raster(seed, size, size)
    return ContentItem(id=item_id, modality="raster", payload=encode_raster(pixels))


def noisy_raster_item(item_id: str = "rng-1", seed: int = 1, size: int = 64) -> ContentItem:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, (size, size), dtype=np.uint8)
    return ContentItem(id=item_id, modality="raster", payload=encode_raster(pixels))


def text_item(item_id: str = "txt-1", text: str = "hello world") -> ContentItem:
    return ContentItem(id=item_id, modality="text", payload=text.encode("utf-8"))


def audio_item(item_id: str = "aud-1", seed: int = 1, n: int = 4096) -> ContentItem:
    rng = np.random.default_rng(seed)
    samples = rng.integers(-2000, 2000, n, dtype=np.int16)
    return ContentItem(id=item_id, modality="audio", payload=encode_audio(16000, samples))


def high_risk_origin() -> OriginContext:
    return OriginContext(
        source_id="s-1", category_tags=frozenset({"political_communication"}), expected_reach=10
    )


def low_risk_origin() -> OriginContext:
    return OriginContext(source_id="s-2", category_tags=frozenset({"animals"}), expected_reach=10)
