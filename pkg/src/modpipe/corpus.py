"""Synthetic corpus generation for desk-scale evaluation.

Corpora are fully seeded: item payloads, marker coverage draws,
category assignment, tampering, and the issuing PKI all derive from the
corpus seed, so the same spec yields a bytewise-identical corpus.

Deepfakes come in two realizations: generator-marked ones carry a
statistical watermark under a registry key plus a signed positive
metadata marker (level-1 detectable, residue-detectable after marker
stripping), and unmarked ones are only visible to the detection
channel. A tamper fraction of the marked items gets marker-block
mutations, modeling manipulation in transit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ContentItem, ManifestRecord, OriginContext, encode_raster, write_manifest
from .detection import TrustedVerdict, VerifierProfile
from .markers import Polarity, Scheme, embed_metadata_marker, embed_statistical, sign_content
from .prng import hash_grid, keyed_hash, uniform01
from .trustchain import CertChain, TrustStore, generate_keypair, issue_certificate

logger = logging.getLogger(__name__)

DEFAULT_CATEGORY_MIX = {
    "animals": 0.45,
    "sports": 0.25,
    "political_communication": 0.2,
    "elections": 0.1,
}

_TAG_IMAGE = 0x494D47
_TAG_FAKE = 0x46414B
_TAG_COVER = 0x434F56
_TAG_NEG = 0x4E4547
_TAG_TAMPER = 0x54414D
_TAG_CAT = 0x434154
_TAG_REACH = 0x524348
_TAG_VERDICT = 0x564552

VALIDITY_START = 1_500_000_000
VALIDITY_END = 4_000_000_000
CORPUS_NOW = 1_700_000_000


@dataclass(frozen=True)
class PoolSpec:
    n: int = 9
    accuracy: float = 0.8
    quorum: int = 3

    def to_json(self) -> dict:
        return {"n": self.n, "accuracy": self.accuracy, "quorum": self.quorum}

    @classmethod
    def from_json(cls, obj: dict) -> "PoolSpec":
        return cls(int(obj["n"]), float(obj["accuracy"]), int(obj["quorum"]))


@dataclass(frozen=True)
class CorpusSpec:
    n_items: int
    deepfake_fraction: float = 0.5
    marker_coverage: float = 0.3
    negative_marker_coverage: float = 0.1
    tamper_fraction: float = 0.0
    category_mix: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORY_MIX))
    detector_tpr: float = 0.8
    detector_fpr: float = 0.1
    pool: PoolSpec = field(default_factory=PoolSpec)
    seed: int = 0
    image_size: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.n_items <= 0:
            raise ValueError("n_items must be positive")
        for name in ("deepfake_fraction", "marker_coverage", "negative_marker_coverage", "tamper_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "n_items": self.n_items,
            "deepfake_fraction": self.deepfake_fraction,
            "marker_coverage": self.marker_coverage,
            "negative_marker_coverage": self.negative_marker_coverage,
            "tamper_fraction": self.tamper_fraction,
            "category_mix": dict(self.category_mix),
            "detector_channel": {"tpr": self.detector_tpr, "fpr": self.detector_fpr},
            "verifier_pool": self.pool.to_json(),
            "seed": self.seed,
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusSpec":
        channel = obj.get("detector_channel", {})
        return cls(
            n_items=int(obj["n_items"]),
            deepfake_fraction=float(obj.get("deepfake_fraction", 0.5)),
            marker_coverage=float(obj.get("marker_coverage", 0.3)),
            negative_marker_coverage=float(obj.get("negative_marker_coverage", 0.1)),
            tamper_fraction=float(obj.get("tamper_fraction", 0.0)),
            category_mix=dict(obj.get("category_mix", DEFAULT_CATEGORY_MIX)),
            detector_tpr=float(channel.get("tpr", 0.8)),
            detector_fpr=float(channel.get("fpr", 0.1)),
            pool=PoolSpec.from_json(obj["verifier_pool"]) if "verifier_pool" in obj else PoolSpec(),
            seed=int(obj.get("seed", 0)),
            image_size=tuple(obj.get("image_size", (64, 64))),
        )

    @classmethod
    def load(cls, path: Path) -> "CorpusSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def smooth_raster(key: int, width: int, height: int) -> np.ndarray:
    """Low-frequency cosine mixture plus light texture noise.

    Models natural content: most energy below the watermark mid-band,
    so frequency marking stays near-invisible and empirically bounded.
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.full((height, width), 128.0)
    for m in range(3):
        fx = (keyed_hash(key, _TAG_IMAGE, m, 0) % 5 + 1) / (4.0 * width)
        fy = (keyed_hash(key, _TAG_IMAGE, m, 1) % 5 + 1) / (4.0 * height)
        phase = uniform01(key, _TAG_IMAGE, m, 2) * 2 * np.pi
        amp = 20.0 + 15.0 * uniform01(key, _TAG_IMAGE, m, 3)
        img += amp * np.cos(2 * np.pi * (fx * xs + fy * ys) + phase)
    grain = hash_grid(key, _TAG_IMAGE, xs.astype(np.uint64).ravel(), ys.astype(np.uint64).ravel())
    img += ((grain % np.uint64(7)).astype(np.float64).reshape(height, width) - 3.0)
    return np.clip(np.rint(img), 8, 247).astype(np.uint8)


@dataclass
class IssuerBundle:
    """A three-level PKI: root, intermediate, and a marking issuer."""

    issuer_secret: bytes
    chain: CertChain
    trust_store: TrustStore


def build_issuer(seed: int, label: str = "generator") -> IssuerBundle:
    def seeded_key(tag: str) -> tuple[bytes, bytes]:
        return generate_keypair(hashlib.sha256(f"{seed}:{label}:{tag}".encode()).digest())

    root_secret, root_public = seeded_key("root")
    mid_secret, mid_public = seeded_key("intermediate")
    leaf_secret, leaf_public = seeded_key("leaf")
    root = issue_certificate(
        f"{label}-root", root_public, f"{label}-root", root_secret, VALIDITY_START, VALIDITY_END
    )
    mid = issue_certificate(
        f"{label}-intermediate", mid_public, f"{label}-root", root_secret, VALIDITY_START, VALIDITY_END
    )
    leaf = issue_certificate(
        f"{label}-issuer", leaf_public, f"{label}-intermediate", mid_secret, VALIDITY_START, VALIDITY_END
    )
    return IssuerBundle(leaf_secret, CertChain((leaf, mid, root)), TrustStore([root]))


def _pick_category(spec: CorpusSpec, u: float) -> str:
    acc = 0.0
    names = list(spec.category_mix)
    total = sum(spec.category_mix.values())
    for name in names:
        acc += spec.category_mix[name] / total
        if u < acc:
            return name
    return names[-1]


def _mutate_block(block: bytes, key: int) -> bytes:
    # Flip one byte somewhere in the serialized markers: depending on
    # position this parses but fails verification, or fails to parse.
    pos = keyed_hash(key, _TAG_TAMPER, 0) % len(block)
    flip = (keyed_hash(key, _TAG_TAMPER, 1) % 255) + 1
    mutated = bytearray(block)
    mutated[pos] ^= flip
    return bytes(mutated)


@dataclass
class Corpus:
    spec: CorpusSpec
    records: list[ManifestRecord]
    truth: dict[str, bool]
    trust_store: TrustStore
    generator_keys: dict[str, int]
    issuer: IssuerBundle
    out_dir: Optional[Path] = None


def generate_corpus(spec: CorpusSpec, out_dir: Optional[Path] = None) -> Corpus:
    """Build (and optionally write) a seeded corpus per the spec."""
    issuer = build_issuer(spec.seed)
    registry = {
        f"gen-key-{i:02d}": keyed_hash(spec.seed, _TAG_COVER, i, 0x4B4559) for i in range(2)
    }
    registry_items = sorted(registry.items())
    width, height = spec.image_size
    records: list[ManifestRecord] = []
    truth: dict[str, bool] = {}
    for i in range(spec.n_items):
        item_id = f"item-{i:06d}"
        is_fake = uniform01(spec.seed, _TAG_FAKE, i) < spec.deepfake_fraction
        pixels = smooth_raster(keyed_hash(spec.seed, _TAG_IMAGE, i), width, height)
        category = _pick_category(spec, uniform01(spec.seed, _TAG_CAT, i))
        reach = int(10 ** (uniform01(spec.seed, _TAG_REACH, i) * 6))
        origin = OriginContext(
            source_id=f"source-{keyed_hash(spec.seed, _TAG_REACH, i, 1) % 50:02d}",
            category_tags=frozenset({category}),
            expected_reach=reach,
        )
        item = ContentItem(id=item_id, modality="raster", payload=encode_raster(pixels), origin=origin)
        if is_fake:
            covered = uniform01(spec.seed, _TAG_COVER, i) < spec.marker_coverage
            if covered:
                key_id, key = registry_items[i % len(registry_items)]
                item = embed_statistical(item, key, Polarity.POSITIVE)
                marker = sign_content(
                    item,
                    issuer.issuer_secret,
                    Polarity.POSITIVE,
                    issuer.chain,
                    scheme=Scheme.METADATA,
                    key_id=key_id,
                )
                item = embed_metadata_marker(item, marker)
                if uniform01(spec.seed, _TAG_TAMPER, i) < spec.tamper_fraction:
                    item = item.with_marker_block(
                        _mutate_block(item.marker_block, keyed_hash(spec.seed, _TAG_TAMPER, i))
                    )
        else:
            if uniform01(spec.seed, _TAG_NEG, i) < spec.negative_marker_coverage:
                marker = sign_content(
                    item, issuer.issuer_secret, Polarity.NEGATIVE, issuer.chain, scheme=Scheme.METADATA
                )
                item = embed_metadata_marker(item, marker)
        truth[item_id] = is_fake
        records.append(
            ManifestRecord(
                item=item,
                payload_path=f"media/{item_id}.pgm",
                marker_path=f"media/{item_id}.marker" if item.marker_block is not None else None,
                is_deepfake=is_fake,
            )
        )
    corpus = Corpus(spec, records, truth, issuer.trust_store, registry, issuer, out_dir)
    if out_dir is not None:
        _write_corpus(corpus, Path(out_dir))
    return corpus


def _write_corpus(corpus: Corpus, out_dir: Path) -> None:
    media = out_dir / "media"
    media.mkdir(parents=True, exist_ok=True)
    for record in corpus.records:
        (out_dir / record.payload_path).write_bytes(record.item.payload)
        if record.marker_path is not None:
            (out_dir / record.marker_path).write_bytes(record.item.marker_block)
    write_manifest(corpus.records, out_dir / "manifest.jsonl")
    (out_dir / "truth.json").write_text(
        json.dumps(corpus.truth, sort_keys=True, indent=1), encoding="utf-8"
    )
    corpus.trust_store.save(out_dir / "trust_store.json")
    (out_dir / "generator_keys.json").write_text(
        json.dumps({k: hex(v) for k, v in corpus.generator_keys.items()}, sort_keys=True),
        encoding="utf-8",
    )
    (out_dir / "spec.json").write_text(
        json.dumps(corpus.spec.to_json(), sort_keys=True, indent=1), encoding="utf-8"
    )


def evaluation_engine(corpus: Corpus, log, config=None, await_trusted: str = "always"):
    """Standard batch engine over a generated corpus.

    Uses the corpus's simulated detection channel plus the residue
    detector, its verifier pool, and (by default) awaits trusted
    detection for every item so decisions come out final.
    """
    from .detection import ResidueDetector, SimulatedDetector
    from .pipeline import EngineConfig, EscalationPolicy, ModerationEngine

    if config is None:
        config = EngineConfig()
    config = EngineConfig(
        scoring=config.scoring,
        risk=config.risk,
        detection=config.detection,
        escalation=EscalationPolicy(
            await_trusted=await_trusted,
            review_ttl_hours=config.escalation.review_ttl_hours,
        ),
    )
    detectors = [
        ResidueDetector(corpus.generator_keys, tau=config.detection.tau),
        SimulatedDetector(
            corpus.spec.detector_tpr,
            corpus.spec.detector_fpr,
            seed=keyed_hash(corpus.spec.seed, 0x444554),
        ),
    ]
    pool = SimulatedVerifierPool(corpus.spec.pool, seed=keyed_hash(corpus.spec.seed, _TAG_VERDICT))
    return ModerationEngine(config, corpus.trust_store, detectors, log, verifier_pool=pool)


class SimulatedVerifierPool:
    """A panel of seeded verifiers with a fixed per-verdict accuracy.

    Each verifier independently lands on the ground-truth-consistent
    judgment with probability ``accuracy``, deterministically per
    (seed, verifier, item).
    """

    def __init__(self, pool: PoolSpec, seed: int, reputation: float = 1.0):
        self.spec = pool
        self.seed = seed
        self.quorum = pool.quorum
        self.profiles = {
            f"sim-verifier-{i:02d}": VerifierProfile(
                verifier_id=f"sim-verifier-{i:02d}", kind="crowd", reputation=reputation
            )
            for i in range(pool.n)
        }

    def collect(self, record: ManifestRecord) -> list[TrustedVerdict]:
        if record.is_deepfake is None:
            return []
        id_word = int.from_bytes(hashlib.sha256(record.item.id.encode()).digest()[:8], "big")
        verdicts = []
        for i, verifier_id in enumerate(self.profiles):
            correct = uniform01(self.seed, _TAG_VERDICT, i, id_word) < self.spec.accuracy
            honest = "untrustworthy" if record.is_deepfake else "trustworthy"
            flipped = "trustworthy" if honest == "untrustworthy" else "untrustworthy"
            verdicts.append(
                TrustedVerdict(verifier_id=verifier_id, judgment=honest if correct else flipped)
            )
        return verdicts
