"""Level-2 multimodal detection.

Technical detection is an orchestration contract over pluggable
detectors (in-process callables, subprocess adapters, or HTTP
adapters emitting one verdict JSON object). Trusted detection
aggregates human verdicts weighted by reputation, with quorum and
collective signing.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import subprocess
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol, Sequence

from .core import ContentItem, ManifestRecord
from .errors import MalformedMarkerBlock, MissingGroundTruth, NoMarkerFound
from .markers import detect_statistical, parse_marker_block
from .prng import keyed_hash
from .trustchain import verify_bytes

logger = logging.getLogger(__name__)

TAMPER_CONFIDENCE = 0.9
DEFAULT_THETA_TECH = 0.5
DEFAULT_QUORUM = 3
DEFAULT_TIME_BUDGET_MS = 200.0
DEFAULT_REPUTATION_STEP = 0.05


@dataclass(frozen=True)
class DetectorVerdict:
    detector_id: str
    confidence_fake: float
    features: dict = field(default_factory=dict)
    latency_ms: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.confidence_fake <= 1.0:
            raise ValueError(f"confidence_fake {self.confidence_fake} outside [0, 1]")

    def to_json(self) -> dict:
        return {
            "detector_id": self.detector_id,
            "confidence_fake": self.confidence_fake,
            "features": self.features,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DetectorVerdict":
        return cls(
            detector_id=obj["detector_id"],
            confidence_fake=float(obj["confidence_fake"]),
            features=dict(obj.get("features", {})),
            latency_ms=float(obj.get("latency_ms", 0.0)),
        )


class Detector(Protocol):
    detector_id: str

    def __call__(self, item: ContentItem, record: Optional[ManifestRecord] = None) -> DetectorVerdict:
        ...


@dataclass(frozen=True)
class TrustedVerdict:
    verifier_id: str
    judgment: str  # trustworthy | untrustworthy | abstain
    rationale: str = ""
    signature: Optional[bytes] = None

    def __post_init__(self):
        if self.judgment not in ("trustworthy", "untrustworthy", "abstain"):
            raise ValueError(f"unknown judgment {self.judgment!r}")

    def signing_bytes(self, context: bytes = b"") -> bytes:
        body = json.dumps(
            {"judgment": self.judgment, "rationale": self.rationale, "verifier_id": self.verifier_id},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        return body + context


@dataclass(frozen=True)
class VerifierProfile:
    verifier_id: str
    kind: str = "crowd"  # expert | crowd
    reputation: float = 1.0
    public_key: bytes = b""

    def __post_init__(self):
        if not 0.0 <= self.reputation <= 1.0:
            raise ValueError(f"reputation {self.reputation} outside [0, 1]")
        if self.kind not in ("expert", "crowd"):
            raise ValueError(f"unknown verifier kind {self.kind!r}")


@dataclass(frozen=True)
class TechnicalResult:
    """Outcome of run_technical. v_t is None when indeterminate."""

    v_t: Optional[int]
    confidence_fake: Optional[float]
    verdicts: tuple[DetectorVerdict, ...] = ()
    failures: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrustedResult:
    """Outcome of aggregate_trusted. v_tr is None when quorum unmet."""

    v_tr: Optional[int]
    support: Optional[float]
    counted: int = 0
    dropped: tuple[str, ...] = ()


def run_technical(
    item: ContentItem,
    detectors: Sequence[Detector],
    theta_tech: float = DEFAULT_THETA_TECH,
    detector_weights: Optional[Mapping[str, float]] = None,
    time_budget_ms: float = DEFAULT_TIME_BUDGET_MS,
    record: Optional[ManifestRecord] = None,
) -> TechnicalResult:
    """Run every detector, aggregate by normalized weights, binarize.

    Detectors that raise, or whose reported latency exceeds the budget,
    are excluded and logged; if all are excluded the result is
    indeterminate (v_t None), which signals escalation rather than a
    crash.
    """
    if not detectors:
        raise ValueError("at least one detector must be registered")
    verdicts: list[DetectorVerdict] = []
    failures: list[str] = []
    for detector in detectors:
        det_id = getattr(detector, "detector_id", detector.__class__.__name__)
        try:
            verdict = detector(item, record)
        except Exception as exc:  # detector plug-ins are untrusted code
            failures.append(f"{det_id}: {exc}")
            logger.warning("detector %s failed on %s: %s", det_id, item.id, exc)
            continue
        if verdict.latency_ms > time_budget_ms:
            failures.append(f"{verdict.detector_id}: exceeded {time_budget_ms}ms budget")
            logger.warning("detector %s overran budget on %s", verdict.detector_id, item.id)
            continue
        verdicts.append(verdict)
    if not verdicts:
        return TechnicalResult(None, None, (), tuple(failures))
    weights = [
        (detector_weights or {}).get(v.detector_id, 1.0) for v in verdicts
    ]
    total = sum(weights)
    if total <= 0:
        return TechnicalResult(None, None, tuple(verdicts), tuple(failures) + ("all detector weights zero",))
    confidence = sum(w * v.confidence_fake for w, v in zip(weights, verdicts)) / total
    v_t = 1 if confidence < theta_tech else 0
    return TechnicalResult(v_t, confidence, tuple(verdicts), tuple(failures))


# ---------------------------------------------------------------------------
# Reference detectors
# ---------------------------------------------------------------------------

class ResidueDetector:
    """Scans for statistical-watermark residue and marker-block tampering.

    Runs the statistical detector under every registered generator key;
    confidence is the highest positive correlation, or a fixed 0.9 when
    the marker block itself is tamper-evident.
    """

    detector_id = "residue"

    def __init__(self, key_registry: Mapping[str, int], tau: float = 0.5):
        self.key_registry = dict(key_registry)
        self.tau = tau

    def __call__(self, item: ContentItem, record: Optional[ManifestRecord] = None) -> DetectorVerdict:
        features: dict = {"correlations": {}}
        confidence = 0.0
        if item.marker_block is not None:
            try:
                parse_marker_block(item.marker_block)
            except MalformedMarkerBlock as exc:
                features["tamper"] = str(exc)
                confidence = TAMPER_CONFIDENCE
            except NoMarkerFound:
                pass
        if item.modality == "raster":
            for key_id, key in self.key_registry.items():
                try:
                    corr = detect_statistical(item, key)
                except Exception:
                    continue
                features["correlations"][key_id] = corr
                clamped = min(max(corr, 0.0), 1.0)
                if clamped > confidence:
                    confidence = clamped
                    features["matched_key_id"] = key_id
        return DetectorVerdict(self.detector_id, confidence, features)


class SimulatedDetector:
    """Controlled-error-rate channel over ground-truth-labeled items.

    Emits confidence 1 with probability tpr on true deepfakes and fpr on
    real content, seeded per (seed, item id) so verdicts are reproducible
    and independent of evaluation order.
    """

    def __init__(self, tpr: float, fpr: float, seed: int, detector_id: str = "simulated"):
        if not 0.0 <= fpr <= tpr <= 1.0:
            raise ValueError("need 0 <= fpr <= tpr <= 1 for an informative detector")
        self.tpr = tpr
        self.fpr = fpr
        self.seed = seed
        self.detector_id = detector_id

    def __call__(self, item: ContentItem, record: Optional[ManifestRecord] = None) -> DetectorVerdict:
        if record is None or record.is_deepfake is None:
            raise MissingGroundTruth(f"simulated detector needs ground truth for {item.id}")
        id_word = int.from_bytes(hashlib.sha256(item.id.encode("utf-8")).digest()[:8], "big")
        u = keyed_hash(self.seed, id_word) / 2.0**64
        rate = self.tpr if record.is_deepfake else self.fpr
        fired = u < rate
        return DetectorVerdict(self.detector_id, 1.0 if fired else 0.0, {"rate": rate})


def detector_request_json(item: ContentItem, record: Optional[ManifestRecord]) -> bytes:
    """The plug-in input schema: canonical content bytes + manifest record."""
    obj = {
        "id": item.id,
        "modality": item.modality,
        "payload_b64": base64.b64encode(item.payload).decode("ascii"),
        "marker_b64": base64.b64encode(item.marker_block).decode("ascii")
        if item.marker_block is not None
        else None,
        "origin": {
            "source_id": item.origin.source_id,
            "category_tags": sorted(item.origin.category_tags),
            "expected_reach": item.origin.expected_reach,
            "verified_source": item.origin.verified_source,
        },
        "ground_truth": None if record is None else record.is_deepfake,
    }
    return json.dumps(obj).encode("utf-8")


class SubprocessDetector:
    """Adapter for external detectors speaking one-JSON-in, one-JSON-out.

    The child receives the detector_request_json object on stdin and
    must print a single DetectorVerdict JSON object.
    """

    def __init__(self, command: list[str], detector_id: str = "subprocess", timeout_s: float = 10.0):
        self.command = list(command)
        self.detector_id = detector_id
        self.timeout_s = timeout_s

    def __call__(self, item: ContentItem, record: Optional[ManifestRecord] = None) -> DetectorVerdict:
        proc = subprocess.run(
            self.command,
            input=detector_request_json(item, record),
            capture_output=True,
            timeout=self.timeout_s,
            check=True,
        )
        return DetectorVerdict.from_json(json.loads(proc.stdout.decode("utf-8")))


class HttpDetector:
    """Adapter for detectors behind an HTTP endpoint (same JSON schema)."""

    def __init__(self, url: str, detector_id: str = "http", timeout_s: float = 10.0, client=None):
        import httpx

        self.url = url
        self.detector_id = detector_id
        self._client = client or httpx.Client(timeout=timeout_s)

    def __call__(self, item: ContentItem, record: Optional[ManifestRecord] = None) -> DetectorVerdict:
        response = self._client.post(
            self.url,
            content=detector_request_json(item, record),
            headers={"content-type": "application/json"},
        )
        response.raise_for_status()
        return DetectorVerdict.from_json(response.json())


# ---------------------------------------------------------------------------
# Trusted detection
# ---------------------------------------------------------------------------

def aggregate_trusted(
    verdicts: Sequence[TrustedVerdict],
    profiles: Mapping[str, VerifierProfile],
    quorum: int = DEFAULT_QUORUM,
    context: bytes = b"",
) -> TrustedResult:
    """Reputation-weighted majority over non-abstaining verdicts.

    Verdicts from unknown verifiers or with invalid signatures are
    dropped (and logged, never fatal). Below quorum the result is
    indeterminate. Support is the reputation-weighted trustworthy
    fraction; an exact 0.5 tie resolves untrustworthy (conservative).
    """
    usable: list[tuple[TrustedVerdict, VerifierProfile]] = []
    dropped: list[str] = []
    seen: set[str] = set()
    for verdict in verdicts:
        profile = profiles.get(verdict.verifier_id)
        if profile is None:
            dropped.append(f"{verdict.verifier_id}: unknown verifier")
            logger.warning("dropping verdict from unknown verifier %s", verdict.verifier_id)
            continue
        if verdict.verifier_id in seen:
            dropped.append(f"{verdict.verifier_id}: duplicate verdict")
            continue
        if verdict.signature is not None and not verify_bytes(
            profile.public_key, verdict.signature, verdict.signing_bytes(context)
        ):
            dropped.append(f"{verdict.verifier_id}: InvalidSignature")
            logger.warning("dropping verdict with bad signature from %s", verdict.verifier_id)
            continue
        seen.add(verdict.verifier_id)
        if verdict.judgment == "abstain":
            continue
        usable.append((verdict, profile))
    if len(usable) < quorum:
        return TrustedResult(None, None, len(usable), tuple(dropped))
    total = sum(p.reputation for _, p in usable)
    if total <= 0.0:
        return TrustedResult(0, 0.0, len(usable), tuple(dropped))
    support = sum(p.reputation for v, p in usable if v.judgment == "trustworthy") / total
    return TrustedResult(1 if support > 0.5 else 0, support, len(usable), tuple(dropped))


def update_reputation(
    profile: VerifierProfile, agreed_with_consensus: bool, step: float = DEFAULT_REPUTATION_STEP
) -> VerifierProfile:
    delta = step if agreed_with_consensus else -step
    return replace(profile, reputation=min(1.0, max(0.0, profile.reputation + delta)))


# ---------------------------------------------------------------------------
# Collective signing
# ---------------------------------------------------------------------------

def canonical_summary_bytes(summary: Mapping) -> bytes:
    return json.dumps(dict(summary), sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class CoSignature:
    """A verdict summary co-signed by a quorum of registered verifiers."""

    summary: dict
    required: int
    signatures: tuple[tuple[str, bytes], ...]


def collective_sign(
    summary: Mapping, signatures: Sequence[tuple[str, bytes]], required: int
) -> CoSignature:
    if required < 1:
        raise ValueError("required co-signer count must be >= 1")
    deduped: dict[str, bytes] = {}
    for verifier_id, sig in signatures:
        if verifier_id in deduped:
            logger.info("duplicate co-signer %s counted once", verifier_id)
            continue
        deduped[verifier_id] = sig
    return CoSignature(dict(summary), required, tuple(deduped.items()))


def verify_cosign(cosig: CoSignature, registry: Mapping[str, VerifierProfile]) -> bool:
    message = canonical_summary_bytes(cosig.summary)
    valid: set[str] = set()
    for verifier_id, sig in cosig.signatures:
        profile = registry.get(verifier_id)
        if profile is None:
            logger.info("ignoring co-signature from unknown verifier %s", verifier_id)
            continue
        if verify_bytes(profile.public_key, sig, message):
            valid.add(verifier_id)
    return len(valid) >= cosig.required
