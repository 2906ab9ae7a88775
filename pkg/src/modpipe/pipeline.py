"""The two-level moderation state machine and the append-only decision log.

Level 1 checks embedded markers against the trust store; a valid
positive marker short-circuits to DEEPFAKE and a valid negative one to
VERIFIED, consuming no detector or verifier resources. Everything else
runs level 2: technical detection, risk classification, and (per the
escalation policy) trusted detection, combined by the score system.

Decisions append to a line-delimited JSON log. Each line carries a
sequence number, the config fingerprint, and a CRC32 of its canonical
record bytes; replay discards a torn tail and refuses mid-file damage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .core import ContentItem, ManifestRecord
from .detection import (
    Detector,
    TrustedResult,
    TrustedVerdict,
    VerifierProfile,
    aggregate_trusted,
    run_technical,
)
from .errors import ConfigInvalid, CorruptLog, StorageFailure, UnknownContent
from .markers import parse_marker_block
from .errors import MalformedMarkerBlock, NoMarkerFound
from .risk import RiskPolicy, classify_risk
from .scoring import Label, PolicyConfig, ScoreVector, assign_label, compute_score
from .trustchain import MarkerVerification, TrustStore, VerificationStatus, verify_marker

logger = logging.getLogger(__name__)

# Batch-mode logical clock epoch: deterministic timestamps that still fall
# inside ordinary certificate validity windows.
LOGICAL_EPOCH = 1_700_000_000


@dataclass(frozen=True)
class DetectionPolicy:
    theta_tech: float = 0.5
    tau: float = 0.5
    quorum: int = 3
    time_budget_ms: float = 200.0
    detector_weights: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "theta_tech": self.theta_tech,
            "tau": self.tau,
            "quorum": self.quorum,
            "time_budget_ms": self.time_budget_ms,
            "detector_weights": dict(self.detector_weights),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionPolicy":
        return cls(
            theta_tech=float(obj.get("theta_tech", 0.5)),
            tau=float(obj.get("tau", 0.5)),
            quorum=int(obj.get("quorum", 3)),
            time_budget_ms=float(obj.get("time_budget_ms", 200.0)),
            detector_weights=dict(obj.get("detector_weights", {})),
        )


@dataclass(frozen=True)
class EscalationPolicy:
    """When trusted detection is awaited before deciding.

    mandatory: await only when risk is high or technical detection is
    indeterminate (the default); always / never are for batch
    simulation and service mode respectively.
    """

    await_trusted: str = "mandatory"  # mandatory | always | never
    review_ttl_hours: float = 24.0

    def __post_init__(self):
        if self.await_trusted not in ("mandatory", "always", "never"):
            raise ConfigInvalid(f"unknown await_trusted {self.await_trusted!r}")

    def to_json(self) -> dict:
        return {"await_trusted": self.await_trusted, "review_ttl_hours": self.review_ttl_hours}

    @classmethod
    def from_json(cls, obj: dict) -> "EscalationPolicy":
        return cls(
            await_trusted=obj.get("await_trusted", "mandatory"),
            review_ttl_hours=float(obj.get("review_ttl_hours", 24.0)),
        )


@dataclass(frozen=True)
class EngineConfig:
    """The full policy bundle; its fingerprint stamps every decision."""

    scoring: PolicyConfig = field(default_factory=PolicyConfig)
    risk: RiskPolicy = field(default_factory=RiskPolicy)
    detection: DetectionPolicy = field(default_factory=DetectionPolicy)
    escalation: EscalationPolicy = field(default_factory=EscalationPolicy)

    def to_json(self) -> dict:
        return {
            "scoring": self.scoring.to_json(),
            "risk": self.risk.to_json(),
            "detection": self.detection.to_json(),
            "escalation": self.escalation.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EngineConfig":
        return cls(
            scoring=PolicyConfig.from_json(obj.get("scoring", {})),
            risk=RiskPolicy.from_json(obj["risk"]) if "risk" in obj else RiskPolicy(),
            detection=DetectionPolicy.from_json(obj.get("detection", {})),
            escalation=EscalationPolicy.from_json(obj.get("escalation", {})),
        )

    @classmethod
    def load(cls, path: Path) -> "EngineConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class VerifierPool(Protocol):
    """Synchronous trusted-detection source for batch runs."""

    profiles: dict[str, VerifierProfile]
    quorum: int

    def collect(self, record: ManifestRecord) -> list[TrustedVerdict]:
        ...


@dataclass(frozen=True)
class ReviewTask:
    task_id: str
    content_id: str
    created_at: int
    required_quorum: int
    received: int = 0
    state: str = "open"  # open | satisfied | expired


@dataclass(frozen=True)
class ModerationDecision:
    content_id: str
    label: Label
    marker_verification: MarkerVerification
    score: Optional[float] = None
    score_vector: Optional[ScoreVector] = None
    evidence: dict = field(default_factory=dict)
    status: str = "final"  # final | provisional
    decided_at: int = 0
    config_fingerprint: str = ""
    seq: int = -1

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "content_id": self.content_id,
            "label": self.label.value,
            "score": self.score,
            "score_vector": self.score_vector.to_json() if self.score_vector else None,
            "marker": {
                "status": self.marker_verification.status.value,
                "reasons": list(self.marker_verification.reasons),
            },
            "evidence": self.evidence,
            "status": self.status,
            "decided_at": self.decided_at,
            "config_fingerprint": self.config_fingerprint,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ModerationDecision":
        vector = record.get("score_vector")
        return cls(
            content_id=record["content_id"],
            label=Label(record["label"]),
            marker_verification=MarkerVerification(
                VerificationStatus(record["marker"]["status"]),
                tuple(record["marker"]["reasons"]),
            ),
            score=record.get("score"),
            score_vector=ScoreVector.from_json(vector) if vector else None,
            evidence=record.get("evidence", {}),
            status=record["status"],
            decided_at=record["decided_at"],
            config_fingerprint=record["config_fingerprint"],
            seq=record["seq"],
        )


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class DecisionLog:
    """Append-only, crash-consistent, single-writer decision store."""

    def __init__(self, path: Path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._fh = None
        self._seq = -1
        self._by_content: dict[str, ModerationDecision] = {}
        self._decisions: list[ModerationDecision] = []
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        raw_lines = self.path.read_bytes().split(b"\n")
        kept: list[bytes] = []
        for i, raw in enumerate(raw_lines):
            if not raw:
                continue
            try:
                wrapper = json.loads(raw.decode("utf-8"))
                body = canonical_json(wrapper["record"])
                if f"{zlib.crc32(body.encode('utf-8')):08x}" != wrapper["crc32"]:
                    raise ValueError("checksum mismatch")
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                remaining = [r for r in raw_lines[i + 1 :] if r]
                if remaining:
                    raise CorruptLog(f"damaged record before log tail: {exc}") from exc
                logger.warning("discarding torn log tail (%d bytes)", len(raw))
                break
            decision = ModerationDecision.from_record(wrapper["record"])
            self._ingest(decision)
            kept.append(raw)
        # Rewrite without the torn tail so appends stay line-aligned.
        if len(kept) != len([r for r in raw_lines if r]):
            with open(self.path, "wb") as fh:
                for raw in kept:
                    fh.write(raw + b"\n")

    def _ingest(self, decision: ModerationDecision) -> None:
        self._seq = max(self._seq, decision.seq)
        self._decisions.append(decision)
        self._by_content[decision.content_id] = decision

    def _write_line(self, line: bytes) -> None:
        if self._fh is None or self._fh.closed:
            self._fh = open(self.path, "ab")
        self._fh.write(line)
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        with self._lock:
            if self._fh is not None and not self._fh.closed:
                self._fh.close()

    def append(self, decision: ModerationDecision) -> ModerationDecision:
        """Assign the next sequence number and persist one full line.

        The line is built in memory and written with a single write so
        a failure acknowledges nothing; a torn tail from a crash is
        discarded on replay.
        """
        with self._lock:
            stamped = replace(decision, seq=self._seq + 1)
            body = canonical_json(stamped.to_record())
            line = (
                '{"crc32":"%08x","record":%s}\n' % (zlib.crc32(body.encode("utf-8")), body)
            ).encode("utf-8")
            try:
                self._write_line(line)
            except OSError as exc:
                raise StorageFailure(f"decision not persisted: {exc}") from exc
            self._seq = stamped.seq
            self._ingest(stamped)
            return stamped

    def latest(self, content_id: str) -> Optional[ModerationDecision]:
        return self._by_content.get(content_id)

    def all_decisions(self) -> list[ModerationDecision]:
        return list(self._decisions)

    def history(self, content_id: str) -> list[ModerationDecision]:
        return [d for d in self._decisions if d.content_id == content_id]

    def __len__(self) -> int:
        return len(self._decisions)


def check_markers(item: ContentItem, trust_store: TrustStore, now: int) -> MarkerVerification:
    """Level-1 verification over every marker in the block.

    Both polarities valid at once is contradictory attestation, treated
    as tamper evidence (invalid, ConflictingMarkers) so the item falls
    through to level 2.
    """
    if item.marker_block is None:
        return MarkerVerification(VerificationStatus.ABSENT)
    try:
        markers = parse_marker_block(item.marker_block)
    except NoMarkerFound:
        return MarkerVerification(VerificationStatus.ABSENT)
    except MalformedMarkerBlock as exc:
        return MarkerVerification(
            VerificationStatus.INVALID, (f"MalformedMarkerBlock: {exc}",)
        )
    results = [verify_marker(marker, item, trust_store, now) for marker in markers]
    valid_pos = [r for r in results if r.status is VerificationStatus.VALID_POSITIVE]
    valid_neg = [r for r in results if r.status is VerificationStatus.VALID_NEGATIVE]
    if valid_pos and valid_neg:
        return MarkerVerification(VerificationStatus.INVALID, ("ConflictingMarkers",))
    if valid_pos:
        return valid_pos[0]
    if valid_neg:
        return valid_neg[0]
    reasons: list[str] = []
    for result in results:
        reasons.extend(result.reasons)
    return MarkerVerification(VerificationStatus.INVALID, tuple(dict.fromkeys(reasons)))


class ModerationEngine:
    """Wires config, trust store, detectors, and the decision log."""

    def __init__(
        self,
        config: EngineConfig,
        trust_store: TrustStore,
        detectors: Sequence[Detector],
        log: DecisionLog,
        verifier_pool: Optional[VerifierPool] = None,
        clock: Optional[Callable[[], int]] = None,
    ):
        self.config = config
        self.trust_store = trust_store
        self.detectors = list(detectors)
        self.log = log
        self.verifier_pool = verifier_pool
        self._logical_time = LOGICAL_EPOCH
        self.clock = clock or self._next_logical_time
        self.open_tasks: dict[str, ReviewTask] = {}
        self._fingerprint = config.fingerprint()

    def _next_logical_time(self) -> int:
        # Deterministic batch clock: replaying the same corpus under the
        # same config reproduces decided_at bytewise.
        self._logical_time += 1
        return self._logical_time

    def set_config(self, config: EngineConfig) -> None:
        self.config = config
        self._fingerprint = config.fingerprint()

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def _level2(
        self, record: ManifestRecord, mv: MarkerVerification, now: int
    ) -> tuple[ScoreVector, dict, str, bool]:
        item = record.item
        technical = run_technical(
            item,
            self.detectors,
            theta_tech=self.config.detection.theta_tech,
            detector_weights=self.config.detection.detector_weights,
            time_budget_ms=self.config.detection.time_budget_ms,
            record=record,
        )
        assessment = classify_risk(item.origin, self.config.risk)
        mandatory = assessment.v_r == 0 or technical.v_t is None
        rule = self.config.escalation.await_trusted
        await_now = rule == "always" or (rule == "mandatory" and mandatory)
        trusted: Optional[TrustedResult] = None
        if await_now and self.verifier_pool is not None:
            verdicts = self.verifier_pool.collect(record)
            trusted = aggregate_trusted(
                verdicts, self.verifier_pool.profiles, self.config.detection.quorum
            )
        v_tr = trusted.v_tr if trusted is not None else None
        vector = ScoreVector(technical.v_t, v_tr, assessment.v_r)
        quorum_met = trusted is not None and trusted.v_tr is not None
        if self.config.scoring.indeterminate == "escalate":
            provisional = vector.v_t is None or vector.v_tr is None
        else:
            provisional = not quorum_met
        evidence = {
            "technical": {
                "v_t": technical.v_t,
                "confidence_fake": technical.confidence_fake,
                "verdicts": [v.to_json() for v in technical.verdicts],
                "failures": list(technical.failures),
                "tamper_reasons": list(mv.reasons),
            },
            "trusted": {
                "v_tr": v_tr,
                "support": trusted.support if trusted else None,
                "counted": trusted.counted if trusted else 0,
                "quorum": self.config.detection.quorum,
                "awaited": bool(await_now and self.verifier_pool is not None),
            },
            "risk": assessment.to_json(),
        }
        return vector, evidence, ("provisional" if provisional else "final"), provisional

    def _open_task(self, content_id: str, now: int) -> ReviewTask:
        task = ReviewTask(
            task_id=f"task-{content_id}",
            content_id=content_id,
            created_at=now,
            required_quorum=self.config.detection.quorum,
        )
        self.open_tasks[task.task_id] = task
        return task

    def moderate(self, record: ManifestRecord) -> ModerationDecision:
        """Run the full two-level flow for one item and log the decision."""
        item = record.item
        now = self.clock()
        mv = check_markers(item, self.trust_store, now)
        if mv.status in (VerificationStatus.VALID_POSITIVE, VerificationStatus.VALID_NEGATIVE):
            decision = ModerationDecision(
                content_id=item.id,
                label=assign_label(mv.status, None, self.config.scoring),
                marker_verification=mv,
                status="final",
                decided_at=now,
                config_fingerprint=self._fingerprint,
            )
            return self.log.append(decision)
        vector, evidence, status, provisional = self._level2(record, mv, now)
        resolved = ScoreVector(
            0 if vector.v_t is None else vector.v_t,
            0 if vector.v_tr is None else vector.v_tr,
            vector.v_r,
        )
        score = compute_score(resolved, self.config.scoring)
        label = assign_label(mv.status, resolved, self.config.scoring)
        decision = ModerationDecision(
            content_id=item.id,
            label=label,
            marker_verification=mv,
            score=score,
            score_vector=vector,
            evidence=evidence,
            status=status,
            decided_at=now,
            config_fingerprint=self._fingerprint,
        )
        appended = self.log.append(decision)
        if provisional:
            self._open_task(item.id, now)
        return appended

    def reevaluate(
        self,
        content_id: str,
        trusted_verdicts: Optional[Sequence[TrustedVerdict]] = None,
        profiles: Optional[dict[str, VerifierProfile]] = None,
        item: Optional[ContentItem] = None,
    ) -> ModerationDecision:
        """Fold late evidence into a fresh appended decision.

        Late trusted verdicts re-aggregate v_tr; a re-submitted item
        re-runs the marker check (a late valid marker dominates). Prior
        log entries never mutate.
        """
        previous = self.log.latest(content_id)
        if previous is None:
            raise UnknownContent(content_id)
        now = self.clock()
        mv = previous.marker_verification
        if item is not None:
            mv = check_markers(item, self.trust_store, now)
            if mv.status in (
                VerificationStatus.VALID_POSITIVE,
                VerificationStatus.VALID_NEGATIVE,
            ):
                decision = ModerationDecision(
                    content_id=content_id,
                    label=assign_label(mv.status, None, self.config.scoring),
                    marker_verification=mv,
                    status="final",
                    decided_at=now,
                    config_fingerprint=self._fingerprint,
                )
                self._close_task(content_id, "satisfied")
                return self.log.append(decision)
        evidence = dict(previous.evidence)
        prior_vector = previous.score_vector or ScoreVector(None, None, 1)
        v_tr = prior_vector.v_tr
        quorum_met = previous.status == "final"
        if trusted_verdicts is not None:
            trusted = aggregate_trusted(
                trusted_verdicts, profiles or {}, self.config.detection.quorum
            )
            v_tr = trusted.v_tr
            quorum_met = trusted.v_tr is not None
            evidence = {
                **evidence,
                "trusted": {
                    "v_tr": trusted.v_tr,
                    "support": trusted.support,
                    "counted": trusted.counted,
                    "quorum": self.config.detection.quorum,
                    "awaited": True,
                },
            }
        vector = ScoreVector(prior_vector.v_t, v_tr, prior_vector.v_r)
        resolved = ScoreVector(
            0 if vector.v_t is None else vector.v_t,
            0 if vector.v_tr is None else vector.v_tr,
            vector.v_r,
        )
        score = compute_score(resolved, self.config.scoring)
        label = assign_label(mv.status, resolved, self.config.scoring)
        status = "final" if quorum_met else previous.status
        decision = ModerationDecision(
            content_id=content_id,
            label=label,
            marker_verification=mv,
            score=score,
            score_vector=vector,
            evidence=evidence,
            status=status,
            decided_at=now,
            config_fingerprint=self._fingerprint,
        )
        if status == "final":
            self._close_task(content_id, "satisfied")
        return self.log.append(decision)

    def _close_task(self, content_id: str, state: str) -> None:
        task_id = f"task-{content_id}"
        task = self.open_tasks.get(task_id)
        if task is not None and task.state == "open":
            self.open_tasks[task_id] = replace(task, state=state)

    def run_batch(self, records: Sequence[ManifestRecord]) -> list[ModerationDecision]:
        return [self.moderate(record) for record in records]


def rederive_label(decision: ModerationDecision, config: PolicyConfig) -> Label:
    """Recompute the label from a decision's stored inputs.

    Used by the debug verification endpoint and the replay tests to
    show every served decision is re-derivable.
    """
    status = decision.marker_verification.status
    if status in (VerificationStatus.VALID_POSITIVE, VerificationStatus.VALID_NEGATIVE):
        return assign_label(status, None, config)
    vector = decision.score_vector
    resolved = ScoreVector(
        0 if vector.v_t is None else vector.v_t,
        0 if vector.v_tr is None else vector.v_tr,
        vector.v_r,
    )
    return assign_label(status, resolved, config)
