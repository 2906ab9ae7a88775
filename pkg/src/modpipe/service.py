"""HTTP facade: ingestion, decisions, review queue, policy, audits.

File-backed state under a single data directory: the append-only
decision log (crash-consistent, torn tail discarded on replay), a task
snapshot, stored content bytes, and the verifier registry. Per-content
operations serialize on a lock; the log writer is single and totally
ordered; policy swaps are atomic under the state lock.

Review verdicts are Ed25519-signed over a canonical JSON message that
binds verifier, judgment, rationale, task, and content ids. A verifier
never receives a task it has already voted on, and queue payloads never
include peer verdicts (independence of review).
"""

from __future__ import annotations

import base64
import json
import threading
import time
import uuid
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, Form, HTTPException, Query, UploadFile
from fastapi.responses import PlainTextResponse, Response

from .audit import evaluate, label_strata, sample_decisions
from .core import ContentItem, ManifestRecord, OriginContext
from .detection import ResidueDetector, TrustedVerdict, VerifierProfile
from .errors import ConfigInvalid, InsufficientPopulation, MissingGroundTruth, StorageFailure
from .pipeline import DecisionLog, EngineConfig, ModerationEngine, ReviewTask, rederive_label
from .scoring import PolicyConfig, decision_table_csv
from .trustchain import TrustStore, verify_bytes

MEDIA_TYPES = {"raster": "image/x-portable-pixmap", "audio": "application/octet-stream", "text": "text/plain"}


def verdict_message(verifier_id: str, judgment: str, rationale: str, task_id: str, content_id: str) -> bytes:
    """Canonical bytes a verifier signs when submitting a verdict."""
    return json.dumps(
        {
            "content_id": content_id,
            "judgment": judgment,
            "rationale": rationale,
            "task_id": task_id,
            "verifier_id": verifier_id,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")


@dataclass
class StoredVerdict:
    verifier_id: str
    judgment: str
    rationale: str
    signature_b64: str


class ServiceState:
    def __init__(
        self,
        data_dir: Path,
        trust_store: TrustStore,
        config: EngineConfig,
        registry: Optional[dict[str, int]] = None,
        clock: Optional[Callable[[], int]] = None,
        debug: bool = False,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "content").mkdir(exist_ok=True)
        self.clock = clock or (lambda: int(time.time()))
        self.debug = debug
        self.log = DecisionLog(self.data_dir / "decisions.log")
        self.engine = ModerationEngine(
            config,
            trust_store,
            [ResidueDetector(registry or {}, tau=config.detection.tau)],
            self.log,
            verifier_pool=None,
            clock=self.clock,
        )
        self.lock = threading.Lock()
        self._locks_guard = threading.Lock()
        self.content_locks: dict[str, threading.Lock] = {}
        self.tasks: dict[str, ReviewTask] = {}
        self.verdicts: dict[str, list[StoredVerdict]] = {}
        self.audits: dict[str, dict] = {}
        self.ingest_count: dict[str, int] = {}
        self.verifiers = self._load_verifiers()
        self._load_tasks()

    # -- persistence ------------------------------------------------------

    def _load_verifiers(self) -> dict[str, VerifierProfile]:
        path = self.data_dir / "verifiers.json"
        if not path.exists():
            return {}
        out = {}
        for entry in json.loads(path.read_text(encoding="utf-8")):
            out[entry["verifier_id"]] = VerifierProfile(
                verifier_id=entry["verifier_id"],
                kind=entry.get("kind", "crowd"),
                reputation=float(entry.get("reputation", 1.0)),
                public_key=base64.b64decode(entry["public_key_b64"]),
            )
        return out

    def _tasks_path(self) -> Path:
        return self.data_dir / "tasks.json"

    def _load_tasks(self) -> None:
        path = self._tasks_path()
        if not path.exists():
            return
        obj = json.loads(path.read_text(encoding="utf-8"))
        for entry in obj.get("tasks", []):
            task = ReviewTask(**entry)
            self.tasks[task.task_id] = task
        for task_id, verdicts in obj.get("verdicts", {}).items():
            self.verdicts[task_id] = [StoredVerdict(**v) for v in verdicts]

    def _save_tasks(self) -> None:
        obj = {
            "tasks": [asdict(t) for t in self.tasks.values()],
            "verdicts": {tid: [asdict(v) for v in vs] for tid, vs in self.verdicts.items()},
        }
        self._tasks_path().write_text(json.dumps(obj, indent=1), encoding="utf-8")

    # -- helpers ----------------------------------------------------------

    def content_lock(self, content_id: str) -> threading.Lock:
        # Lock order discipline: content lock before state lock, always.
        with self._locks_guard:
            return self.content_locks.setdefault(content_id, threading.Lock())

    def content_path(self, content_id: str, kind: str) -> Path:
        return self.data_dir / "content" / f"{content_id}.{kind}"

    def store_content(self, item: ContentItem) -> None:
        self.content_path(item.id, "payload").write_bytes(item.payload)
        if item.marker_block is not None:
            self.content_path(item.id, "marker").write_bytes(item.marker_block)
        meta = {
            "modality": item.modality,
            "origin": {
                "source_id": item.origin.source_id,
                "category_tags": sorted(item.origin.category_tags),
                "expected_reach": item.origin.expected_reach,
                "verified_source": item.origin.verified_source,
            },
        }
        self.content_path(item.id, "meta.json").write_text(json.dumps(meta), encoding="utf-8")

    def load_content(self, content_id: str) -> Optional[ContentItem]:
        meta_path = self.content_path(content_id, "meta.json")
        if not meta_path.exists():
            return None
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        marker_path = self.content_path(content_id, "marker")
        return ContentItem(
            id=content_id,
            modality=meta["modality"],
            payload=self.content_path(content_id, "payload").read_bytes(),
            origin=OriginContext(
                source_id=meta["origin"]["source_id"],
                category_tags=frozenset(meta["origin"]["category_tags"]),
                expected_reach=meta["origin"]["expected_reach"],
                verified_source=meta["origin"]["verified_source"],
            ),
            marker_block=marker_path.read_bytes() if marker_path.exists() else None,
        )

    def refresh_task(self, task: ReviewTask) -> ReviewTask:
        ttl_s = self.engine.config.escalation.review_ttl_hours * 3600
        if task.state == "open" and self.clock() > task.created_at + ttl_s:
            task = replace(task, state="expired")
            self.tasks[task.task_id] = task
            self._save_tasks()
        return task

    def task_view(self, task: ReviewTask) -> dict:
        """Queue payload: everything a reviewer needs, no peer verdicts."""
        decision = self.log.latest(task.content_id)
        evidence = decision.evidence if decision else {}
        return {
            "task_id": task.task_id,
            "content_id": task.content_id,
            "created_at": task.created_at,
            "required_quorum": task.required_quorum,
            "received": task.received,
            "state": task.state,
            "modality": json.loads(
                self.content_path(task.content_id, "meta.json").read_text(encoding="utf-8")
            )["modality"]
            if self.content_path(task.content_id, "meta.json").exists()
            else None,
            "marker_status": decision.marker_verification.status.value if decision else None,
            "marker_reasons": list(decision.marker_verification.reasons) if decision else [],
            "technical_confidence": evidence.get("technical", {}).get("confidence_fake"),
            "risk": evidence.get("risk"),
            "provisional_label": decision.label.value if decision else None,
        }


def create_app(
    data_dir: Path,
    trust_store: TrustStore,
    config: Optional[EngineConfig] = None,
    registry: Optional[dict[str, int]] = None,
    clock: Optional[Callable[[], int]] = None,
    debug: bool = False,
) -> FastAPI:
    state = ServiceState(
        data_dir, trust_store, config or EngineConfig(), registry, clock, debug
    )
    app = FastAPI(title="modpipe moderation service", version="0.1.0")
    app.state.service = state

    def _decision_json(decision) -> dict:
        return decision.to_record()

    @app.post("/v1/content", status_code=202)
    async def ingest(
        manifest: str = Form(...),
        media: UploadFile = None,
        marker: UploadFile = None,
    ):
        try:
            record_obj = json.loads(manifest)
            content_id = record_obj["id"]
            modality = record_obj["modality"]
            origin_obj = record_obj.get("origin", {})
            origin = OriginContext(
                source_id=origin_obj.get("source_id", "unknown"),
                category_tags=frozenset(origin_obj.get("category_tags") or ["uncategorized"]),
                expected_reach=int(origin_obj.get("expected_reach", 0)),
                verified_source=bool(origin_obj.get("verified_source", False)),
            )
        except (ValueError, KeyError) as exc:
            raise HTTPException(400, f"bad manifest record: {exc}")
        if media is None:
            raise HTTPException(400, "media file is required")
        payload = await media.read()
        marker_block = await marker.read() if marker is not None else None
        lock = state.content_lock(content_id)
        with lock:
            existing = state.log.latest(content_id)
            if existing is not None:
                return {"content_id": content_id, "existing": True}
            item = ContentItem(
                id=content_id,
                modality=modality,
                payload=payload,
                origin=origin,
                marker_block=marker_block,
            )
            truth = (record_obj.get("ground_truth") or {}).get("is_deepfake")
            state.store_content(item)
            state.ingest_count[content_id] = state.ingest_count.get(content_id, 0) + 1
            try:
                decision = state.engine.moderate(
                    ManifestRecord(item=item, payload_path="", is_deepfake=truth)
                )
            except StorageFailure as exc:
                raise HTTPException(503, str(exc))
            except ConfigInvalid as exc:
                raise HTTPException(400, str(exc))
            if decision.status == "provisional":
                with state.lock:
                    task = state.engine.open_tasks[f"task-{content_id}"]
                    state.tasks[task.task_id] = task
                    state.verdicts.setdefault(task.task_id, [])
                    state._save_tasks()
        return {"content_id": content_id, "existing": False}

    @app.get("/v1/content/{content_id}/decision")
    def get_decision(content_id: str):
        decision = state.log.latest(content_id)
        if decision is None:
            raise HTTPException(404, f"no decision for {content_id}")
        return _decision_json(decision)

    @app.get("/v1/content/{content_id}/media")
    def get_media(content_id: str):
        item = state.load_content(content_id)
        if item is None:
            raise HTTPException(404, f"no content {content_id}")
        return Response(content=item.payload, media_type=MEDIA_TYPES[item.modality])

    @app.get("/v1/review/queue")
    def review_queue(verifier: str = Query(...)):
        if verifier not in state.verifiers:
            raise HTTPException(401, f"unknown verifier {verifier}")
        with state.lock:
            views = []
            for task in list(state.tasks.values()):
                task = state.refresh_task(task)
                if task.state != "open":
                    continue
                voted = {v.verifier_id for v in state.verdicts.get(task.task_id, [])}
                if verifier in voted:
                    continue
                views.append(state.task_view(task))
        return {"tasks": views}

    @app.post("/v1/review/{task_id}/verdict")
    def submit_verdict(task_id: str, body: dict):
        verifier_id = body.get("verifier_id", "")
        judgment = body.get("judgment", "")
        rationale = body.get("rationale", "")
        signature_b64 = body.get("signature_b64", "")
        if judgment not in ("trustworthy", "untrustworthy", "abstain"):
            raise HTTPException(400, f"bad judgment {judgment!r}")
        profile = state.verifiers.get(verifier_id)
        if profile is None:
            raise HTTPException(401, f"unknown verifier {verifier_id}")
        with state.lock:
            known = state.tasks.get(task_id)
            if known is None:
                raise HTTPException(404, f"no task {task_id}")
            content_id = known.content_id
        with state.content_lock(content_id), state.lock:
            task = state.refresh_task(state.tasks[task_id])
            if task.state != "open":
                raise HTTPException(409, f"task {task_id} is {task.state}")
            voted = {v.verifier_id for v in state.verdicts.get(task_id, [])}
            if verifier_id in voted:
                raise HTTPException(409, f"{verifier_id} already voted on {task_id}")
            message = verdict_message(verifier_id, judgment, rationale, task_id, task.content_id)
            try:
                signature = base64.b64decode(signature_b64)
            except Exception:
                raise HTTPException(400, "signature_b64 is not base64")
            if not verify_bytes(profile.public_key, signature, message):
                raise HTTPException(401, "signature does not verify")
            state.verdicts.setdefault(task_id, []).append(
                StoredVerdict(verifier_id, judgment, rationale, signature_b64)
            )
            received = len(state.verdicts[task_id])
            task = replace(task, received=received)
            state.tasks[task_id] = task
            quorum_met = (
                len([v for v in state.verdicts[task_id] if v.judgment != "abstain"])
                >= task.required_quorum
            )
            decision_record = None
            if quorum_met:
                verdicts = [
                    TrustedVerdict(v.verifier_id, v.judgment, v.rationale)
                    for v in state.verdicts[task_id]
                ]
                decision = state.engine.reevaluate(
                    content_id,
                    trusted_verdicts=verdicts,
                    profiles=state.verifiers,
                )
                decision_record = decision.to_record()
                if decision.status == "final":
                    task = replace(task, state="satisfied")
                    state.tasks[task_id] = task
            state._save_tasks()
        return {
            "task_id": task_id,
            "state": task.state,
            "received": task.received,
            "quorum_met": quorum_met,
            "decision": decision_record,
        }

    @app.get("/v1/policy")
    def get_policy():
        return {
            "config": state.engine.config.to_json(),
            "config_fingerprint": state.engine.fingerprint,
        }

    @app.put("/v1/policy")
    def put_policy(body: dict):
        with state.lock:
            merged = state.engine.config.to_json()
            for section in ("scoring", "risk", "detection", "escalation"):
                if section in body:
                    merged[section] = body[section]
            try:
                new_config = EngineConfig.from_json(merged)
            except (ConfigInvalid, ValueError, KeyError) as exc:
                raise HTTPException(400, f"invalid policy: {exc}")
            state.engine.set_config(new_config)
            (state.data_dir / "policy.json").write_text(
                json.dumps(new_config.to_json(), indent=1), encoding="utf-8"
            )
        return {
            "config": new_config.to_json(),
            "config_fingerprint": state.engine.fingerprint,
        }

    @app.get("/v1/policy/decision-table", response_class=PlainTextResponse)
    def get_decision_table():
        return decision_table_csv(state.engine.config.scoring)

    @app.post("/v1/policy/decision-table", response_class=PlainTextResponse)
    def candidate_decision_table(body: dict):
        try:
            config = PolicyConfig.from_json(body)
        except (ConfigInvalid, ValueError) as exc:
            raise HTTPException(400, f"invalid scoring config: {exc}")
        return decision_table_csv(config)

    @app.get("/v1/decisions")
    def list_decisions(limit: int = 1000, offset: int = 0):
        decisions = state.log.all_decisions()[offset : offset + limit]
        return {"decisions": [d.to_record() for d in decisions], "total": len(state.log)}

    @app.post("/v1/audit/run")
    def run_audit(body: dict):
        truth = body.get("ground_truth")
        if not isinstance(truth, dict):
            raise HTTPException(400, "ground_truth map is required")
        n = int(body.get("n", 0))
        seed = int(body.get("seed", 0))
        strata = body.get("strata", "label")
        strata_fn = label_strata if strata == "label" else None
        latest = list({d.content_id: d for d in state.log.all_decisions()}.values())
        try:
            sampled = sample_decisions(latest, n, seed, strata_fn)
            report = evaluate(sampled, truth, strata=strata, seed=seed)
        except InsufficientPopulation as exc:
            raise HTTPException(400, str(exc))
        except MissingGroundTruth as exc:
            raise HTTPException(400, str(exc))
        audit_id = uuid.uuid4().hex[:12]
        state.audits[audit_id] = report.to_json()
        return {"audit_id": audit_id, "report": state.audits[audit_id]}

    @app.get("/v1/audit/{audit_id}")
    def get_audit(audit_id: str):
        report = state.audits.get(audit_id)
        if report is None:
            raise HTTPException(404, f"no audit {audit_id}")
        return report

    if debug:

        @app.get("/v1/debug/decisions/{content_id}/verify")
        def debug_verify(content_id: str):
            decision = state.log.latest(content_id)
            if decision is None:
                raise HTTPException(404, f"no decision for {content_id}")
            rederived = rederive_label(decision, state.engine.config.scoring)
            return {
                "content_id": content_id,
                "label": decision.label.value,
                "rederived": rederived.value,
                "consistent": rederived == decision.label,
            }

        @app.get("/v1/debug/ingest-counts")
        def debug_ingest_counts():
            return state.ingest_count

    return app


def preload_manifest(state: ServiceState, manifest_path: Path) -> int:
    """Moderate a manifest into the service state before serving.

    Used by `modpipe run --serve`: decisions land in the same log the
    service replays, and provisional items open review tasks.
    """
    from .core import read_manifest

    count = 0
    for record in read_manifest(manifest_path):
        if state.log.latest(record.item.id) is not None:
            continue
        state.store_content(record.item)
        decision = state.engine.moderate(record)
        if decision.status == "provisional":
            task = state.engine.open_tasks[f"task-{record.item.id}"]
            state.tasks[task.task_id] = task
            state.verdicts.setdefault(task.task_id, [])
        count += 1
    state._save_tasks()
    return count


def serve(
    data_dir: Path,
    trust_store_path: Path,
    config: Optional[EngineConfig] = None,
    port: int = 8080,
    registry: Optional[dict[str, int]] = None,
    debug: bool = False,
    manifest_path: Optional[Path] = None,
) -> None:
    import uvicorn

    app = create_app(
        Path(data_dir),
        TrustStore.load(trust_store_path),
        config=config,
        registry=registry,
        debug=debug,
    )
    if manifest_path is not None:
        count = preload_manifest(app.state.service, manifest_path)
        print(f"preloaded {count} manifest items")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
