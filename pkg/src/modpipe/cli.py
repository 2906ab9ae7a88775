"""Command-line entry points.

``modpipe`` drives the pipeline (run, gen-corpus, audit, sweep,
decision-table, serve); ``mark`` operates on individual media files
(embed, extract, detect, attack). Audit and sweep render a matplotlib
figure next to their delimited output unless --no-figure is given.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .audit import evaluate, label_strata, parse_theta_grid, sample_decisions, sweep, sweep_csv
from .core import ContentItem, read_manifest
from .corpus import CorpusSpec, SimulatedVerifierPool, generate_corpus
from .detection import ResidueDetector, SimulatedDetector
from .errors import MalformedMarkerBlock, ModpipeError, NoMarkerFound
from .markers import (
    AttackSpec,
    Polarity,
    Scheme,
    apply_attack,
    detect_frequency,
    detect_statistical,
    embed_frequency,
    embed_metadata_marker,
    embed_statistical,
    extract_metadata_marker,
    sign_content,
)
from .pipeline import DecisionLog, EngineConfig, ModerationEngine
from .risk import is_verified_source, load_verified_sources
from .scoring import decision_table_csv
from .trustchain import CertChain, TrustStore


def _load_engine_config(path: Path | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    return EngineConfig.load(path)


def _modality_for(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        return "raster"
    if suffix in (".pcm", ".pcm1"):
        return "audio"
    return "text"


def _load_item(path: Path) -> ContentItem:
    marker_path = path.with_suffix(path.suffix + ".marker")
    return ContentItem(
        id=path.stem,
        modality=_modality_for(path),
        payload=path.read_bytes(),
        marker_block=marker_path.read_bytes() if marker_path.exists() else None,
    )


def _save_item(item: ContentItem, path: Path) -> None:
    path.write_bytes(item.payload)
    marker_path = path.with_suffix(path.suffix + ".marker")
    if item.marker_block is not None:
        marker_path.write_bytes(item.marker_block)
    elif marker_path.exists():
        marker_path.unlink()


def _parse_key(text: str) -> int:
    return int(text, 16) if text.lower().startswith("0x") else int(text)


@click.group()
def modpipe():
    """Multi-level deepfake moderation pipeline."""


@modpipe.command("gen-corpus")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def gen_corpus(spec_path: Path, out_dir: Path):
    """Generate a seeded synthetic corpus with ground truth."""
    spec = CorpusSpec.load(spec_path)
    corpus = generate_corpus(spec, out_dir)
    click.echo(f"wrote {len(corpus.records)} items to {out_dir}")


@modpipe.command("run")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--trust-store", "trust_store_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "log_path", type=click.Path(path_type=Path), required=True)
@click.option("--detectors", default="residue", help="Comma list: residue, simulated:tpr=0.8,fpr=0.1,seed=1")
@click.option("--registry", "registry_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--verified-sources", "verified_sources_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="JSON array of verified source_ids")
@click.option("--pool", default=None, help="Simulated verifier pool: n=9,p=0.8,q=3,seed=2")
@click.option("--batch/--serve", default=True)
@click.option("--port", default=8080, show_default=True)
def run(manifest_path, policy_path, trust_store_path, log_path, detectors, registry_path,
        verified_sources_path, pool, batch, port):
    """Moderate a manifest into an append-only decision log."""
    config = _load_engine_config(policy_path)
    trust_store = TrustStore.load(trust_store_path)
    registry = {}
    if registry_path is not None:
        raw = json.loads(Path(registry_path).read_text(encoding="utf-8"))
        registry = {k: _parse_key(v) for k, v in raw.items()}
    detector_objs = []
    for token in detectors.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "residue":
            detector_objs.append(ResidueDetector(registry, tau=config.detection.tau))
        elif token.startswith("simulated:"):
            params = dict(kv.split("=") for kv in token.split(":", 1)[1].split(";"))
            detector_objs.append(
                SimulatedDetector(
                    tpr=float(params.get("tpr", 0.8)),
                    fpr=float(params.get("fpr", 0.1)),
                    seed=int(params.get("seed", 1)),
                )
            )
        else:
            raise click.UsageError(f"unknown detector spec {token!r}")
    verifier_pool = None
    if pool:
        params = dict(kv.split("=") for kv in pool.split(","))
        from .corpus import PoolSpec

        verifier_pool = SimulatedVerifierPool(
            PoolSpec(int(params.get("n", 9)), float(params.get("p", 0.8)), int(params.get("q", 3))),
            seed=int(params.get("seed", 2)),
        )
    if not batch:
        from .service import serve

        serve(
            data_dir=log_path.parent,
            trust_store_path=trust_store_path,
            config=config,
            port=port,
            registry=registry,
            manifest_path=manifest_path,
        )
        return
    log = DecisionLog(log_path)
    engine = ModerationEngine(config, trust_store, detector_objs, log, verifier_pool)
    verified_sources = (
        load_verified_sources(verified_sources_path) if verified_sources_path is not None else None
    )
    count = 0
    for record in read_manifest(manifest_path):
        if verified_sources is not None:
            origin = dataclasses.replace(
                record.item.origin,
                verified_source=is_verified_source(record.item.origin, verified_sources),
            )
            record = dataclasses.replace(record, item=dataclasses.replace(record.item, origin=origin))
        engine.moderate(record)
        count += 1
    click.echo(f"moderated {count} items -> {log_path} (config {engine.fingerprint[:12]})")


@modpipe.command("audit")
@click.option("--log", "log_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--n", "sample_n", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strata", type=click.Choice(["none", "label"]), default="label", show_default=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), required=True)
@click.option("--figure/--no-figure", default=True, show_default=True)
def audit_cmd(log_path, truth_path, sample_n, seed, strata, report_path, figure):
    """Random-sample audit of a decision log against ground truth."""
    log = DecisionLog(log_path)
    truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
    strata_fn = label_strata if strata == "label" else None
    sampled = sample_decisions(log.all_decisions(), sample_n, seed, strata_fn)
    report = evaluate(sampled, truth, strata=strata, seed=seed)
    Path(report_path).write_text(json.dumps(report.to_json(), indent=1), encoding="utf-8")
    click.echo(json.dumps(report.to_json()["counts"]))
    if figure:
        from .figures import render_audit

        png = Path(report_path).with_suffix(".png")
        render_audit(report, png)
        click.echo(f"figure -> {png}")


@modpipe.command("sweep")
@click.option("--log", "log_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--theta-grid", default="0:1:0.05", show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--figure/--no-figure", default=True, show_default=True)
def sweep_cmd(log_path, truth_path, policy_path, theta_grid, out_path, figure):
    """Replay cached evidence across a threshold grid; write CSV."""
    log = DecisionLog(log_path)
    truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
    config = _load_engine_config(policy_path).scoring
    rows = sweep(log.all_decisions(), truth, config, parse_theta_grid(theta_grid))
    Path(out_path).write_text(sweep_csv(rows), encoding="utf-8")
    click.echo(f"{len(rows)} grid points -> {out_path}")
    if figure:
        from .figures import render_tradeoff

        png = Path(out_path).with_suffix(".png")
        render_tradeoff(rows, png)
        click.echo(f"figure -> {png}")


@modpipe.command("decision-table")
@click.option("--policy", "policy_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def decision_table_cmd(policy_path, out_path):
    """Export the 32-row marker-state x score-vector label table."""
    config = _load_engine_config(policy_path).scoring
    csv_text = decision_table_csv(config)
    if out_path is None:
        click.echo(csv_text, nl=False)
    else:
        Path(out_path).write_text(csv_text, encoding="utf-8")
        click.echo(f"decision table -> {out_path}")


@modpipe.command("serve")
@click.option("--data-dir", type=click.Path(path_type=Path), envvar="MODPIPE_DATA_DIR", required=True)
@click.option("--trust-store", "trust_store_path", type=click.Path(exists=True, path_type=Path), envvar="MODPIPE_TRUST_STORE", required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--registry", "registry_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--port", type=int, envvar="MODPIPE_PORT", default=8080, show_default=True)
@click.option("--debug", is_flag=True, default=False)
def serve_cmd(data_dir, trust_store_path, policy_path, registry_path, port, debug):
    """Run the HTTP moderation service."""
    from .service import serve

    registry = {}
    if registry_path is not None:
        raw = json.loads(Path(registry_path).read_text(encoding="utf-8"))
        registry = {k: _parse_key(v) for k, v in raw.items()}
    serve(
        data_dir=data_dir,
        trust_store_path=trust_store_path,
        config=_load_engine_config(policy_path),
        port=port,
        registry=registry,
        debug=debug,
    )


# ---------------------------------------------------------------------------
# mark: single-file marker operations
# ---------------------------------------------------------------------------

@click.group()
def mark():
    """Embed, extract, detect, and attack provenance markers."""


@mark.command("embed")
@click.option("--scheme", type=click.Choice([s.value for s in Scheme]), required=True)
@click.option("--key", default=None, help="64-bit key for statistical/frequency schemes")
@click.option("--polarity", type=click.Choice([p.value for p in Polarity]), default="positive", show_default=True)
@click.option("--signer", "signer_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="JSON issuer bundle {secret_key_b64, chain_b64} for signed schemes")
@click.option("--in", "in_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def mark_embed(scheme, key, polarity, signer_path, in_path, out_path):
    item = _load_item(in_path)
    pol = Polarity(polarity)
    if scheme in ("statistical", "frequency"):
        if key is None:
            raise click.UsageError(f"--key is required for the {scheme} scheme")
        k = _parse_key(key)
        item = (
            embed_statistical(item, k, pol)
            if scheme == "statistical"
            else embed_frequency(item, k, pol)
        )
    else:
        if signer_path is None:
            raise click.UsageError(f"--signer is required for the {scheme} scheme")
        import base64

        bundle = json.loads(Path(signer_path).read_text(encoding="utf-8"))
        secret = base64.b64decode(bundle["secret_key_b64"])
        chain = CertChain.from_bytes(base64.b64decode(bundle["chain_b64"]))
        marker = sign_content(item, secret, pol, chain, scheme=Scheme(scheme))
        item = embed_metadata_marker(item, marker)
    _save_item(item, out_path)
    click.echo(f"embedded {scheme} marker -> {out_path}")


@mark.command("extract")
@click.option("--in", "in_path", type=click.Path(exists=True, path_type=Path), required=True)
def mark_extract(in_path):
    item = _load_item(in_path)
    try:
        marker = extract_metadata_marker(item)
    except NoMarkerFound:
        click.echo("no marker found")
        sys.exit(1)
    except MalformedMarkerBlock as exc:
        click.echo(f"malformed marker block: {exc}")
        sys.exit(2)
    click.echo(
        json.dumps(
            {
                "scheme": marker.scheme.value,
                "polarity": marker.polarity.value,
                "issuer_id": marker.issuer_id,
                "key_id": marker.key_id,
                "payload_digest": marker.payload_digest.hex(),
            }
        )
    )


@mark.command("detect")
@click.option("--scheme", type=click.Choice(["statistical", "frequency"]), required=True)
@click.option("--key", required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--tau", type=float, default=0.5, show_default=True)
def mark_detect(scheme, key, in_path, tau):
    item = _load_item(in_path)
    k = _parse_key(key)
    corr = detect_statistical(item, k) if scheme == "statistical" else detect_frequency(item, k)
    present = "present" if corr >= tau else ("negative" if corr <= -tau else "absent")
    click.echo(json.dumps({"correlation": corr, "verdict": present}))


@mark.command("attack")
@click.option("--attack", "kind", type=click.Choice(["strip_metadata", "recompress", "crop", "noise"]), required=True)
@click.option("--params", default="{}", help='JSON, e.g. {"q":2} or {"rect":[4,4,48,48]} or {"sigma":8,"seed":1}')
@click.option("--in", "in_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def mark_attack(kind, params, in_path, out_path):
    obj = json.loads(params)
    spec = AttackSpec(
        kind=kind,
        q=obj.get("q"),
        rect=tuple(obj["rect"]) if "rect" in obj else None,
        sigma=obj.get("sigma"),
        seed=int(obj.get("seed", 0)),
    )
    try:
        item = apply_attack(_load_item(in_path), spec)
    except ModpipeError as exc:
        raise click.ClickException(str(exc))
    _save_item(item, out_path)
    click.echo(f"applied {kind} -> {out_path}")


if __name__ == "__main__":
    modpipe()
