import base64
import json

import pytest
from click.testing import CliRunner

from modpipe.cli import mark, modpipe
from modpipe.core import encode_raster
from modpipe.corpus import build_issuer, smooth_raster

runner = CliRunner()


@pytest.fixture
def corpus_dir(tmp_path):
    spec = {
        "n_items": 120,
        "deepfake_fraction": 0.5,
        "marker_coverage": 0.4,
        "negative_marker_coverage": 0.2,
        "tamper_fraction": 0.05,
        "seed": 11,
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out_dir = tmp_path / "corpus"
    result = runner.invoke(modpipe, ["gen-corpus", "--spec", str(spec_path), "--out", str(out_dir)])
    assert result.exit_code == 0, result.output
    return out_dir


class TestModpipeFlow:
    def test_gen_corpus_layout(self, corpus_dir):
        assert (corpus_dir / "manifest.jsonl").exists()
        assert (corpus_dir / "truth.json").exists()
        assert (corpus_dir / "trust_store.json").exists()
        assert (corpus_dir / "generator_keys.json").exists()
        assert len(list((corpus_dir / "media").glob("*.pgm"))) == 120

    def test_gen_corpus_deterministic(self, tmp_path):
        spec_path = tmp_path / "s.json"
        spec_path.write_text(json.dumps({"n_items": 30, "seed": 4}))
        for name in ("a", "b"):
            result = runner.invoke(modpipe, ["gen-corpus", "--spec", str(spec_path), "--out", str(tmp_path / name)])
            assert result.exit_code == 0
        a = (tmp_path / "a" / "manifest.jsonl").read_bytes()
        b = (tmp_path / "b" / "manifest.jsonl").read_bytes()
        assert a == b
        for media in (tmp_path / "a" / "media").iterdir():
            assert media.read_bytes() == (tmp_path / "b" / "media" / media.name).read_bytes()

    def test_run_audit_sweep(self, corpus_dir, tmp_path):
        log_path = tmp_path / "decisions.log"
        result = runner.invoke(
            modpipe,
            [
                "run",
                "--manifest", str(corpus_dir / "manifest.jsonl"),
                "--trust-store", str(corpus_dir / "trust_store.json"),
                "--registry", str(corpus_dir / "generator_keys.json"),
                "--out", str(log_path),
                "--detectors", "residue,simulated:tpr=0.8;fpr=0.1;seed=3",
                "--pool", "n=5,p=0.9,q=3,seed=8",
            ],
        )
        assert result.exit_code == 0, result.output
        assert log_path.exists()

        report_path = tmp_path / "report.json"
        result = runner.invoke(
            modpipe,
            [
                "audit",
                "--log", str(log_path),
                "--truth", str(corpus_dir / "truth.json"),
                "--n", "60", "--seed", "7",
                "--report", str(report_path),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(report_path.read_text())
        assert report["sample"]["n"] == 60
        assert report_path.with_suffix(".png").exists()  # figure alongside report

        csv_path = tmp_path / "sweep.csv"
        result = runner.invoke(
            modpipe,
            [
                "sweep",
                "--log", str(log_path),
                "--truth", str(corpus_dir / "truth.json"),
                "--theta-grid", "0:1:0.25",
                "--out", str(csv_path),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 6
        assert csv_path.with_suffix(".png").exists()  # figure alongside CSV

    def test_verified_sources_registry(self, corpus_dir, tmp_path):
        # mark every corpus source verified and relax category risk via override
        manifest = (corpus_dir / "manifest.jsonl").read_text().splitlines()
        sources = sorted({json.loads(line)["origin"]["source_id"] for line in manifest})
        registry_path = tmp_path / "verified.json"
        registry_path.write_text(json.dumps(sources))
        policy_path = tmp_path / "policy.json"
        policy_path.write_text(
            json.dumps({"risk": {"high_risk_categories": ["political_communication", "elections"],
                                 "reach_threshold": 100000, "verified_source_overrides": True}})
        )
        logs = {}
        for name, args in {
            "with": ["--verified-sources", str(registry_path)],
            "without": [],
        }.items():
            log_path = tmp_path / f"{name}.log"
            result = runner.invoke(
                modpipe,
                ["run", "--manifest", str(corpus_dir / "manifest.jsonl"),
                 "--trust-store", str(corpus_dir / "trust_store.json"),
                 "--policy", str(policy_path),
                 "--out", str(log_path), "--detectors", "simulated:tpr=1.0;fpr=0.0;seed=1"] + args,
            )
            assert result.exit_code == 0, result.output
            from modpipe.pipeline import DecisionLog

            logs[name] = DecisionLog(log_path).all_decisions()
        # verified sources downgrade category-matched risk, so v_r can only improve
        improved = 0
        for a, b in zip(logs["with"], logs["without"]):
            va = a.score_vector.v_r if a.score_vector else None
            vb = b.score_vector.v_r if b.score_vector else None
            if va is not None and vb is not None:
                assert va >= vb
                improved += va > vb
        assert improved > 0

    def test_decision_table_stdout_and_file(self, tmp_path):
        result = runner.invoke(modpipe, ["decision-table"])
        assert result.exit_code == 0
        assert result.output.splitlines()[0] == "marker_status,v_t,v_tr,v_r,score,label"
        out_path = tmp_path / "table.csv"
        result = runner.invoke(modpipe, ["decision-table", "--out", str(out_path)])
        assert result.exit_code == 0
        assert len(out_path.read_text().strip().splitlines()) == 33


class TestMarkFlow:
    def _write_raster(self, tmp_path, name="input.pgm", seed=3):
        path = tmp_path / name
        path.write_bytes(encode_raster(smooth_raster(seed, 64, 64)))
        return path

    def test_statistical_embed_detect(self, tmp_path):
        src = self._write_raster(tmp_path)
        out = tmp_path / "marked.pgm"
        result = runner.invoke(
            mark,
            ["embed", "--scheme", "statistical", "--key", "0xFEED", "--polarity", "positive",
             "--in", str(src), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(mark, ["detect", "--scheme", "statistical", "--key", "0xFEED", "--in", str(out)])
        body = json.loads(result.output)
        assert body["correlation"] == 1.0 and body["verdict"] == "present"

    def test_signed_embed_extract_attack(self, tmp_path):
        issuer = build_issuer(5)
        signer_path = tmp_path / "signer.json"
        signer_path.write_text(
            json.dumps(
                {
                    "secret_key_b64": base64.b64encode(issuer.issuer_secret).decode(),
                    "chain_b64": base64.b64encode(issuer.chain.to_bytes()).decode(),
                }
            )
        )
        src = self._write_raster(tmp_path, "content.pgm", seed=9)
        marked = tmp_path / "marked.pgm"
        result = runner.invoke(
            mark,
            ["embed", "--scheme", "cryptographic", "--signer", str(signer_path),
             "--polarity", "negative", "--in", str(src), "--out", str(marked)],
        )
        assert result.exit_code == 0, result.output
        assert marked.with_suffix(".pgm.marker").exists()

        result = runner.invoke(mark, ["extract", "--in", str(marked)])
        assert result.exit_code == 0
        info = json.loads(result.output)
        assert info["scheme"] == "cryptographic" and info["polarity"] == "negative"

        stripped = tmp_path / "stripped.pgm"
        result = runner.invoke(
            mark,
            ["attack", "--attack", "strip_metadata", "--in", str(marked), "--out", str(stripped)],
        )
        assert result.exit_code == 0
        result = runner.invoke(mark, ["extract", "--in", str(stripped)])
        assert result.exit_code == 1
        assert "no marker found" in result.output

    def test_attack_params_json(self, tmp_path):
        src = self._write_raster(tmp_path, "noise.pgm", seed=4)
        out = tmp_path / "noisy.pgm"
        result = runner.invoke(
            mark,
            ["attack", "--attack", "noise", "--params", '{"sigma": 4, "seed": 2}',
             "--in", str(src), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() != src.read_bytes()

    def test_bad_crop_reports_error(self, tmp_path):
        src = self._write_raster(tmp_path, "crop.pgm", seed=6)
        result = runner.invoke(
            mark,
            ["attack", "--attack", "crop", "--params", '{"rect": [60, 60, 30, 30]}',
             "--in", str(src), "--out", str(tmp_path / "x.pgm")],
        )
        assert result.exit_code != 0
