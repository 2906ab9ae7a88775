/**
 * Client-side reimplementation of the score system and decision table.
 *
 * The arithmetic mirrors the server operation-for-operation (same
 * normalization and summation order over IEEE doubles) and the CSV
 * formatter mirrors the server's shortest round-trip float style, so
 * what-if previews can be golden-file-compared against the server's
 * decision-table export.
 */

import type { DecisionRecord, Label, MarkerStatus, ScoreVector, ScoringConfig } from "./types.js";

export const MARKER_STATE_ORDER: MarkerStatus[] = [
  "valid_positive",
  "valid_negative",
  "invalid",
  "absent",
];

export interface PolicyValidation {
  ok: boolean;
  problems: string[];
}

/** Mirrors the server's PUT /v1/policy validation rules. */
export function validateScoring(config: ScoringConfig): PolicyValidation {
  const problems: string[] = [];
  const { technical, trusted, risk } = config.weights;
  if (Math.min(technical, trusted, risk) < 0) {
    problems.push("weights must be non-negative");
  }
  if (technical + trusted + risk === 0) {
    problems.push("weights must not all be zero");
  }
  if (!(config.threshold >= 0 && config.threshold <= 1)) {
    problems.push("threshold must lie in [0, 1]");
  }
  return { ok: problems.length === 0, problems };
}

function normalizedWeights(config: ScoringConfig): [number, number, number] {
  const total = config.weights.technical + config.weights.trusted + config.weights.risk;
  return [
    config.weights.technical / total,
    config.weights.trusted / total,
    config.weights.risk / total,
  ];
}

function resolve(vector: ScoreVector): { v_t: number; v_tr: number; v_r: number } {
  return {
    v_t: vector.v_t === null ? 0 : vector.v_t,
    v_tr: vector.v_tr === null ? 0 : vector.v_tr,
    v_r: vector.v_r,
  };
}

export function computeScore(vector: ScoreVector, config: ScoringConfig): number {
  const [wT, wTr, wR] = normalizedWeights(config);
  const v = resolve(vector);
  return wT * v.v_t + wTr * v.v_tr + wR * v.v_r;
}

export function assignLabel(
  status: MarkerStatus,
  vector: ScoreVector | null,
  config: ScoringConfig,
): Label {
  if (status === "valid_positive") return "DEEPFAKE";
  if (status === "valid_negative") return "VERIFIED";
  if (vector === null) throw new Error("unmarked content needs a score vector");
  const score = computeScore(vector, config);
  if ((config.tie_rule ?? "untrustworthy") === "trustworthy") {
    return score >= config.threshold ? "TRUSTWORTHY" : "UNTRUSTWORTHY";
  }
  return score > config.threshold ? "TRUSTWORTHY" : "UNTRUSTWORTHY";
}

export interface TableRow {
  marker_status: MarkerStatus;
  v_t: number;
  v_tr: number;
  v_r: number;
  score: number;
  label: Label;
}

/** All 4 marker states x 8 binary vectors in the server's stable order. */
export function decisionTable(config: ScoringConfig): TableRow[] {
  const rows: TableRow[] = [];
  for (const status of MARKER_STATE_ORDER) {
    for (const v_t of [0, 1]) {
      for (const v_tr of [0, 1]) {
        for (const v_r of [0, 1]) {
          const vector = { v_t, v_tr, v_r };
          rows.push({
            marker_status: status,
            v_t,
            v_tr,
            v_r,
            score: computeScore(vector, config),
            label: assignLabel(status, vector, config),
          });
        }
      }
    }
  }
  return rows;
}

/** Server-equivalent float formatting: shortest round-trip, with a
 * trailing `.0` on integral values. */
export function formatScore(score: number): string {
  return Number.isInteger(score) ? score.toFixed(1) : String(score);
}

export function decisionTableCsv(config: ScoringConfig): string {
  const lines = ["marker_status,v_t,v_tr,v_r,score,label"];
  for (const row of decisionTable(config)) {
    lines.push(
      `${row.marker_status},${row.v_t},${row.v_tr},${row.v_r},${formatScore(row.score)},${row.label}`,
    );
  }
  return lines.join("\n") + "\n";
}

export interface LabelFlip {
  content_id: string;
  from: Label;
  to: Label;
}

/**
 * What-if preview: which logged decisions change label under a
 * candidate config, recomputed entirely client-side from each
 * decision's cached marker status and score vector.
 */
export function whatIfFlips(decisions: DecisionRecord[], candidate: ScoringConfig): LabelFlip[] {
  const flips: LabelFlip[] = [];
  for (const decision of decisions) {
    const recomputed = assignLabel(
      decision.marker.status,
      decision.score_vector ?? { v_t: 0, v_tr: 0, v_r: 1 },
      candidate,
    );
    if (recomputed !== decision.label) {
      flips.push({ content_id: decision.content_id, from: decision.label, to: recomputed });
    }
  }
  return flips;
}
