/** Shared wire types mirroring the moderation service's JSON schemas. */

export type Label = "DEEPFAKE" | "UNTRUSTWORTHY" | "TRUSTWORTHY" | "VERIFIED";

export type MarkerStatus = "valid_positive" | "valid_negative" | "invalid" | "absent";

export type Judgment = "trustworthy" | "untrustworthy" | "abstain";

export interface ScoreVector {
  v_t: number | null;
  v_tr: number | null;
  v_r: number;
}

/** The scoring section of the policy bundle (server PolicyConfig). */
export interface ScoringConfig {
  weights: { technical: number; trusted: number; risk: number };
  threshold: number;
  tie_rule?: "untrustworthy" | "trustworthy";
  indeterminate?: "zero" | "escalate";
  label_names?: Record<string, string>;
}

export interface DecisionRecord {
  seq: number;
  content_id: string;
  label: Label;
  score: number | null;
  score_vector: ScoreVector | null;
  marker: { status: MarkerStatus; reasons: string[] };
  evidence: Record<string, unknown>;
  status: "final" | "provisional";
  decided_at: number;
  config_fingerprint: string;
}

/** One queue entry: everything a reviewer may see about an open task. */
export interface TaskView {
  task_id: string;
  content_id: string;
  created_at: number;
  required_quorum: number;
  received: number;
  state: "open" | "satisfied" | "expired";
  modality: "raster" | "audio" | "text" | null;
  marker_status: MarkerStatus | null;
  marker_reasons: string[];
  technical_confidence: number | null;
  risk: {
    level: "low" | "high";
    v_r: number;
    matched_categories: string[];
    reach_exceeded: boolean;
  } | null;
  provisional_label: Label | null;
}

export interface PolicyResponse {
  config: { scoring: ScoringConfig; [section: string]: unknown };
  config_fingerprint: string;
}

export interface VerdictResponse {
  task_id: string;
  state: string;
  received: number;
  quorum_met: boolean;
  decision: DecisionRecord | null;
}
