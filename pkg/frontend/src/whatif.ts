/**
 * Policy what-if panel logic: preview label flips under candidate
 * weights/threshold from a loaded decision snapshot, entirely
 * client-side, before committing via PUT /v1/policy.
 */

import { ApiClient } from "./api.js";
import { decisionTableCsv, validateScoring, whatIfFlips, type LabelFlip } from "./scoring.js";
import type { DecisionRecord, ScoringConfig } from "./types.js";

export interface WhatIfPreview {
  candidate: ScoringConfig;
  valid: boolean;
  problems: string[];
  flips: LabelFlip[];
  commitEnabled: boolean;
}

export class PolicyPanel {
  decisions: DecisionRecord[] = [];
  currentFingerprint = "";

  constructor(private api: ApiClient) {}

  async load(): Promise<void> {
    const policy = await this.api.getPolicy();
    this.currentFingerprint = policy.config_fingerprint;
    this.decisions = await this.api.listDecisions();
  }

  preview(candidate: ScoringConfig): WhatIfPreview {
    const validation = validateScoring(candidate);
    return {
      candidate,
      valid: validation.ok,
      problems: validation.problems,
      flips: validation.ok ? whatIfFlips(this.decisions, candidate) : [],
      commitEnabled: validation.ok,
    };
  }

  /** Client table for display; parity with the server export is a test
   * invariant, not an assumption. */
  clientTableCsv(candidate: ScoringConfig): string {
    return decisionTableCsv(candidate);
  }

  async commit(candidate: ScoringConfig): Promise<string> {
    const validation = validateScoring(candidate);
    if (!validation.ok) {
      throw new Error(`cannot commit invalid policy: ${validation.problems.join("; ")}`);
    }
    const response = await this.api.putPolicy({ scoring: candidate });
    this.currentFingerprint = response.config_fingerprint;
    return this.currentFingerprint;
  }
}
