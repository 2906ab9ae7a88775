import { describe, expect, it } from "vitest";

import {
  assignLabel,
  computeScore,
  decisionTable,
  decisionTableCsv,
  formatScore,
  validateScoring,
  whatIfFlips,
} from "../src/scoring.js";
import type { DecisionRecord, ScoringConfig } from "../src/types.js";

const EQUAL: ScoringConfig = { weights: { technical: 1, trusted: 1, risk: 1 }, threshold: 0.5 };

function record(id: string, label: DecisionRecord["label"], v: [number, number, number]): DecisionRecord {
  return {
    seq: 0,
    content_id: id,
    label,
    score: null,
    score_vector: { v_t: v[0], v_tr: v[1], v_r: v[2] },
    marker: { status: "absent", reasons: [] },
    evidence: {},
    status: "final",
    decided_at: 0,
    config_fingerprint: "",
  };
}

describe("score computation", () => {
  it("equal weights majority rule over the full table", () => {
    for (const row of decisionTable(EQUAL)) {
      const ones = row.v_t + row.v_tr + row.v_r;
      if (row.marker_status === "valid_positive") expect(row.label).toBe("DEEPFAKE");
      else if (row.marker_status === "valid_negative") expect(row.label).toBe("VERIFIED");
      else expect(row.label).toBe(ones >= 2 ? "TRUSTWORTHY" : "UNTRUSTWORTHY");
    }
  });

  it("has 32 rows and a stable header", () => {
    expect(decisionTable(EQUAL)).toHaveLength(32);
    const lines = decisionTableCsv(EQUAL).trimEnd().split("\n");
    expect(lines[0]).toBe("marker_status,v_t,v_tr,v_r,score,label");
    expect(lines).toHaveLength(33);
  });

  it("tie goes untrustworthy by default, configurable the other way", () => {
    const half: ScoringConfig = { weights: { technical: 1, trusted: 1, risk: 0 }, threshold: 0.5 };
    expect(assignLabel("absent", { v_t: 1, v_tr: 0, v_r: 1 }, half)).toBe("UNTRUSTWORTHY");
    expect(
      assignLabel("absent", { v_t: 1, v_tr: 0, v_r: 1 }, { ...half, tie_rule: "trustworthy" }),
    ).toBe("TRUSTWORTHY");
  });

  it("indeterminate components substitute to zero", () => {
    expect(computeScore({ v_t: null, v_tr: 1, v_r: 1 }, EQUAL)).toBeCloseTo(2 / 3, 12);
  });

  it("scaling all weights changes no label", () => {
    const scaled: ScoringConfig = { weights: { technical: 2, trusted: 2, risk: 2 }, threshold: 0.5 };
    const a = decisionTable(EQUAL).map((r) => r.label);
    const b = decisionTable(scaled).map((r) => r.label);
    expect(a).toEqual(b);
  });
});

describe("validation mirror", () => {
  it("rejects all-zero weights", () => {
    const result = validateScoring({ weights: { technical: 0, trusted: 0, risk: 0 }, threshold: 0.5 });
    expect(result.ok).toBe(false);
  });

  it("rejects out-of-range threshold and negative weights", () => {
    expect(validateScoring({ weights: { technical: 1, trusted: 1, risk: 1 }, threshold: 1.2 }).ok).toBe(false);
    expect(validateScoring({ weights: { technical: -1, trusted: 1, risk: 1 }, threshold: 0.5 }).ok).toBe(false);
  });

  it("accepts the default", () => {
    expect(validateScoring(EQUAL).ok).toBe(true);
  });
});

describe("what-if flips", () => {
  const snapshot: DecisionRecord[] = [
    record("two-of-three", "TRUSTWORTHY", [1, 1, 0]),
    record("all-ones", "TRUSTWORTHY", [1, 1, 1]),
    record("one-of-three", "UNTRUSTWORTHY", [0, 0, 1]),
  ];

  it("raising the threshold flips 2/3-score items to untrustworthy", () => {
    const flips = whatIfFlips(snapshot, { ...EQUAL, threshold: 0.7 });
    expect(flips).toEqual([{ content_id: "two-of-three", from: "TRUSTWORTHY", to: "UNTRUSTWORTHY" }]);
  });

  it("scaling weights by two produces zero flips", () => {
    const flips = whatIfFlips(snapshot, {
      weights: { technical: 2, trusted: 2, risk: 2 },
      threshold: 0.5,
    });
    expect(flips).toEqual([]);
  });

  it("marker-dominated records never flip", () => {
    const marked: DecisionRecord = {
      ...record("marked", "DEEPFAKE", [1, 1, 1]),
      marker: { status: "valid_positive", reasons: [] },
    };
    expect(whatIfFlips([marked], { ...EQUAL, threshold: 0.99 })).toEqual([]);
  });
});

describe("float formatting parity", () => {
  it("matches the server's repr conventions", () => {
    expect(formatScore(2 / 3)).toBe("0.6666666666666666");
    expect(formatScore(1)).toBe("1.0");
    expect(formatScore(0)).toBe("0.0");
    expect(formatScore(0.5)).toBe("0.5");
  });
});
