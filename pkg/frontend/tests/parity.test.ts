/**
 * UI what-if parity: the client-side decision table must equal the
 * server's CSV export cell-for-cell for 20 random configs, zero
 * mismatches, against a live service.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { decisionTableCsv } from "../src/scoring.js";
import type { ScoringConfig } from "../src/types.js";
import { startServer, type LiveServer } from "./helpers/server.js";

let server: LiveServer;
let api: ApiClient;

beforeAll(async () => {
  server = await startServer(["par-0"]);
  api = new ApiClient(server.baseUrl);
});

afterAll(() => server?.stop());

// deterministic config generator (mulberry32) so failures reproduce
function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomConfig(next: () => number): ScoringConfig {
  // weights bounded away from zero keep scores in plain decimal notation
  const weight = () => 0.05 + next() * 4.95;
  return {
    weights: { technical: weight(), trusted: weight(), risk: weight() },
    threshold: next(),
    tie_rule: next() < 0.5 ? "untrustworthy" : "trustworthy",
  };
}

describe("decision-table parity with the server export", () => {
  it("matches for 20 random configs with zero mismatches", async () => {
    const next = rng(20260810);
    let mismatches = 0;
    for (let i = 0; i < 20; i++) {
      const config = randomConfig(next);
      const serverCsv = await api.candidateDecisionTableCsv(config);
      const clientCsv = decisionTableCsv(config);
      if (serverCsv !== clientCsv) {
        mismatches++;
        const serverLines = serverCsv.split("\n");
        const clientLines = clientCsv.split("\n");
        for (let line = 0; line < Math.max(serverLines.length, clientLines.length); line++) {
          if (serverLines[line] !== clientLines[line]) {
            console.error(`config ${i} line ${line}: server=${serverLines[line]} client=${clientLines[line]}`);
          }
        }
      }
    }
    expect(mismatches).toBe(0);
  });

  it("matches the current-config export after a policy commit", async () => {
    const candidate: ScoringConfig = {
      weights: { technical: 1.5, trusted: 0.75, risk: 2.25 },
      threshold: 0.35,
    };
    const before = await api.getPolicy();
    const committed = await api.putPolicy({ scoring: candidate });
    expect(committed.config_fingerprint).not.toBe(before.config_fingerprint);
    const serverCsv = await api.currentDecisionTableCsv();
    const merged = committed.config.scoring;
    expect(decisionTableCsv(merged)).toBe(serverCsv);
  });

  it("server rejects what client validation rejects", async () => {
    await expect(
      api.putPolicy({ scoring: { weights: { technical: 0, trusted: 0, risk: 0 }, threshold: 0.5 } }),
    ).rejects.toMatchObject({ status: 400 });
  });
});
