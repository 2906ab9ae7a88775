/**
 * Review independence and quorum flow against a live service: a
 * scripted 3-verifier session must flip the provisional label exactly
 * when the third verdict lands, and no open task payload may expose
 * peer verdicts.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ReviewSession } from "../src/review.js";
import { startServer, testPixmap, type LiveServer } from "./helpers/server.js";

const VERIFIERS = ["rev-a", "rev-b", "rev-c", "rev-d"];

let server: LiveServer;
let api: ApiClient;
let sessions: Map<string, ReviewSession>;

beforeAll(async () => {
  server = await startServer(VERIFIERS);
  api = new ApiClient(server.baseUrl);
  sessions = new Map(
    VERIFIERS.map((id) => [id, new ReviewSession(api, server.signers.get(id)!)]),
  );
});

afterAll(() => server?.stop());

function assertNoPeerVerdicts(payload: unknown) {
  const text = JSON.stringify(payload);
  expect(text).not.toContain("judgment");
  expect(text).not.toContain("rationale");
  expect(text).not.toContain("verdicts");
  for (const id of VERIFIERS) {
    expect(text).not.toContain(id);
  }
}

describe("3-verifier quorum session", () => {
  const contentId = "ui-review-1";

  it("ingests a high-risk unmarked item to a provisional label", async () => {
    const result = await api.ingest(
      {
        id: contentId,
        modality: "raster",
        payload_path: "",
        origin: {
          source_id: "newsroom-7",
          category_tags: ["political_communication"],
          expected_reach: 50_000,
          verified_source: false,
        },
      },
      testPixmap(3),
    );
    expect(result.existing).toBe(false);
    const decision = await api.getDecision(contentId);
    expect(decision.status).toBe("provisional");
    expect(decision.label).toBe("UNTRUSTWORTHY");
  });

  it("shows the task to every verifier without peer verdicts", async () => {
    for (const id of VERIFIERS) {
      const tasks = await sessions.get(id)!.refresh();
      expect(tasks.map((t) => t.content_id)).toContain(contentId);
      assertNoPeerVerdicts(tasks);
    }
  });

  it("renders an inspectable view model with a decoded preview", async () => {
    const session = sessions.get("rev-a")!;
    await session.refresh();
    const vm = await session.inspect(`task-${contentId}`);
    expect(vm.markerStatus).toBe("absent");
    expect(vm.risk?.level).toBe("high");
    expect(vm.provisionalLabel).toBe("UNTRUSTWORTHY");
    expect(vm.preview?.kind).toBe("raster");
    if (vm.preview?.kind === "raster") {
      expect(vm.preview.width).toBe(16);
      expect(vm.preview.rgba.length).toBe(16 * 16 * 4);
    }
  });

  it("flips the label exactly when the third verdict lands", async () => {
    const taskId = `task-${contentId}`;
    // verdict 1: no flip
    const first = sessions.get("rev-a")!;
    await first.refresh();
    const r1 = await first.submit(taskId, "trustworthy", "looks like real footage");
    expect(r1.accepted).toBe(true);
    expect(r1.quorumMet).toBe(false);
    expect((await api.getDecision(contentId)).label).toBe("UNTRUSTWORTHY");
    expect((await api.getDecision(contentId)).status).toBe("provisional");
    // verdict 2: still no flip; the queue for rev-b must not leak rev-a's vote
    const second = sessions.get("rev-b")!;
    const queueB = await second.refresh();
    assertNoPeerVerdicts(queueB.filter((t) => t.task_id === taskId));
    const r2 = await second.submit(taskId, "trustworthy");
    expect(r2.quorumMet).toBe(false);
    expect((await api.getDecision(contentId)).status).toBe("provisional");
    // verdict 3: quorum met, label flips, decision final
    const third = sessions.get("rev-c")!;
    await third.refresh();
    const r3 = await third.submit(taskId, "trustworthy");
    expect(r3.accepted).toBe(true);
    expect(r3.quorumMet).toBe(true);
    expect(r3.newLabel).toBe("TRUSTWORTHY");
    const final = await api.getDecision(contentId);
    expect(final.label).toBe("TRUSTWORTHY");
    expect(final.status).toBe("final");
  });

  it("optimistically removes voted tasks and the server agrees", async () => {
    const session = sessions.get("rev-a")!;
    const tasks = await session.refresh();
    expect(tasks.map((t) => t.task_id)).not.toContain(`task-${contentId}`);
  });

  it("surfaces a conflict notice on a closed task", async () => {
    // a 4th verifier arriving after quorum: queue no longer lists the
    // task; a direct (stale-tab) submission gets a visible conflict
    const latecomer = sessions.get("rev-d")!;
    const queue = await latecomer.refresh();
    expect(queue.map((t) => t.task_id)).not.toContain(`task-${contentId}`);
    latecomer.tasks = [
      {
        task_id: `task-${contentId}`,
        content_id: contentId,
        created_at: 0,
        required_quorum: 3,
        received: 3,
        state: "open",
        modality: "raster",
        marker_status: "absent",
        marker_reasons: [],
        technical_confidence: 0,
        risk: null,
        provisional_label: "UNTRUSTWORTHY",
      },
    ];
    const result = await latecomer.submit(`task-${contentId}`, "untrustworthy");
    expect(result.accepted).toBe(false);
    expect(result.conflict).toBeTruthy();
    expect(result.retryable).toBe(false);
    expect(latecomer.lastError).toContain("conflict");
  });

  it("keeps independence for a second concurrent task", async () => {
    await api.ingest(
      {
        id: "ui-review-2",
        modality: "raster",
        payload_path: "",
        origin: {
          source_id: "anon-1",
          category_tags: ["elections"],
          expected_reach: 10,
          verified_source: false,
        },
      },
      testPixmap(9),
    );
    const voter = sessions.get("rev-b")!;
    await voter.refresh();
    await voter.submit("task-ui-review-2", "untrustworthy");
    // every other verifier still sees the open task, with no trace of
    // rev-b's verdict anywhere in the payload
    for (const id of ["rev-a", "rev-c", "rev-d"]) {
      const tasks = await sessions.get(id)!.refresh();
      const open = tasks.find((t) => t.task_id === "task-ui-review-2");
      expect(open).toBeDefined();
      expect(open!.received).toBe(1); // count only, never contents
      assertNoPeerVerdicts(tasks);
    }
  });
});
