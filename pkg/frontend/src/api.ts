/** Thin fetch client for the moderation service HTTP API. */

import type {
  DecisionRecord,
  PolicyResponse,
  ScoringConfig,
  TaskView,
  VerdictResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function expect<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  async getPolicy(): Promise<PolicyResponse> {
    return expect(await fetch(`${this.baseUrl}/v1/policy`));
  }

  async putPolicy(sections: Record<string, unknown>): Promise<PolicyResponse> {
    return expect(
      await fetch(`${this.baseUrl}/v1/policy`, {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(sections),
      }),
    );
  }

  /** Server-side table for the CURRENT config. */
  async currentDecisionTableCsv(): Promise<string> {
    const response = await fetch(`${this.baseUrl}/v1/policy/decision-table`);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }

  /** Stateless server-side table for a CANDIDATE scoring config. */
  async candidateDecisionTableCsv(config: ScoringConfig): Promise<string> {
    const response = await fetch(`${this.baseUrl}/v1/policy/decision-table`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }

  async listDecisions(limit = 1000): Promise<DecisionRecord[]> {
    const body = await expect<{ decisions: DecisionRecord[] }>(
      await fetch(`${this.baseUrl}/v1/decisions?limit=${limit}`),
    );
    return body.decisions;
  }

  async getDecision(contentId: string): Promise<DecisionRecord> {
    return expect(await fetch(`${this.baseUrl}/v1/content/${contentId}/decision`));
  }

  async getMedia(contentId: string): Promise<Uint8Array> {
    const response = await fetch(`${this.baseUrl}/v1/content/${contentId}/media`);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return new Uint8Array(await response.arrayBuffer());
  }

  async reviewQueue(verifierId: string): Promise<TaskView[]> {
    const body = await expect<{ tasks: TaskView[] }>(
      await fetch(`${this.baseUrl}/v1/review/queue?verifier=${encodeURIComponent(verifierId)}`),
    );
    return body.tasks;
  }

  async submitVerdict(
    taskId: string,
    body: { verifier_id: string; judgment: string; rationale: string; signature_b64: string },
  ): Promise<VerdictResponse> {
    return expect(
      await fetch(`${this.baseUrl}/v1/review/${taskId}/verdict`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async ingest(manifest: Record<string, unknown>, media: Uint8Array, marker?: Uint8Array) {
    const form = new FormData();
    form.set("manifest", JSON.stringify(manifest));
    form.set("media", new Blob([media as BlobPart]), "media.bin");
    if (marker) form.set("marker", new Blob([marker as BlobPart]), "media.marker");
    return expect<{ content_id: string; existing: boolean }>(
      await fetch(`${this.baseUrl}/v1/content`, { method: "POST", body: form }),
    );
  }
}
