/**
 * The verifier review flow: queue -> inspect -> verdict.
 *
 * Submissions are optimistic: the task leaves the local queue as soon
 * as the verdict is sent, and the state reconciles with the server
 * response (conflicts restore nothing; the task is simply gone for
 * this verifier, with a retry notice surfaced for transient errors).
 */

import { ApiClient, ApiError } from "./api.js";
import type { Signer } from "./signing.js";
import { toBase64, verdictMessage } from "./signing.js";
import type { Judgment, TaskView, VerdictResponse } from "./types.js";
import { buildViewModel, type ReviewViewModel } from "./viewmodel.js";

export interface SubmissionResult {
  accepted: boolean;
  quorumMet: boolean;
  /** Label recomputed by the server once quorum is reached. */
  newLabel: string | null;
  conflict: string | null;
  retryable: boolean;
}

export class ReviewSession {
  tasks: TaskView[] = [];
  lastError: string | null = null;

  constructor(
    private api: ApiClient,
    private signer: Signer,
  ) {}

  get verifierId(): string {
    return this.signer.verifierId;
  }

  async refresh(): Promise<TaskView[]> {
    this.tasks = await this.api.reviewQueue(this.signer.verifierId);
    return this.tasks;
  }

  async inspect(taskId: string, withMedia = true): Promise<ReviewViewModel> {
    const task = this.tasks.find((t) => t.task_id === taskId);
    if (!task) throw new Error(`task ${taskId} not in this verifier's queue`);
    const media = withMedia ? await this.api.getMedia(task.content_id) : null;
    return buildViewModel(task, media);
  }

  async submit(taskId: string, judgment: Judgment, rationale = ""): Promise<SubmissionResult> {
    const task = this.tasks.find((t) => t.task_id === taskId);
    if (!task) throw new Error(`task ${taskId} not in this verifier's queue`);
    // optimistic removal; reconciled below
    this.tasks = this.tasks.filter((t) => t.task_id !== taskId);
    const message = verdictMessage(
      this.signer.verifierId,
      judgment,
      rationale,
      taskId,
      task.content_id,
    );
    const signature = await this.signer.sign(message);
    let response: VerdictResponse;
    try {
      response = await this.api.submitVerdict(taskId, {
        verifier_id: this.signer.verifierId,
        judgment,
        rationale,
        signature_b64: toBase64(signature),
      });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.lastError = `conflict: ${error.detail} (task already closed or voted)`;
        return { accepted: false, quorumMet: false, newLabel: null, conflict: error.detail, retryable: false };
      }
      if (error instanceof ApiError && error.status === 401) {
        this.lastError = `not authorized: ${error.detail} (check verifier key registration)`;
        return { accepted: false, quorumMet: false, newLabel: null, conflict: error.detail, retryable: false };
      }
      // transient: restore the task so the verifier can retry
      this.tasks = [...this.tasks, task];
      this.lastError = `submission failed, retry: ${String(error)}`;
      return { accepted: false, quorumMet: false, newLabel: null, conflict: null, retryable: true };
    }
    this.lastError = null;
    return {
      accepted: true,
      quorumMet: response.quorum_met,
      newLabel: response.decision?.label ?? null,
      conflict: null,
      retryable: false,
    };
  }
}
