/**
 * Browser wiring for the review console. Expects the service origin in
 * `?api=` (default same origin) and a verifier id in `?verifier=`.
 * Signing in the browser uses WebCrypto Ed25519 with a key held in
 * IndexedDB-backed storage; this entry wires a session-provided key.
 */

import { ApiClient } from "./api.js";
import { ReviewSession } from "./review.js";
import type { Signer } from "./signing.js";
import { PolicyPanel } from "./whatif.js";
import type { Judgment, ScoringConfig } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function webCryptoSigner(verifierId: string): Promise<Signer> {
  const pair = (await crypto.subtle.generateKey("Ed25519", false, ["sign", "verify"])) as CryptoKeyPair;
  return {
    verifierId,
    async sign(message: Uint8Array): Promise<Uint8Array> {
      const buf = message.slice().buffer as ArrayBuffer;
      return new Uint8Array(await crypto.subtle.sign("Ed25519", pair.privateKey, buf));
    },
  };
}

function renderPreview(canvas: HTMLCanvasElement, preview: { width: number; height: number; rgba: Uint8ClampedArray }) {
  canvas.width = preview.width;
  canvas.height = preview.height;
  const ctx = canvas.getContext("2d");
  // re-wrap so the buffer is a plain ArrayBuffer, as ImageData requires
  const pixels = new Uint8ClampedArray(preview.rgba);
  if (ctx) ctx.putImageData(new ImageData(pixels, preview.width, preview.height), 0, 0);
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const api = new ApiClient(params.get("api") ?? "");
  const verifierId = params.get("verifier") ?? "anonymous";
  const session = new ReviewSession(api, await webCryptoSigner(verifierId));
  const panel = new PolicyPanel(api);

  const queueList = el<HTMLUListElement>("queue");
  const detail = el<HTMLDivElement>("detail");
  const canvas = el<HTMLCanvasElement>("preview");
  const flipsOut = el<HTMLPreElement>("flips");
  const status = el<HTMLSpanElement>("status");

  async function refreshQueue() {
    const tasks = await session.refresh();
    queueList.replaceChildren(
      ...tasks.map((task) => {
        const li = document.createElement("li");
        const open = document.createElement("button");
        open.textContent = `${task.content_id} [${task.provisional_label ?? "?"}] risk=${task.risk?.level ?? "?"}`;
        open.onclick = () => void inspect(task.task_id);
        li.append(open);
        return li;
      }),
    );
    status.textContent = `${tasks.length} open task(s) for ${verifierId}`;
  }

  async function inspect(taskId: string) {
    const vm = await session.inspect(taskId);
    detail.dataset["taskId"] = taskId;
    el<HTMLSpanElement>("marker").textContent = `${vm.markerStatus} ${vm.markerReasons.join(", ")}`;
    el<HTMLSpanElement>("confidence").textContent = String(vm.technicalConfidence ?? "n/a");
    el<HTMLSpanElement>("risk").textContent = vm.risk
      ? `${vm.risk.level} (${vm.risk.matched_categories.join(", ") || "no category match"})`
      : "n/a";
    el<HTMLSpanElement>("label").textContent = vm.provisionalLabel ?? "n/a";
    if (vm.preview?.kind === "raster") renderPreview(canvas, vm.preview);
  }

  async function submit(judgment: Judgment) {
    const taskId = detail.dataset["taskId"];
    if (!taskId) return;
    const rationale = el<HTMLInputElement>("rationale").value;
    const result = await session.submit(taskId, judgment, rationale);
    status.textContent = result.accepted
      ? result.quorumMet
        ? `quorum met; new label ${result.newLabel}`
        : "verdict recorded"
      : session.lastError ?? "submission rejected";
    await refreshQueue();
  }

  el<HTMLButtonElement>("vote-trustworthy").onclick = () => void submit("trustworthy");
  el<HTMLButtonElement>("vote-untrustworthy").onclick = () => void submit("untrustworthy");
  el<HTMLButtonElement>("vote-abstain").onclick = () => void submit("abstain");

  async function previewWhatIf() {
    await panel.load();
    const candidate: ScoringConfig = {
      weights: {
        technical: Number(el<HTMLInputElement>("w-tech").value),
        trusted: Number(el<HTMLInputElement>("w-trusted").value),
        risk: Number(el<HTMLInputElement>("w-risk").value),
      },
      threshold: Number(el<HTMLInputElement>("theta").value),
    };
    const preview = panel.preview(candidate);
    el<HTMLButtonElement>("commit").disabled = !preview.commitEnabled;
    flipsOut.textContent = preview.valid
      ? preview.flips.map((f) => `${f.content_id}: ${f.from} -> ${f.to}`).join("\n") || "no label flips"
      : preview.problems.join("\n");
  }

  el<HTMLButtonElement>("preview-whatif").onclick = () => void previewWhatIf();
  el<HTMLButtonElement>("commit").onclick = async () => {
    const fingerprint = await panel.commit({
      weights: {
        technical: Number(el<HTMLInputElement>("w-tech").value),
        trusted: Number(el<HTMLInputElement>("w-trusted").value),
        risk: Number(el<HTMLInputElement>("w-risk").value),
      },
      threshold: Number(el<HTMLInputElement>("theta").value),
    });
    status.textContent = `policy committed, fingerprint ${fingerprint.slice(0, 12)}`;
  };

  await refreshQueue();
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  void start();
}
