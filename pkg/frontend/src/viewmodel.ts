/**
 * Review view models: decode canonical media for direct rendering
 * (pixmap to RGBA for a canvas, PCM to samples for a player, UTF-8
 * inline) and assemble the reviewer-facing summary of a task.
 */

import type { TaskView } from "./types.js";

export interface RasterPreview {
  kind: "raster";
  width: number;
  height: number;
  /** RGBA bytes ready for ImageData(width, height). */
  rgba: Uint8ClampedArray;
}

export interface AudioPreview {
  kind: "audio";
  sampleRate: number;
  samples: Int16Array;
}

export interface TextPreview {
  kind: "text";
  text: string;
}

export type ContentPreview = RasterPreview | AudioPreview | TextPreview;

function parsePixmapHeader(bytes: Uint8Array): { channels: number; width: number; height: number; offset: number } {
  const magic = String.fromCharCode(bytes[0] ?? 0, bytes[1] ?? 0);
  if (magic !== "P5" && magic !== "P6") throw new Error("not a binary pixmap");
  const channels = magic === "P5" ? 1 : 3;
  const tokens: number[] = [];
  let i = 2;
  while (tokens.length < 3) {
    while (i < bytes.length && /\s/.test(String.fromCharCode(bytes[i] ?? 0))) i++;
    if (bytes[i] === 0x23) {
      while (i < bytes.length && bytes[i] !== 0x0a && bytes[i] !== 0x0d) i++;
      continue;
    }
    let j = i;
    while (j < bytes.length && !/\s/.test(String.fromCharCode(bytes[j] ?? 0))) j++;
    const token = Number(new TextDecoder().decode(bytes.slice(i, j)));
    if (!Number.isFinite(token)) throw new Error("bad pixmap header");
    tokens.push(token);
    i = j;
  }
  i += 1; // single whitespace after maxval
  const [width, height, maxval] = tokens as [number, number, number];
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  return { channels, width, height, offset: i };
}

export function decodePixmap(bytes: Uint8Array): RasterPreview {
  const { channels, width, height, offset } = parsePixmapHeader(bytes);
  const expected = width * height * channels;
  const body = bytes.slice(offset);
  if (body.length !== expected) throw new Error(`pixmap body ${body.length} != ${expected}`);
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let p = 0; p < width * height; p++) {
    const r = body[p * channels] ?? 0;
    rgba[p * 4] = r;
    rgba[p * 4 + 1] = channels === 3 ? (body[p * 3 + 1] ?? 0) : r;
    rgba[p * 4 + 2] = channels === 3 ? (body[p * 3 + 2] ?? 0) : r;
    rgba[p * 4 + 3] = 255;
  }
  return { kind: "raster", width, height, rgba };
}

export function decodePcm(bytes: Uint8Array): AudioPreview {
  const magic = new TextDecoder().decode(bytes.slice(0, 4));
  if (magic !== "PCM1") throw new Error("not PCM1 audio");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const sampleRate = view.getUint32(4, true);
  const samples = new Int16Array((bytes.length - 8) / 2);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = view.getInt16(8 + i * 2, true);
  }
  return { kind: "audio", sampleRate, samples };
}

export function decodePreview(modality: string, bytes: Uint8Array): ContentPreview {
  if (modality === "raster") return decodePixmap(bytes);
  if (modality === "audio") return decodePcm(bytes);
  return { kind: "text", text: new TextDecoder().decode(bytes) };
}

/** Everything the reviewer sees for one task; peer verdicts are never
 * part of it (the server does not send them for open tasks). */
export interface ReviewViewModel {
  taskId: string;
  contentId: string;
  quorum: { required: number; received: number };
  markerStatus: string;
  markerReasons: string[];
  technicalConfidence: number | null;
  risk: TaskView["risk"];
  provisionalLabel: string | null;
  preview: ContentPreview | null;
}

export function buildViewModel(task: TaskView, media: Uint8Array | null): ReviewViewModel {
  return {
    taskId: task.task_id,
    contentId: task.content_id,
    quorum: { required: task.required_quorum, received: task.received },
    markerStatus: task.marker_status ?? "absent",
    markerReasons: task.marker_reasons,
    technicalConfidence: task.technical_confidence,
    risk: task.risk,
    provisionalLabel: task.provisional_label,
    preview: media && task.modality ? decodePreview(task.modality, media) : null,
  };
}
