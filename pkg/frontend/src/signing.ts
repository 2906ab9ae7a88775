/**
 * Verdict signing.
 *
 * The server accepts Ed25519 signatures over a canonical JSON message
 * binding verifier, judgment, rationale, task and content ids. Keys
 * stay client-side; the console signs in the runtime's crypto
 * (node:crypto here, WebCrypto Ed25519 in browsers) through the
 * Signer interface so the review flow never sees key material.
 */

export interface Signer {
  verifierId: string;
  sign(message: Uint8Array): Promise<Uint8Array>;
}

/** Canonical signing bytes; must match the server's verdict_message. */
export function verdictMessage(
  verifierId: string,
  judgment: string,
  rationale: string,
  taskId: string,
  contentId: string,
): Uint8Array {
  // key order matters: the server serializes with sorted keys
  const canonical = JSON.stringify({
    content_id: contentId,
    judgment,
    rationale,
    task_id: taskId,
    verifier_id: verifierId,
  });
  return new TextEncoder().encode(canonical);
}

export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

/** Node-backed signer used by tests and scripted sessions. */
export async function nodeSigner(verifierId: string): Promise<{ signer: Signer; publicKeyB64: string }> {
  const { generateKeyPairSync, sign } = await import("node:crypto");
  const pair = generateKeyPairSync("ed25519");
  const jwk = pair.publicKey.export({ format: "jwk" }) as { x: string };
  const raw = Buffer.from(jwk.x, "base64url");
  return {
    signer: {
      verifierId,
      async sign(message: Uint8Array): Promise<Uint8Array> {
        return new Uint8Array(sign(null, Buffer.from(message), pair.privateKey));
      },
    },
    publicKeyB64: raw.toString("base64"),
  };
}
