/**
 * Wire protocol spoken with the mirror service (schema version 1).
 *
 * Server messages are JSON text, each with a per-connection monotonically
 * increasing `seq`. Frames go to the server as binary messages:
 * u32 little-endian width, u32 height, then width*height grayscale bytes.
 */

export type Phase =
  | "idle"
  | "sensing"
  | "generating"
  | "presenting"
  | "fading_out";

export interface HelloMessage {
  type: "hello";
  version: number;
  seq: number;
}

export interface StateMessage {
  type: "state";
  phase: Phase;
  seq: number;
}

export interface EmotionMessage {
  type: "emotion";
  probabilities: number[];
  word: string;
  seq: number;
}

export interface PoemMessage {
  type: "poem";
  body: string;
  fade_in_ms: number;
  fade_out_ms: number;
  seq: number;
}

export interface ErrorMessage {
  type: "error";
  stage: string;
  message: string;
  seq: number;
}

export type ServerMessage =
  | HelloMessage
  | StateMessage
  | EmotionMessage
  | PoemMessage
  | ErrorMessage;

const KNOWN_TYPES = new Set(["hello", "state", "emotion", "poem", "error"]);

/** Parse a server frame; unknown or malformed messages return null. */
export function parseServerMessage(data: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(data);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) {
    return null;
  }
  const msg = doc as { type?: unknown };
  if (typeof msg.type !== "string" || !KNOWN_TYPES.has(msg.type)) {
    return null;
  }
  return doc as ServerMessage;
}

/** Binary frame layout the service expects. */
export function encodeFrame(
  width: number,
  height: number,
  gray: Uint8Array,
): ArrayBuffer {
  if (gray.length !== width * height) {
    throw new Error(`frame bytes ${gray.length} != ${width}x${height}`);
  }
  const buf = new ArrayBuffer(8 + gray.length);
  const view = new DataView(buf);
  view.setUint32(0, width, true);
  view.setUint32(4, height, true);
  new Uint8Array(buf, 8).set(gray);
  return buf;
}

export function helloPayload(client: string): string {
  return JSON.stringify({ type: "hello", client });
}
