/**
 * Wire protocol spoken with the mirror service (schema version 1).
 *
 * Server messages are JSON text, each with a per-connection monotonically
 * increasing `seq`. Frames go to the server as binary messages:
 * u32 little-endian width, u32 height, then width*height grayscale bytes.
 */
const KNOWN_TYPES = new Set(["hello", "state", "emotion", "poem", "error"]);
/** Parse a server frame; unknown or malformed messages return null. */
export function parseServerMessage(data) {
    let doc;
    try {
        doc = JSON.parse(data);
    }
    catch {
        return null;
    }
    if (typeof doc !== "object" || doc === null) {
        return null;
    }
    const msg = doc;
    if (typeof msg.type !== "string" || !KNOWN_TYPES.has(msg.type)) {
        return null;
    }
    return doc;
}
/** Binary frame layout the service expects. */
export function encodeFrame(width, height, gray) {
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
export function helloPayload(client) {
    return JSON.stringify({ type: "hello", client });
}
