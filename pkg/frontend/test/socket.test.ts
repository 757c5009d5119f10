import assert from "node:assert/strict";
import { test } from "node:test";

import { MirrorSocket, type SocketLike } from "../src/socket.js";

class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  sent: Array<string | ArrayBuffer> = [];

  send(data: string | ArrayBuffer): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const scheduled: Array<{ fn: () => void; delay: number }> = [];
  const states: string[] = [];
  const messages: string[] = [];
  const socket = new MirrorSocket({
    url: "ws://example/ws",
    factory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    onMessage: (data) => messages.push(data),
    onStateChange: (state) => states.push(state),
    schedule: (fn, delay) => (scheduled.push({ fn, delay }), scheduled.length),
  });
  return { socket, sockets, scheduled, states, messages };
}

test("delivers text messages and sets arraybuffer mode", () => {
  const h = harness();
  h.socket.connect();
  const ws = h.sockets[0];
  assert.equal(ws.binaryType, "arraybuffer");
  ws.onopen?.();
  ws.onmessage?.({ data: '{"type":"hello","version":1,"seq":1}' });
  assert.deepEqual(h.messages, ['{"type":"hello","version":1,"seq":1}']);
  assert.deepEqual(h.states, ["connected"]);
});

test("reconnects with exponential backoff and resets after success", () => {
  const h = harness();
  h.socket.connect();
  // four consecutive failures
  for (let i = 0; i < 4; i++) {
    h.sockets[i].onclose?.();
    assert.equal(h.scheduled.length, i + 1);
    h.scheduled[i].fn();
  }
  assert.deepEqual(
    h.scheduled.map((s) => s.delay),
    [1000, 2000, 4000, 8000],
  );
  // a success resets the backoff
  h.sockets[4].onopen?.();
  h.sockets[4].onclose?.();
  assert.equal(h.scheduled[4].delay, 1000);
  assert.ok(h.states.includes("reconnecting"));
});

test("backoff is capped", () => {
  const h = harness();
  h.socket.connect();
  for (let i = 0; i < 8; i++) {
    h.sockets[i].onclose?.();
    h.scheduled[i].fn();
  }
  assert.equal(h.scheduled[7].delay, 30000);
});

test("close() stops reconnection and send() drops quietly", () => {
  const h = harness();
  h.socket.connect();
  h.socket.close();
  assert.equal(h.scheduled.length, 0);
  h.socket.send("into the void");
  assert.deepEqual(h.states, ["disconnected"]);
});
