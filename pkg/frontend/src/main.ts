/**
 * Browser entry point: mirrored self-view, frame streaming, poem overlay.
 *
 * Query parameters: `server` (websocket URL, default ws(s)://host/ws),
 * `fps` (frame cadence, default 10), `debug` (show the diagnostics panel).
 */

import { FrameStreamer, rgbaToGray } from "./capture.js";
import { PoemOverlay } from "./overlay.js";
import { MirrorSocket } from "./socket.js";
import { helloPayload, parseServerMessage } from "./protocol.js";

const params = new URLSearchParams(window.location.search);
const scheme = window.location.protocol === "https:" ? "wss" : "ws";
const serverUrl = params.get("server") ?? `${scheme}://${window.location.host}/ws`;
const fps = Math.max(1, Number(params.get("fps") ?? "10"));
const debug = params.get("debug") === "1";

const video = document.createElement("video");
video.autoplay = true;
video.playsInline = true;

const view = document.getElementById("view") as HTMLCanvasElement;
const poemEl = document.getElementById("poem") as HTMLDivElement;
const noticeEl = document.getElementById("notice") as HTMLDivElement;
const debugEl = document.getElementById("debug") as HTMLDivElement;
if (debug) {
  debugEl.style.display = "block";
}

const overlay = new PoemOverlay();
let connection = "disconnected";

const socket = new MirrorSocket({
  url: serverUrl,
  factory: (url) => new WebSocket(url) as unknown as import("./socket.js").SocketLike,
  onMessage: (data) => {
    const msg = parseServerMessage(data);
    if (msg === null) {
      console.debug("ignoring unknown message", data);
      return;
    }
    overlay.handle(msg, performance.now());
    if (msg.type === "hello") {
      socket.send(helloPayload(`mirror-ui/${navigator.userAgent}`));
    }
  },
  onStateChange: (state) => {
    connection = state;
    noticeEl.textContent = state === "connected" ? "" : `connection: ${state}`;
  },
});
socket.connect();

const grabCanvas = document.createElement("canvas");
const grabCtx = grabCanvas.getContext("2d", { willReadFrequently: true });

function grabFrame() {
  if (!video.videoWidth || grabCtx === null) {
    return null;
  }
  grabCanvas.width = video.videoWidth;
  grabCanvas.height = video.videoHeight;
  grabCtx.drawImage(video, 0, 0);
  const rgba = grabCtx.getImageData(0, 0, grabCanvas.width, grabCanvas.height);
  return rgbaToGray(rgba.data, rgba.width, rgba.height);
}

const streamer = new FrameStreamer({
  source: grabFrame,
  send: (frame) => socket.send(frame),
  fps,
});

navigator.mediaDevices
  .getUserMedia({ video: { width: 640, height: 480 } })
  .then((stream) => {
    video.srcObject = stream;
    streamer.start();
  })
  .catch(() => {
    noticeEl.textContent =
      "Camera access is required: allow the camera and reload to let the mirror see you.";
  });

const viewCtx = view.getContext("2d");

function render(now: number) {
  if (viewCtx && video.videoWidth) {
    view.width = window.innerWidth;
    view.height = window.innerHeight;
    const scale = Math.max(view.width / video.videoWidth, view.height / video.videoHeight);
    const w = video.videoWidth * scale;
    const h = video.videoHeight * scale;
    viewCtx.save();
    viewCtx.translate(view.width, 0);
    viewCtx.scale(-1, 1); // a mirror, so flip the self-view
    viewCtx.drawImage(video, (view.width - w) / 2, (view.height - h) / 2, w, h);
    viewCtx.restore();
    viewCtx.fillStyle = "rgba(0, 0, 0, 0.45)";
    viewCtx.fillRect(0, 0, view.width, view.height);
  }
  const text = overlay.text(now);
  poemEl.textContent = text ?? "";
  poemEl.style.opacity = String(overlay.opacity(now));
  if (debug) {
    debugEl.textContent =
      `phase: ${overlay.phase}\nconnection: ${connection}\n` +
      `word: ${overlay.lastWord ?? "-"}\nframes sent: ${streamer.framesSent}`;
  }
  requestAnimationFrame(render);
}
requestAnimationFrame(render);
