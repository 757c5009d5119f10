/**
 * Frame pacing and grayscale downscaling.
 *
 * The streamer pulls frames from an injectable source at a fixed cadence and
 * hands encoded binary frames to a sender; the browser source wraps a canvas
 * readback, tests use synthetic frames. Downscaling is plain box-free
 * nearest sampling capped at 320x240: presence debouncing and a 48x48
 * classifier crop need nothing sharper.
 */

import { encodeFrame } from "./protocol.js";

export interface GrayFrame {
  width: number;
  height: number;
  gray: Uint8Array;
}

export type FrameSource = () => GrayFrame | null;

export const MAX_FRAME_WIDTH = 320;
export const MAX_FRAME_HEIGHT = 240;

/** Luma conversion + nearest-neighbor downscale of an RGBA buffer. */
export function rgbaToGray(
  rgba: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
  maxWidth = MAX_FRAME_WIDTH,
  maxHeight = MAX_FRAME_HEIGHT,
): GrayFrame {
  const scale = Math.min(1, maxWidth / width, maxHeight / height);
  const outW = Math.max(1, Math.round(width * scale));
  const outH = Math.max(1, Math.round(height * scale));
  const gray = new Uint8Array(outW * outH);
  for (let y = 0; y < outH; y++) {
    const sy = Math.min(height - 1, Math.floor((y + 0.5) / scale));
    for (let x = 0; x < outW; x++) {
      const sx = Math.min(width - 1, Math.floor((x + 0.5) / scale));
      const i = (sy * width + sx) * 4;
      gray[y * outW + x] = Math.round(
        0.299 * rgba[i] + 0.587 * rgba[i + 1] + 0.114 * rgba[i + 2],
      );
    }
  }
  return { width: outW, height: outH, gray };
}

export interface StreamerOptions {
  source: FrameSource;
  send: (frame: ArrayBuffer) => void;
  fps: number;
  schedule?: (fn: () => void, delayMs: number) => unknown;
  cancel?: (handle: unknown) => void;
}

export class FrameStreamer {
  private handle: unknown = null;
  private running = false;
  framesSent = 0;

  constructor(private readonly opts: StreamerOptions) {
    if (opts.fps <= 0) {
      throw new Error("fps must be positive");
    }
  }

  start(): void {
    if (this.running) {
      return;
    }
    this.running = true;
    this.tick();
  }

  private tick(): void {
    if (!this.running) {
      return;
    }
    const frame = this.opts.source();
    if (frame !== null) {
      this.opts.send(encodeFrame(frame.width, frame.height, frame.gray));
      this.framesSent += 1;
    }
    const schedule = this.opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.handle = schedule(() => this.tick(), 1000 / this.opts.fps);
  }

  stop(): void {
    this.running = false;
    if (this.handle !== null && this.opts.cancel) {
      this.opts.cancel(this.handle);
    }
    this.handle = null;
  }
}
