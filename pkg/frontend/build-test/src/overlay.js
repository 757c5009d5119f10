/**
 * Poem overlay state: what text is visible and at what opacity.
 *
 * Purely time-driven so it can be tested with a fake clock: a poem message
 * starts a 0 -> 1 fade over its fade_in_ms; the `fading_out` phase starts a
 * fade to 0 over the poem's fade_out_ms and the text clears when it lands;
 * the `idle` phase clears immediately. Opacity is only ever non-zero while a
 * poem is presenting or fading out, so nothing is visible in idle.
 */
export class PoemOverlay {
    constructor() {
        this.body = null;
        this.fade = null;
        this.fadeOutMs = 1200;
        this.phase = "idle";
        this.lastWord = null;
    }
    handle(msg, now) {
        switch (msg.type) {
            case "poem":
                // any previous text is replaced outright; the fade restarts at 0
                this.body = msg.body;
                this.fadeOutMs = msg.fade_out_ms;
                this.fade = { from: 0, to: 1, startedAt: now, durationMs: msg.fade_in_ms };
                break;
            case "state":
                this.phase = msg.phase;
                if (msg.phase === "fading_out" && this.body !== null) {
                    this.fade = {
                        from: this.opacity(now),
                        to: 0,
                        startedAt: now,
                        durationMs: this.fadeOutMs,
                    };
                }
                else if (msg.phase === "idle") {
                    this.body = null;
                    this.fade = null;
                }
                break;
            case "emotion":
                this.lastWord = msg.word;
                break;
            default:
                break;
        }
    }
    opacity(now) {
        if (this.body === null || this.fade === null) {
            return 0;
        }
        const { from, to, startedAt, durationMs } = this.fade;
        if (durationMs <= 0) {
            return to;
        }
        const t = Math.min(1, Math.max(0, (now - startedAt) / durationMs));
        return from + (to - from) * t;
    }
    /** Visible text, with the poem's line breaks untouched. */
    text(now) {
        if (this.body === null) {
            return null;
        }
        if (this.fade !== null && this.fade.to === 0 && this.opacity(now) === 0) {
            // fade-out landed: clear
            this.body = null;
            this.fade = null;
            return null;
        }
        return this.body;
    }
}
