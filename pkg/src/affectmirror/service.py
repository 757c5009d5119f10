"""Event service: frames in, state/emotion/poem messages out.

One asyncio loop owns the engine state. Frames arrive over a websocket
(binary or base64 JSON), are dropped latest-wins while an analysis is in
flight, and come back as FaceSeen/NoFace events. Generation runs on a worker
thread bounded by a timeout so a slow backend can never wedge the loop. All
state changes are broadcast to every connected client in order, each message
carrying a per-connection monotonically increasing sequence number.

Fade choreography is server-timed: the service schedules FadeInDone and
FadeOutDone events after the configured durations; clients only animate.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from aiohttp import WSMsgType, web

from .config import Assets, ServiceConfig, load_assets
from .emotions import compose_seed
from .engine import (
    EngineState,
    FaceSeen,
    FadeInDone,
    FadeOut,
    FadeOutDone,
    LogSession,
    NoFace,
    Phase,
    PoemFailed,
    PoemReady,
    SessionEntry,
    ShowPoem,
    StartGeneration,
    transition,
)
from .poet import make_poem
from .vision import detect_faces, largest_face, preprocess_face

log = logging.getLogger(__name__)

WIRE_VERSION = 1
MAX_FRAME_PIXELS = 1_000_000

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>affectmirror</title></head>
<body style="background:#000;color:#ccc;font-family:serif;text-align:center">
<p style="margin-top:20%">affectmirror service is running.</p>
<p>No UI bundle is configured; connect a client to <code>/ws</code>.</p>
</body></html>"""


class StartupError(RuntimeError):
    """Service could not start; nothing was left half-initialized."""


@dataclass(eq=False)
class _Client:
    ws: web.WebSocketResponse
    queue: asyncio.Queue = field(default_factory=asyncio.Queue)
    seq: int = 0
    sender: asyncio.Task | None = None


class MirrorService:
    def __init__(self, config: ServiceConfig, assets: Assets | None = None):
        self.config = config
        self.assets = assets if assets is not None else load_assets(config)
        self.state = EngineState()
        self.events: asyncio.Queue = asyncio.Queue()
        self.clients: set[_Client] = set()
        self.rng = np.random.default_rng()
        self.port: int | None = None
        self._frame_slot: np.ndarray | None = None
        self._frame_ready: asyncio.Event = asyncio.Event()
        self._tasks: list[asyncio.Task] = []
        self._runner: web.AppRunner | None = None
        self._stopped = asyncio.Event()
        self._last_detect_ms: float | None = None
        self._last_classify_ms: float | None = None
        self._last_generate_ms: float | None = None
        self._shown_at: float | None = None

    # -- lifecycle --------------------------------------------------------

    def _build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/", self._index)
        app.router.add_get("/ws", self._websocket)
        if self.config.ui_dir and self.config.ui_dir.is_dir():
            app.router.add_static("/assets", self.config.ui_dir)
        return app

    async def start(self) -> None:
        """Bind the port and start the engine; fail fast with no partial state."""
        runner = web.AppRunner(self._build_app())
        await runner.setup()
        site = web.TCPSite(runner, self.config.host, self.config.port)
        try:
            await site.start()
        except OSError as exc:
            await runner.cleanup()
            raise StartupError(
                f"cannot listen on {self.config.host}:{self.config.port}: {exc}"
            ) from exc
        self._runner = runner
        self.port = site._server.sockets[0].getsockname()[1]
        self._tasks = [
            asyncio.create_task(self._engine_loop(), name="engine"),
            asyncio.create_task(self._analysis_loop(), name="analysis"),
        ]
        log.info(
            "service ready on %s:%s (cascade=%s, weights=%s, backend=%s)",
            self.config.host,
            self.port,
            self.config.cascade_path.name,
            self.config.weights_path.name,
            getattr(self.assets.backend, "name", self.config.backend),
        )

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for client in list(self.clients):
            if client.sender:
                client.sender.cancel()
            await client.ws.close()
        if self._runner is not None:
            await self._runner.cleanup()
        self._stopped.set()

    async def serve_forever(self) -> None:
        await self.start()
        await self._stopped.wait()

    # -- http/ws handlers ---------------------------------------------------

    async def _index(self, request: web.Request) -> web.StreamResponse:
        if self.config.ui_dir:
            index = self.config.ui_dir / "index.html"
            if index.is_file():
                return web.FileResponse(index)
        return web.Response(text=_FALLBACK_PAGE, content_type="text/html")

    async def _websocket(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        client = _Client(ws=ws)
        client.sender = asyncio.create_task(self._sender(client))
        self.clients.add(client)
        self._send(client, {"type": "hello", "version": WIRE_VERSION})
        self._send(client, {"type": "state", "phase": self.state.phase.value})
        try:
            async for msg in ws:
                if msg.type == WSMsgType.BINARY:
                    self._on_binary_frame(client, msg.data)
                elif msg.type == WSMsgType.TEXT:
                    self._on_text(client, msg.data)
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            self.clients.discard(client)
            if client.sender:
                client.sender.cancel()
        return ws

    async def _sender(self, client: _Client) -> None:
        try:
            while True:
                payload = await client.queue.get()
                await client.ws.send_str(payload)
        except (asyncio.CancelledError, ConnectionError):
            pass

    def _send(self, client: _Client, msg: dict) -> None:
        client.seq += 1
        msg["seq"] = client.seq
        client.queue.put_nowait(json.dumps(msg))

    def _broadcast(self, msg: dict) -> None:
        for client in list(self.clients):
            self._send(client, dict(msg))

    def _error_reply(self, client: _Client, stage: str, message: str) -> None:
        self._send(client, {"type": "error", "stage": stage, "message": message})

    def _on_text(self, client: _Client, data: str) -> None:
        try:
            msg = json.loads(data)
            kind = msg.get("type")
        except (json.JSONDecodeError, AttributeError):
            self._error_reply(client, "parse", "message is not a JSON object")
            return
        if kind == "hello":
            log.info("client hello: %s", msg.get("client", "?"))
        elif kind == "frame":
            try:
                width = int(msg["width"])
                height = int(msg["height"])
                pixels = base64.b64decode(msg["data"], validate=True)
            except (KeyError, ValueError, TypeError, binascii.Error) as exc:
                self._error_reply(client, "frame", f"bad frame message: {exc}")
                return
            self._accept_frame(client, width, height, pixels)
        else:
            self._error_reply(client, "parse", f"unknown message type {kind!r}")

    def _on_binary_frame(self, client: _Client, data: bytes) -> None:
        if len(data) < 8:
            self._error_reply(client, "frame", "binary frame shorter than header")
            return
        width, height = struct.unpack_from("<II", data)
        self._accept_frame(client, width, height, data[8:])

    def _accept_frame(
        self, client: _Client, width: int, height: int, pixels: bytes
    ) -> None:
        if width < 1 or height < 1 or width * height > MAX_FRAME_PIXELS:
            self._error_reply(client, "frame", f"bad dimensions {width}x{height}")
            return
        if len(pixels) != width * height:
            self._error_reply(
                client,
                "frame",
                f"expected {width * height} bytes, got {len(pixels)}",
            )
            return
        frame = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
        # latest wins: overwrite whatever the analysis worker has not taken yet
        self._frame_slot = frame
        self._frame_ready.set()

    # -- engine -------------------------------------------------------------

    def _post(self, event) -> None:
        self.events.put_nowait(event)

    async def _engine_loop(self) -> None:
        while True:
            event = await self.events.get()
            prev_phase = self.state.phase
            self.state, actions = transition(self.state, event, self.config.engine)
            if self.state.phase != prev_phase:
                self._broadcast({"type": "state", "phase": self.state.phase.value})
            for action in actions:
                self._run_action(action)

    def _run_action(self, action) -> None:
        if isinstance(action, StartGeneration):
            self._broadcast(
                {
                    "type": "emotion",
                    "probabilities": list(action.probabilities),
                    "word": action.emotion_word,
                }
            )
            self._tasks.append(
                asyncio.create_task(self._generate(action.emotion_word))
            )
        elif isinstance(action, ShowPoem):
            self._shown_at = time.monotonic()
            self._broadcast(
                {
                    "type": "poem",
                    "body": action.poem.body,
                    "fade_in_ms": action.fade_in_ms,
                    "fade_out_ms": self.config.engine.fade_out_ms,
                }
            )
            self._schedule(action.fade_in_ms, FadeInDone())
        elif isinstance(action, FadeOut):
            self._schedule(action.fade_out_ms, FadeOutDone())
        elif isinstance(action, LogSession):
            self._log_session(action)

    def _schedule(self, delay_ms: int, event) -> None:
        asyncio.get_running_loop().call_later(
            delay_ms / 1000.0, lambda: self._post(event)
        )

    async def _generate(self, emotion_word: str) -> None:
        loop = asyncio.get_running_loop()

        def job():
            seed = compose_seed(emotion_word, self.assets.lexicon, self.rng)
            return make_poem(
                self.assets.backend, seed, self.config.generation, self.rng
            )

        started = time.perf_counter()
        try:
            poem = await asyncio.wait_for(
                loop.run_in_executor(None, job), timeout=self.config.generation_timeout_s
            )
        except asyncio.TimeoutError:
            self._post(PoemFailed("generation timed out"))
            return
        except Exception as exc:
            self._post(PoemFailed(str(exc)))
            return
        self._last_generate_ms = (time.perf_counter() - started) * 1000.0
        self._post(PoemReady(poem))

    async def _analysis_loop(self) -> None:
        loop = asyncio.get_running_loop()
        while True:
            await self._frame_ready.wait()
            self._frame_ready.clear()
            frame = self._frame_slot
            self._frame_slot = None
            if frame is None:
                continue
            try:
                event = await loop.run_in_executor(None, self._analyze, frame)
            except Exception as exc:
                log.warning("frame analysis failed: %s", exc)
                continue
            self._post(event)

    def _analyze(self, frame: np.ndarray):
        t0 = time.perf_counter()
        face = largest_face(
            detect_faces(frame, self.assets.cascade, self.config.detector)
        )
        self._last_detect_ms = (time.perf_counter() - t0) * 1000.0
        if face is None:
            self._last_classify_ms = None
            return NoFace()
        t1 = time.perf_counter()
        tensor = preprocess_face(frame, face)
        probs = self.assets.classifier.classify(tensor)
        self._last_classify_ms = (time.perf_counter() - t1) * 1000.0
        return FaceSeen(tuple(float(v) for v in probs))

    def _log_session(self, action: LogSession) -> None:
        draft = action.draft
        duration = None
        if draft.completed and self._shown_at is not None:
            duration = (time.monotonic() - self._shown_at) * 1000.0
        entry = SessionEntry(
            timestamp=time.time(),
            probabilities=draft.probabilities,
            emotion_word=draft.emotion_word,
            seed_text=draft.seed_text,
            poem_body=draft.poem_body,
            display_duration_ms=duration,
            detect_ms=self._last_detect_ms,
            classify_ms=self._last_classify_ms,
            generate_ms=self._last_generate_ms,
            outcome="completed" if draft.completed else "failed",
            reason=draft.reason,
        )
        self._shown_at = None
        try:
            self.assets.store.append(entry)
        except OSError as exc:
            log.warning("session log append failed: %s", exc)
