"""Presence-driven interaction core.

A pure transition function owns the phase logic: a sustained face activates
the mirror, a short window of classified frames is aggregated into one
emotion reading, generation runs while the viewer keeps looking, the poem
stays up for as long as the face does, and sustained absence fades it out.
Debounce counters absorb detector flicker on both edges.

The transition performs no I/O; it returns actions (start generation, show
poem, fade out, log session) for the service layer to execute. Each finished
interaction is appended to a newline-delimited session log, which also backs
the mood-history query.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .emotions import (
    EmotionCategory,
    EmotionLexicon,
    check_probs,
    compose_seed,
    default_lexicon,
    dominant_emotion,
    map_emotion,
)
from .poet import GenerationParams, Poem, make_poem
from .vision import DetectionParams, detect_faces, largest_face, preprocess_face

log = logging.getLogger(__name__)


class Phase(Enum):
    IDLE = "idle"
    SENSING = "sensing"
    GENERATING = "generating"
    PRESENTING = "presenting"
    FADING_OUT = "fading_out"


@dataclass(frozen=True)
class EngineConfig:
    activate_frames: int = 3
    absence_frames: int = 15
    emotion_window: int = 10
    fade_in_ms: int = 1500
    fade_out_ms: int = 1200
    lexicon: EmotionLexicon = field(default_factory=default_lexicon)


# --- events -------------------------------------------------------------------


@dataclass(frozen=True)
class FaceSeen:
    probabilities: tuple[float, ...]


@dataclass(frozen=True)
class NoFace:
    pass


@dataclass(frozen=True)
class PoemReady:
    poem: Poem


@dataclass(frozen=True)
class PoemFailed:
    reason: str


@dataclass(frozen=True)
class FadeInDone:
    pass


@dataclass(frozen=True)
class FadeOutDone:
    pass


@dataclass(frozen=True)
class Tick:
    timestamp: float


Event = FaceSeen | NoFace | PoemReady | PoemFailed | FadeInDone | FadeOutDone | Tick


# --- actions ------------------------------------------------------------------


@dataclass(frozen=True)
class StartGeneration:
    """Aggregated reading for the generation worker; the worker composes the
    full seed text (the random prefix draw stays out of the pure core)."""

    probabilities: tuple[float, ...]
    emotion_word: str


@dataclass(frozen=True)
class ShowPoem:
    poem: Poem
    fade_in_ms: int


@dataclass(frozen=True)
class FadeOut:
    fade_out_ms: int


@dataclass(frozen=True)
class SessionDraft:
    """What the state machine knows about a finished interaction."""

    probabilities: tuple[float, ...] | None
    emotion_word: str | None
    seed_text: str | None
    poem_body: str | None
    completed: bool
    reason: str | None = None


@dataclass(frozen=True)
class LogSession:
    draft: SessionDraft


Action = StartGeneration | ShowPoem | FadeOut | LogSession


@dataclass(frozen=True)
class EngineState:
    phase: Phase = Phase.IDLE
    presence_counter: int = 0
    absence_counter: int = 0
    window: tuple[tuple[float, ...], ...] = ()
    current_poem: Poem | None = None
    pending_probs: tuple[float, ...] | None = None
    pending_word: str | None = None


def aggregate_emotion(window) -> np.ndarray:
    """Component-wise mean of probability vectors, renormalized to sum 1."""
    if len(window) == 0:
        raise ValueError("cannot aggregate an empty emotion window")
    stacked = np.array([check_probs(p) for p in window])
    mean = stacked.mean(axis=0)
    return mean / mean.sum()


def _draft(state: EngineState, completed: bool, reason: str | None = None) -> SessionDraft:
    poem = state.current_poem
    return SessionDraft(
        probabilities=state.pending_probs,
        emotion_word=state.pending_word,
        seed_text=poem.seed.text if poem else None,
        poem_body=poem.body if poem else None,
        completed=completed,
        reason=reason,
    )


def transition(
    state: EngineState, event: Event, config: EngineConfig
) -> tuple[EngineState, list[Action]]:
    """Pure step function; unknown events in a phase are logged no-ops."""
    phase = state.phase

    if isinstance(event, FaceSeen):
        if phase == Phase.IDLE:
            count = state.presence_counter + 1
            if count >= config.activate_frames:
                return replace(
                    state,
                    phase=Phase.SENSING,
                    presence_counter=0,
                    absence_counter=0,
                    window=(),
                ), []
            return replace(state, presence_counter=count), []
        if phase == Phase.SENSING:
            window = state.window + (tuple(event.probabilities),)
            if len(window) >= config.emotion_window:
                agg = aggregate_emotion(window)
                word = map_emotion(agg, config.lexicon)
                probs = tuple(float(v) for v in agg)
                next_state = replace(
                    state,
                    phase=Phase.GENERATING,
                    window=(),
                    absence_counter=0,
                    pending_probs=probs,
                    pending_word=word,
                )
                return next_state, [StartGeneration(probs, word)]
            return replace(state, window=window, absence_counter=0), []
        if phase in (Phase.GENERATING, Phase.PRESENTING):
            # poem persists while the viewer keeps looking
            return replace(state, absence_counter=0), []
        return state, []

    if isinstance(event, NoFace):
        if phase == Phase.IDLE:
            return replace(state, presence_counter=0), []
        if phase == Phase.SENSING:
            count = state.absence_counter + 1
            if count >= config.absence_frames:
                return EngineState(), []
            return replace(state, absence_counter=count), []
        if phase == Phase.GENERATING:
            # let the poem finish; presentation absence logic takes over after
            return replace(state, absence_counter=state.absence_counter + 1), []
        if phase == Phase.PRESENTING:
            count = state.absence_counter + 1
            if count >= config.absence_frames:
                return replace(
                    state, phase=Phase.FADING_OUT, absence_counter=0
                ), [FadeOut(config.fade_out_ms)]
            return replace(state, absence_counter=count), []
        return state, []

    if isinstance(event, PoemReady):
        if phase == Phase.GENERATING:
            next_state = replace(
                state,
                phase=Phase.PRESENTING,
                current_poem=event.poem,
                absence_counter=0,
            )
            return next_state, [ShowPoem(event.poem, config.fade_in_ms)]
        log.debug("stale PoemReady ignored in phase %s", phase.value)
        return state, []

    if isinstance(event, PoemFailed):
        if phase == Phase.GENERATING:
            draft = _draft(state, completed=False, reason=event.reason)
            return EngineState(), [LogSession(draft)]
        return state, []

    if isinstance(event, FadeOutDone):
        if phase == Phase.FADING_OUT:
            draft = _draft(state, completed=True)
            return EngineState(), [LogSession(draft)]
        return state, []

    # FadeInDone and Tick never change phase
    return state, []


# --- one-shot pipeline ----------------------------------------------------------


class PipelineError(RuntimeError):
    """Pipeline failure with the stage it happened in attached."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineDeps:
    cascade: object
    classifier: object
    lexicon: EmotionLexicon
    backend: object
    params: GenerationParams
    detect_params: DetectionParams = field(default_factory=DetectionParams)


@dataclass(frozen=True)
class SessionEntry:
    timestamp: float
    probabilities: tuple[float, ...] | None
    emotion_word: str | None
    seed_text: str | None
    poem_body: str | None
    display_duration_ms: float | None
    detect_ms: float | None
    classify_ms: float | None
    generate_ms: float | None
    outcome: str  # generated | completed | failed | no_face
    reason: str | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionEntry":
        probs = doc.get("probabilities")
        return cls(
            timestamp=float(doc["timestamp"]),
            probabilities=tuple(probs) if probs is not None else None,
            emotion_word=doc.get("emotion_word"),
            seed_text=doc.get("seed_text"),
            poem_body=doc.get("poem_body"),
            display_duration_ms=doc.get("display_duration_ms"),
            detect_ms=doc.get("detect_ms"),
            classify_ms=doc.get("classify_ms"),
            generate_ms=doc.get("generate_ms"),
            outcome=doc.get("outcome", "completed"),
            reason=doc.get("reason"),
        )


def run_pipeline_once(
    frame, deps: PipelineDeps, rng: np.random.Generator
) -> tuple[Poem | None, SessionEntry]:
    """detect -> largest face -> preprocess -> classify -> map -> seed -> poem.

    Wall-clock per-stage timings land in the returned entry. A frame without
    a face short-circuits after detection.
    """
    t0 = time.perf_counter()
    try:
        face = largest_face(detect_faces(frame, deps.cascade, deps.detect_params))
    except Exception as exc:
        raise PipelineError("detect", exc) from exc
    detect_ms = (time.perf_counter() - t0) * 1000.0

    if face is None:
        entry = SessionEntry(
            timestamp=time.time(),
            probabilities=None,
            emotion_word=None,
            seed_text=None,
            poem_body=None,
            display_duration_ms=None,
            detect_ms=detect_ms,
            classify_ms=None,
            generate_ms=None,
            outcome="no_face",
        )
        return None, entry

    t1 = time.perf_counter()
    try:
        tensor = preprocess_face(frame, face)
        probs = check_probs(deps.classifier.classify(tensor))
    except Exception as exc:
        raise PipelineError("classify", exc) from exc
    classify_ms = (time.perf_counter() - t1) * 1000.0

    t2 = time.perf_counter()
    try:
        word = map_emotion(probs, deps.lexicon)
        seed = compose_seed(word, deps.lexicon, rng)
        poem = make_poem(deps.backend, seed, deps.params, rng)
    except Exception as exc:
        raise PipelineError("generate", exc) from exc
    generate_ms = (time.perf_counter() - t2) * 1000.0

    entry = SessionEntry(
        timestamp=time.time(),
        probabilities=tuple(float(v) for v in probs),
        emotion_word=word,
        seed_text=seed.text,
        poem_body=poem.body,
        display_duration_ms=None,
        detect_ms=detect_ms,
        classify_ms=classify_ms,
        generate_ms=generate_ms,
        outcome="generated",
    )
    return poem, entry


# --- session store ----------------------------------------------------------------


class SessionStore:
    """Append-only newline-delimited JSON records, one per session entry.

    Logging is best-effort for the engine: callers may catch OSError and
    continue. A corrupt (typically partial trailing) record is skipped with
    a warning; prior records stay readable.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, entry: SessionEntry) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(entry.to_json() + "\n")

    def read_all(self) -> list[SessionEntry]:
        if not self.path.exists():
            return []
        entries = []
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entries.append(SessionEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError):
                    log.warning("%s:%d: skipping corrupt session record", self.path, lineno)
        return entries


def append_session(store: SessionStore, entry: SessionEntry) -> None:
    store.append(entry)


def mood_history(
    store: SessionStore, since: float = 0.0
) -> list[tuple[float, EmotionCategory, float]]:
    """Chronological dominant-emotion series from the session log."""
    series = []
    for entry in store.read_all():
        if entry.probabilities is None or entry.timestamp < since:
            continue
        category, confidence = dominant_emotion(entry.probabilities)
        series.append((entry.timestamp, category, confidence))
    series.sort(key=lambda item: item[0])
    return series
