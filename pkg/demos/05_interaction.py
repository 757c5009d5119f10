"""The presence-driven interaction, step by step.

Drives the pure transition function through one full encounter: a face
arrives, emotion frames accumulate, a poem generates and presents, the
viewer leaves, the poem fades, the session lands in the store, and the mood
history reflects it.
"""

import tempfile
import time
from pathlib import Path

import numpy as np

from affectmirror import EngineConfig, EngineState, SessionStore, mood_history, transition
from affectmirror.emotions import EmotionCategory, SeedText
from affectmirror.engine import (
    FaceSeen,
    FadeOutDone,
    LogSession,
    NoFace,
    PoemReady,
    SessionEntry,
)
from affectmirror.poet import GenerationParams, Poem

config = EngineConfig(activate_frames=3, absence_frames=4, emotion_window=2)
happy = tuple(np.eye(7)[EmotionCategory.HAPPY])

poem = Poem(
    seed=SeedText("You are", "glad"),
    body="You are glad of the quiet that follows you home.",
    word_count=10,
    created_at=time.time(),
    params=GenerationParams(),
)

script = (
    [("face", FaceSeen(happy))] * 5
    + [("poem ready", PoemReady(poem))]
    + [("face", FaceSeen(happy))] * 2
    + [("no face", NoFace())] * 4
    + [("fade finished", FadeOutDone())]
)

state = EngineState()
print(f"start: {state.phase.value}")
log_actions = []
for label, event in script:
    state, actions = transition(state, event, config)
    for action in actions:
        print(f"  {label:<13} -> {state.phase.value:<12} action: {type(action).__name__}")
        if isinstance(action, LogSession):
            log_actions.append(action)
    if not actions:
        print(f"  {label:<13} -> {state.phase.value}")

draft = log_actions[0].draft
with tempfile.TemporaryDirectory() as tmp:
    store = SessionStore(Path(tmp) / "sessions.ndjson")
    store.append(
        SessionEntry(
            timestamp=time.time(),
            probabilities=draft.probabilities,
            emotion_word=draft.emotion_word,
            seed_text=draft.seed_text,
            poem_body=draft.poem_body,
            display_duration_ms=2100.0,
            detect_ms=4.0,
            classify_ms=2.0,
            generate_ms=45.0,
            outcome="completed",
        )
    )
    print("\nmood history from the session store:")
    for ts, category, confidence in mood_history(store):
        print(f"  {ts:.0f}: {category.name.lower()} ({confidence:.2f})")
