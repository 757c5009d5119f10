"""Shared test backends and fixture builders."""

from __future__ import annotations

import numpy as np

from affectmirror.nn import (
    BatchNorm,
    Conv2D,
    Dense,
    DepthwiseConv2D,
    GlobalAvgPool,
    MaxPool2D,
    Network,
    ReLU,
    Softmax,
)
from affectmirror.poet import END_TOKEN, GenerationParams, RawGeneration, generate_raw
from affectmirror.emotions import SeedText
from affectmirror.vision import Cascade, CascadeStage, HaarRect, WeakClassifier


def always_pass_cascade(base: int = 24) -> Cascade:
    """Single stage that accepts any window with non-zero variance."""
    weak = WeakClassifier(
        rects=(
            HaarRect(0, 0, base, base, 1.0),
            HaarRect(0, 0, base, base, 0.0),
        ),
        threshold=-1e12,
        left_value=0.0,
        right_value=1.0,
    )
    return Cascade(base, base, (CascadeStage(0.5, (weak,)),)).validate()


def toy_face_cascade() -> Cascade:
    """Bright-over-dark pattern detector, base 24x24, two stages.

    Stage 1 wants strong vertical contrast (top half brighter); stage 2 wants
    horizontal symmetry (both left-right stumps must agree the split is
    small), discarding windows hanging off the pattern's sides.
    """
    contrast = WeakClassifier(
        rects=(HaarRect(0, 0, 24, 12, 1.0), HaarRect(0, 12, 24, 12, -1.0)),
        threshold=0.875,
        left_value=0.0,
        right_value=1.0,
    )
    lr = (HaarRect(0, 0, 12, 24, 1.0), HaarRect(12, 0, 12, 24, -1.0))
    symm_a = WeakClassifier(rects=lr, threshold=0.125, left_value=1.0, right_value=0.0)
    rl = (HaarRect(0, 0, 12, 24, -1.0), HaarRect(12, 0, 12, 24, 1.0))
    symm_b = WeakClassifier(rects=rl, threshold=0.125, left_value=1.0, right_value=0.0)
    return Cascade(
        24,
        24,
        (CascadeStage(0.5, (contrast,)), CascadeStage(1.5, (symm_a, symm_b))),
    ).validate()


def face_pattern_image(size: int = 120, face: int = 48, at: int = 36) -> np.ndarray:
    """Flat background with one bright block over a dark band.

    The dark band runs to the bottom edge so windows below the pattern are
    constant and variance-rejected.
    """
    img = np.full((size, size), 32, dtype=np.uint8)
    img[at : at + face // 2, at : at + face] = 200
    img[at + face // 2 :, at : at + face] = 60
    return img


class RandomEventSafety:
    """Drive random event sequences and check the engine safety invariants:

    - a poem is never held outside Presenting/FadingOut (so never in Idle)
    - StartGeneration is only ever emitted out of Sensing (so never while a
      poem is presenting under continuous face presence)
    - ShowPoem strictly alternates with FadeOut or a PoemFailed reset
    """

    @classmethod
    def run(cls, n_sequences: int, seq_len: int, seed: int = 0):
        import time as _time

        from affectmirror.engine import (
            EngineConfig,
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
            ShowPoem,
            StartGeneration,
            Tick,
            transition,
        )
        from affectmirror.poet import GenerationParams, Poem

        rng = np.random.default_rng(seed)
        prob_pool = [tuple(p) for p in rng.dirichlet(np.ones(7), size=256)]
        poem = Poem(
            seed=SeedText("You are", "glad"),
            body="You are glad of the morning light.",
            word_count=7,
            created_at=_time.time(),
            params=GenerationParams(),
        )
        config = EngineConfig(activate_frames=2, absence_frames=3, emotion_window=2)

        def random_event():
            roll = rng.integers(0, 100)
            if roll < 40:
                return FaceSeen(prob_pool[int(rng.integers(len(prob_pool)))])
            if roll < 70:
                return NoFace()
            if roll < 78:
                return PoemReady(poem)
            if roll < 84:
                return PoemFailed("synthetic")
            if roll < 90:
                return FadeInDone()
            if roll < 96:
                return FadeOutDone()
            return Tick(float(rng.random()))

        for _ in range(n_sequences):
            state = EngineState()
            awaiting_fade = False
            prev_phase = state.phase
            for _ in range(seq_len):
                state, actions = transition(state, random_event(), config)
                if state.phase not in (Phase.PRESENTING, Phase.FADING_OUT):
                    assert state.current_poem is None, "poem held outside presentation"
                for action in actions:
                    if isinstance(action, StartGeneration):
                        assert prev_phase == Phase.SENSING, "generation outside Sensing"
                    if isinstance(action, ShowPoem):
                        assert not awaiting_fade, "ShowPoem before previous FadeOut"
                        awaiting_fade = True
                    if isinstance(action, FadeOut):
                        awaiting_fade = False
                    if isinstance(action, LogSession) and not action.draft.completed:
                        awaiting_fade = False  # PoemFailed reset
                prev_phase = state.phase


def tiny_network(seed: int = 0, happy_bias: float = 0.0) -> Network:
    """Small random network exercising every layer kind, 1x48x48 -> 7."""
    rng = np.random.default_rng(seed)
    f32 = lambda a: np.asarray(a, dtype=np.float32)
    layers = (
        Conv2D(f32(rng.normal(0, 0.5, (4, 1, 3, 3))), f32(rng.normal(0, 0.1, 4)), 2, 1),
        ReLU(),
        BatchNorm(
            f32(rng.uniform(0.5, 1.5, 4)),
            f32(rng.normal(0, 0.1, 4)),
            f32(rng.normal(0, 0.1, 4)),
            f32(rng.uniform(0.5, 1.5, 4)),
        ),
        MaxPool2D(2, 2),
        DepthwiseConv2D(f32(rng.normal(0, 0.5, (4, 3, 3))), f32(rng.normal(0, 0.1, 4)), 1, 1),
        ReLU(),
        GlobalAvgPool(),
        Dense(
            f32(rng.normal(0, 0.5, (7, 4))),
            f32(np.array([0, 0, 0, happy_bias, 0, 0, 0])),
        ),
        Softmax(),
    )
    return Network(layers).validate()


class ScriptedBackend:
    """Token backend that follows a fixed continuation, then end-of-text.

    Non-next tokens get -inf logits, so sampling is exactly deterministic
    for any rng and temperature.
    """

    def __init__(self, continuation: list[str], name: str = "scripted"):
        self.continuation = list(continuation)
        self.name = name
        self.vocab = sorted(set(continuation) | {END_TOKEN, "la"})
        self.end_token_id = self.vocab.index(END_TOKEN)
        self.calls = 0

    def begin(self, seed_text: str) -> list[str]:
        self.calls += 1
        self._emitted = 0
        return seed_text.split()

    def next_logits(self, context: list[str]) -> np.ndarray:
        logits = np.full(len(self.vocab), -np.inf)
        if self._emitted < len(self.continuation):
            nxt = self.continuation[self._emitted]
        else:
            nxt = END_TOKEN
        logits[self.vocab.index(nxt)] = 0.0
        return logits

    def append(self, context: list[str], token_id: int) -> list[str]:
        self._emitted += 1
        return context + [self.vocab[token_id]]

    def decode(self, tokens: list[str]) -> str:
        return " ".join(t for t in tokens if t != END_TOKEN)

    def generate_text(self, seed: SeedText, params: GenerationParams, rng) -> RawGeneration:
        return generate_raw(self, seed, params, rng)


class RejectingBackend:
    """Always returns a continuation too short to pass validation."""

    name = "rejecting"

    def __init__(self):
        self.calls = 0

    def generate_text(self, seed, params, rng) -> RawGeneration:
        self.calls += 1
        return RawGeneration(text=seed.text, hit_budget=False)


class FailingBackend:
    name = "failing"

    def __init__(self):
        self.calls = 0

    def generate_text(self, seed, params, rng):
        from affectmirror.poet import GenerationError

        self.calls += 1
        raise GenerationError("backend 'failing': synthetic fault")
