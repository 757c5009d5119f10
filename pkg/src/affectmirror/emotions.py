"""Emotion domain types, the confidence-to-word mapping, and seed composition.

A classifier produces a 7-component probability vector over the FER-2013
categories. The mapping picks the dominant category, reads its confidence as
an intensity proxy, and looks the intensity up in a per-category band table
(the lexicon) to get an emotion word. A randomly chosen prefix phrase turns
the word into the seed text that conditions poem generation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

PROB_SUM_TOL = 1e-6


class EmotionCategory(IntEnum):
    """The seven FER-2013 categories, in dataset index order."""

    ANGRY = 0
    DISGUST = 1
    FEAR = 2
    HAPPY = 3
    SAD = 4
    SURPRISE = 5
    NEUTRAL = 6


class LexiconError(ValueError):
    """Raised for a malformed lexicon definition or config file."""


def check_probs(p) -> np.ndarray:
    """Validate and return a 7-vector of emotion probabilities.

    Components must be non-negative and sum to 1 within 1e-6.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (len(EmotionCategory),):
        raise ValueError(f"expected 7 probabilities, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(float(arr.sum()) - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {arr.sum():.8f}, not 1")
    return arr


# Default intensity bands. The two anchor points from the band design
# (happy@0.35 -> "glad", happy@0.95 -> "ecstatic") pin the edges at 0.6/0.85;
# the word table is an editorial default and fully overridable via config.
_DEFAULT_BANDS = {
    EmotionCategory.ANGRY: ["annoyed", "angry", "furious"],
    EmotionCategory.DISGUST: ["put-off", "disgusted", "revolted"],
    EmotionCategory.FEAR: ["uneasy", "afraid", "terrified"],
    EmotionCategory.HAPPY: ["glad", "joyful", "ecstatic"],
    EmotionCategory.SAD: ["wistful", "melancholy", "devastated"],
    EmotionCategory.SURPRISE: ["curious", "surprised", "astonished"],
    EmotionCategory.NEUTRAL: ["relaxed", "calm", "still"],
}
_DEFAULT_EDGES = [0.0, 0.6, 0.85]

_DEFAULT_PREFIXES = ["You are feeling", "You can be", "You are", "So"]


@dataclass(frozen=True)
class SeedText:
    """Prefix phrase plus emotion word; `text` is always 'prefix word'."""

    prefix: str
    emotion_word: str

    @property
    def text(self) -> str:
        return f"{self.prefix} {self.emotion_word}"


@dataclass
class EmotionLexicon:
    """Per-category (threshold, word) bands plus the seed prefix phrases.

    Band i covers confidences in [threshold_i, threshold_{i+1}); the last
    band is closed at 1.0. Thresholds must strictly increase and start at 0
    so every confidence in [0, 1] maps to a word.
    """

    bands: dict[EmotionCategory, list[tuple[float, str]]]
    prefixes: list[str] = field(default_factory=lambda: list(_DEFAULT_PREFIXES))

    def validate(self) -> "EmotionLexicon":
        for cat in EmotionCategory:
            if cat not in self.bands or not self.bands[cat]:
                raise LexiconError(f"no bands for category {cat.name}")
            thresholds = [t for t, _ in self.bands[cat]]
            if thresholds[0] != 0.0:
                raise LexiconError(f"{cat.name}: first threshold must be 0")
            if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
                raise LexiconError(f"{cat.name}: thresholds must strictly increase")
            if any(not (0.0 <= t <= 1.0) for t in thresholds):
                raise LexiconError(f"{cat.name}: thresholds must lie in [0, 1]")
            if any(not w for _, w in self.bands[cat]):
                raise LexiconError(f"{cat.name}: empty emotion word")
        if not self.prefixes:
            raise LexiconError("at least one prefix phrase is required")
        return self


def default_lexicon() -> EmotionLexicon:
    bands = {
        cat: list(zip(_DEFAULT_EDGES, words)) for cat, words in _DEFAULT_BANDS.items()
    }
    return EmotionLexicon(bands=bands).validate()


def load_lexicon(path: str | Path) -> EmotionLexicon:
    """Load a lexicon from a JSON config file.

    Expected shape::

        {
          "bands": {"happy": [[0.0, "glad"], [0.6, "joyful"], [0.85, "ecstatic"]], ...},
          "prefixes": ["You are", ...]
        }

    Category keys are case-insensitive names of the seven categories.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise LexiconError(f"cannot read lexicon {path}: {exc}") from exc
    if not isinstance(raw, dict) or "bands" not in raw:
        raise LexiconError(f"lexicon {path}: missing 'bands' table")
    bands: dict[EmotionCategory, list[tuple[float, str]]] = {}
    for name, entries in raw["bands"].items():
        try:
            cat = EmotionCategory[name.upper()]
        except KeyError:
            raise LexiconError(f"lexicon {path}: unknown category {name!r}") from None
        bands[cat] = [(float(t), str(w)) for t, w in entries]
    prefixes = [str(s) for s in raw.get("prefixes", _DEFAULT_PREFIXES)]
    return EmotionLexicon(bands=bands, prefixes=prefixes).validate()


def dominant_emotion(p) -> tuple[EmotionCategory, float]:
    """Return the argmax category and its probability.

    Ties break toward the lowest category index (np.argmax picks the first
    maximal component).
    """
    arr = check_probs(p)
    idx = int(np.argmax(arr))
    return EmotionCategory(idx), float(arr[idx])


def word_for(category: EmotionCategory, confidence: float, lex: EmotionLexicon) -> str:
    """Word of the band whose interval contains `confidence`."""
    if not (0.0 <= confidence <= 1.0):
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    chosen = lex.bands[category][0][1]
    for threshold, word in lex.bands[category]:
        if confidence >= threshold:
            chosen = word
        else:
            break
    return chosen


def map_emotion(p, lex: EmotionLexicon) -> str:
    """Map a probability vector to an intensity-graded emotion word."""
    category, confidence = dominant_emotion(p)
    return word_for(category, confidence, lex)


def compose_seed(word: str, lex: EmotionLexicon, rng: np.random.Generator) -> SeedText:
    """Attach a uniformly drawn prefix phrase to an emotion word."""
    if not word:
        raise ValueError("emotion word must be non-empty")
    if not lex.prefixes:
        raise LexiconError("lexicon has no prefix phrases")
    prefix = lex.prefixes[int(rng.integers(len(lex.prefixes)))]
    return SeedText(prefix=prefix, emotion_word=word)
