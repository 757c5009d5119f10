"""From a classifier's probability vector to a seed phrase.

The mapping picks the dominant category, treats its probability as an
intensity proxy, and looks it up in per-category word bands. A random prefix
phrase then turns the word into the seed text that conditions generation.
"""

import numpy as np

from affectmirror import compose_seed, default_lexicon, dominant_emotion, map_emotion
from affectmirror.emotions import EmotionCategory, word_for

lex = default_lexicon()

print("Band table (threshold -> word):")
for cat in EmotionCategory:
    bands = ", ".join(f"{t:.2f} -> {w}" for t, w in lex.bands[cat])
    print(f"  {cat.name.lower():<9} {bands}")

print("\nThe band-edge anchor examples:")
for conf in (0.35, 0.95):
    print(f"  happy at {conf:.0%} -> {word_for(EmotionCategory.HAPPY, conf, lex)!r}")

print("\nA full vector through the pipeline:")
p = np.array([0.05, 0.05, 0.05, 0.35, 0.30, 0.10, 0.10])
category, confidence = dominant_emotion(p)
word = map_emotion(p, lex)
print(f"  probabilities {p}")
print(f"  dominant: {category.name.lower()} at {confidence:.2f} -> {word!r}")

rng = np.random.default_rng(7)
print("\nSeed phrases (prefix drawn uniformly):")
for _ in range(4):
    print(f"  {compose_seed(word, lex, rng).text!r}")
