"""Seeded generation over the native n-gram backend.

Trains on the bundled second-person corpus, then samples poems with the
default temperature/top-k settings, showing the trim-and-validate stage and
how temperature changes the texture.
"""

from pathlib import Path

import numpy as np

from affectmirror import (
    GenerationParams,
    NgramBackend,
    SeedText,
    load_corpus,
    make_poem,
    train_ngram,
)
from affectmirror.poet import generate_raw, trim_and_validate

ROOT = Path(__file__).resolve().parent.parent
docs = load_corpus(ROOT / "data" / "corpus.txt")
model = train_ngram(docs, order=3, alpha=0.01)
backend = NgramBackend(model)
print(f"corpus: {len(docs)} documents, vocabulary {len(model.vocab)} tokens")

seed = SeedText("You are", "glad")
params = GenerationParams()
rng = np.random.default_rng(42)

raw = generate_raw(backend, seed, params, rng)
print(f"\nraw generation ({'budget hit' if raw.hit_budget else 'ended naturally'}):")
print(raw.text)
result = trim_and_validate(raw.text, seed, params, raw.hit_budget)
print(f"\nafter trimming -> {type(result).__name__}")

print("\nthree poems, default settings (temperature 0.8, top_k 40):")
for i in range(3):
    poem = make_poem(backend, seed, params, np.random.default_rng(100 + i))
    flag = " [fallback]" if poem.fallback else ""
    print(f"\n--- poem {i + 1} ({poem.word_count} words){flag} ---")
    print(poem.body)

print("\nsame seed, colder sampling (temperature 0.2):")
cold = GenerationParams(temperature=0.2)
poem = make_poem(backend, seed, cold, np.random.default_rng(7))
print(poem.body)
