"""Seeded poem generation with temperature/top-k sampling.

Generation runs over pluggable next-token backends. The native backend is an
additive-smoothed n-gram model with backoff, trained on a plain-text corpus
whose documents are separated by a line containing exactly ``%%``. A remote
backend forwards the seed and parameters to an HTTP service and returns its
raw text. Raw output is trimmed so poems never end mid-sentence, and poems
shorter than the minimum word count are rejected and regenerated.

Newlines are first-class tokens, so the n-gram backend can reproduce poetic
line breaks and trimmed poems keep their original formatting.
"""

from __future__ import annotations

import json
import re
import time
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .emotions import SeedText

END_TOKEN = "\x03"
NEWLINE_TOKEN = "\n"
TOKEN_BUDGET_FACTOR = 4
TERMINAL_PUNCTUATION = ".!?"

_WORD_RE = re.compile(r"\S+")


class GenerationError(RuntimeError):
    """Backend or transport failure during poem generation."""


@dataclass(frozen=True)
class GenerationParams:
    """Sampling and validation knobs; defaults follow the shipped config."""

    max_words: int = 80
    min_words: int = 5
    temperature: float = 0.8
    top_k: int = 40
    max_attempts: int = 3
    fallback_line: str = "the glass holds your quiet gaze"

    def validate(self) -> "GenerationParams":
        if self.min_words > self.max_words:
            raise ValueError("min_words must not exceed max_words")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        return self


@dataclass(frozen=True)
class Poem:
    seed: SeedText
    body: str
    word_count: int
    created_at: float
    params: GenerationParams
    fallback: bool = False


@dataclass(frozen=True)
class Rejection:
    """A rejected generation attempt; a value, not an exception."""

    reason: str
    text: str


@dataclass(frozen=True)
class RawGeneration:
    text: str
    hit_budget: bool


def word_count(text: str) -> int:
    """Words are maximal runs of non-whitespace; newlines count as whitespace."""
    return len(_WORD_RE.findall(text))


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with newlines preserved as their own tokens."""
    tokens: list[str] = []
    for i, line in enumerate(text.split("\n")):
        if i > 0:
            tokens.append(NEWLINE_TOKEN)
        tokens.extend(line.split())
    return tokens


def detokenize(tokens: list[str]) -> str:
    """Inverse of tokenize up to whitespace normalization."""
    parts: list[str] = []
    at_line_start = True
    for tok in tokens:
        if tok == NEWLINE_TOKEN:
            parts.append("\n")
            at_line_start = True
        else:
            if not at_line_start:
                parts.append(" ")
            parts.append(tok)
            at_line_start = False
    return "".join(parts)


def sample_token(
    logits, temperature: float, top_k: int, rng: np.random.Generator
) -> int:
    """Temperature-scaled top-k sampling; never leaves the kept set.

    The kept set is the top_k largest logits with ties broken toward the
    lowest token id (positive temperature scaling preserves ranking, so the
    set is temperature-invariant).
    """
    z = np.asarray(logits, dtype=np.float64)
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    finite = np.isfinite(z)
    if not finite.any() or np.isnan(z).any() or np.isposinf(z).any():
        raise GenerationError("no finite logits to sample from")
    scaled = z / temperature
    # stable argsort keeps equal logits in token-id order
    order = np.argsort(-scaled, kind="stable")[: min(top_k, z.size)]
    kept = scaled[order]
    e = np.exp(kept - kept.max())
    probs = e / e.sum()
    return int(order[rng.choice(len(order), p=probs)])


# --- native n-gram backend ----------------------------------------------------


@dataclass
class NgramModel:
    """Additive-smoothed n-gram counts with shorter-context backoff.

    counts[k] maps a length-k context tuple to a Counter of successors;
    totals[k] caches the context's total count. The vocabulary includes the
    end-of-text token.
    """

    order: int
    alpha: float
    vocab: list[str]
    counts: list[dict[tuple[str, ...], Counter]]
    totals: list[dict[tuple[str, ...], int]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        if not self.totals:
            self.totals = [
                {ctx: sum(c.values()) for ctx, c in level.items()}
                for level in self.counts
            ]


def load_corpus(path: str | Path) -> list[str]:
    """Plain-text corpus, documents separated by a line of exactly '%%'."""
    text = Path(path).read_text(encoding="utf-8")
    docs = [doc.strip() for doc in re.split(r"(?m)^%%$", text)]
    docs = [d for d in docs if d]
    if not docs:
        raise ValueError(f"corpus {path} contains no documents")
    return docs


def train_ngram(corpus: list[str], order: int = 3, alpha: float = 0.01) -> NgramModel:
    """Count sliding windows per document; boundaries are never bridged."""
    if order < 2:
        raise ValueError("order must be >= 2")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    docs = [tokenize(doc) for doc in corpus]
    docs = [d for d in docs if d]
    if not docs:
        raise ValueError("corpus has no non-empty documents")
    vocab_set = {END_TOKEN}
    for toks in docs:
        vocab_set.update(toks)
    vocab = sorted(vocab_set)
    counts: list[dict[tuple[str, ...], Counter]] = [{} for _ in range(order)]
    for toks in docs:
        seq = toks + [END_TOKEN]
        for i, successor in enumerate(seq):
            for k in range(min(i, order - 1) + 1):
                ctx = tuple(seq[i - k : i])
                counts[k].setdefault(ctx, Counter())[successor] += 1
    return NgramModel(order=order, alpha=alpha, vocab=vocab, counts=counts)


def ngram_next_logits(model: NgramModel, context: list[str]) -> np.ndarray:
    """Log of the smoothed conditional distribution for the next token.

    Unseen contexts back off to shorter contexts; if no level matches (only
    possible for an empty model) the distribution is uniform.
    """
    v = len(model.vocab)
    ctx = tuple(context[-(model.order - 1) :]) if model.order > 1 else ()
    for k in range(len(ctx), -1, -1):
        sub = ctx[len(ctx) - k :]
        counter = model.counts[k].get(sub)
        if counter:
            total = model.totals[k][sub]
            probs = np.full(v, model.alpha, dtype=np.float64)
            for tok, c in counter.items():
                probs[model.index[tok]] += c
            denom = total + model.alpha * v
            if denom > 0:
                probs /= denom
                with np.errstate(divide="ignore"):
                    return np.log(probs)
    return np.full(v, -np.log(v))


class NgramBackend:
    """GeneratorBackend over a trained NgramModel."""

    def __init__(self, model: NgramModel, name: str = "ngram"):
        self.model = model
        self.name = name
        self.end_token_id = model.index[END_TOKEN]

    def begin(self, seed_text: str) -> list[str]:
        return tokenize(seed_text)

    def next_logits(self, context: list[str]) -> np.ndarray:
        return ngram_next_logits(self.model, context)

    def append(self, context: list[str], token_id: int) -> list[str]:
        return context + [self.model.vocab[token_id]]

    def decode(self, tokens: list[str]) -> str:
        return detokenize([t for t in tokens if t != END_TOKEN])

    def generate_text(
        self, seed: SeedText, params: GenerationParams, rng: np.random.Generator
    ) -> RawGeneration:
        return generate_raw(self, seed, params, rng)


class GeneratorBackend(Protocol):
    """Token-level generation interface (vocabulary fixed per instance)."""

    name: str
    end_token_id: int

    def begin(self, seed_text: str) -> list[str]: ...

    def next_logits(self, context: list[str]) -> np.ndarray: ...

    def append(self, context: list[str], token_id: int) -> list[str]: ...

    def decode(self, tokens: list[str]) -> str: ...


def generate_raw(
    backend: GeneratorBackend,
    seed: SeedText,
    params: GenerationParams,
    rng: np.random.Generator,
) -> RawGeneration:
    """Sample from the seed until end-of-text or the hard token budget.

    The budget (4 x max_words tokens) guards against backends that never emit
    end-of-text; budget-exhausted output is flagged for trimming.
    """
    params.validate()
    budget = TOKEN_BUDGET_FACTOR * params.max_words
    try:
        tokens = backend.begin(seed.text)
        hit_budget = True
        for _ in range(budget):
            logits = backend.next_logits(tokens)
            token_id = sample_token(logits, params.temperature, params.top_k, rng)
            if token_id == backend.end_token_id:
                hit_budget = False
                break
            tokens = backend.append(tokens, token_id)
        text = backend.decode(tokens)
    except GenerationError:
        raise
    except Exception as exc:
        raise GenerationError(f"backend {backend.name!r} failed: {exc}") from exc
    return RawGeneration(text=text, hit_budget=hit_budget)


def trim_and_validate(
    raw: str,
    seed: SeedText,
    params: GenerationParams,
    hit_budget: bool = False,
) -> Poem | Rejection:
    """Trim raw output to a displayable poem, or reject it.

    Truncates to max_words, then cuts back to the last terminal punctuation
    past the seed text. Without any punctuation, output that was word- or
    budget-truncated is cut at the last complete line. Line formatting inside
    the kept text is preserved. Poems below min_words are rejected.
    """
    if not raw:
        raise ValueError("raw text must be non-empty")
    if not raw.startswith(seed.text):
        raise ValueError("raw text does not start with its seed text")
    params.validate()

    matches = list(_WORD_RE.finditer(raw))
    if len(matches) > params.max_words:
        text = raw[: matches[params.max_words - 1].end()]
        truncated = True
    else:
        text = raw
        truncated = hit_budget

    tail = text[len(seed.text) :]
    punct_positions = [
        len(seed.text) + i for i, ch in enumerate(tail) if ch in TERMINAL_PUNCTUATION
    ]
    if punct_positions:
        text = text[: punct_positions[-1] + 1]
    elif truncated and "\n" in tail:
        text = text[: text.rindex("\n")]
    text = text.rstrip()

    n = word_count(text)
    if n < params.min_words:
        return Rejection(reason="too_short", text=text)
    return Poem(
        seed=seed,
        body=text,
        word_count=n,
        created_at=time.time(),
        params=params,
    )


class TextGenerator(Protocol):
    """Anything that can produce raw poem text for a seed."""

    name: str

    def generate_text(
        self, seed: SeedText, params: GenerationParams, rng: np.random.Generator
    ) -> RawGeneration: ...


def make_poem(
    backend: TextGenerator,
    seed: SeedText,
    params: GenerationParams,
    rng: np.random.Generator,
) -> Poem:
    """Generate-trim-validate loop with regeneration on rejection.

    Rejections regenerate with the same seed up to max_attempts, then fall
    back to the seed text plus the configured fallback line, flagged so a UI
    can render it distinctly. Backend failures raise after max_attempts.
    """
    params.validate()
    last_error: GenerationError | None = None
    rejected = False
    for _ in range(params.max_attempts):
        try:
            raw = backend.generate_text(seed, params, rng)
        except GenerationError as exc:
            last_error = exc
            continue
        result = trim_and_validate(raw.text, seed, params, raw.hit_budget)
        if isinstance(result, Poem):
            return result
        rejected = True
    if last_error is not None and not rejected:
        raise last_error
    body = f"{seed.text}\n{params.fallback_line}"
    return Poem(
        seed=seed,
        body=body,
        word_count=word_count(body),
        created_at=time.time(),
        params=params,
        fallback=True,
    )


# --- remote backend -----------------------------------------------------------


def remote_generate(
    endpoint: str, seed: SeedText, params: GenerationParams, timeout: float = 5.0
) -> str:
    """POST {seed_text, max_words, temperature, top_k}; expect {text}.

    The response text should begin with the seed; a server that returns only
    the continuation gets the seed prepended so the poem contract holds.
    """
    payload = json.dumps(
        {
            "seed_text": seed.text,
            "max_words": params.max_words,
            "temperature": params.temperature,
            "top_k": params.top_k,
        }
    ).encode("utf-8")
    req = urllib.request.Request(
        endpoint, data=payload, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except urllib.error.URLError as exc:
        raise GenerationError(f"remote backend {endpoint}: {exc}") from exc
    except TimeoutError as exc:
        raise GenerationError(f"remote backend {endpoint}: timed out") from exc
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise GenerationError(f"remote backend {endpoint}: invalid JSON") from exc
    text = doc.get("text") if isinstance(doc, dict) else None
    if not text or not isinstance(text, str):
        raise GenerationError(f"remote backend {endpoint}: malformed response")
    if not text.startswith(seed.text):
        text = f"{seed.text}\n{text}"
    return text


class RemoteBackend:
    """Text-level backend over an HTTP generation service."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.name = f"remote:{endpoint}"

    def generate_text(
        self, seed: SeedText, params: GenerationParams, rng: np.random.Generator
    ) -> RawGeneration:
        return RawGeneration(
            text=remote_generate(self.endpoint, seed, params, self.timeout),
            hit_budget=False,
        )


# --- n-gram model persistence ---------------------------------------------------

_CTX_SEP = "\x1f"


def save_ngram(model: NgramModel, path: str | Path) -> None:
    """JSON model file; contexts are unit-separator-joined token strings."""
    levels = []
    for level in model.counts:
        levels.append(
            {_CTX_SEP.join(ctx): dict(counter) for ctx, counter in level.items()}
        )
    doc = {
        "format": "affectmirror-ngram",
        "version": 1,
        "order": model.order,
        "alpha": model.alpha,
        "vocab": model.vocab,
        "counts": levels,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_ngram(path: str | Path) -> NgramModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read n-gram model {path}: {exc}") from exc
    if doc.get("format") != "affectmirror-ngram" or doc.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 n-gram model file")
    counts: list[dict[tuple[str, ...], Counter]] = []
    for level in doc["counts"]:
        parsed: dict[tuple[str, ...], Counter] = {}
        for key, counter in level.items():
            ctx = tuple(key.split(_CTX_SEP)) if key else ()
            parsed[ctx] = Counter(counter)
        counts.append(parsed)
    return NgramModel(
        order=int(doc["order"]),
        alpha=float(doc["alpha"]),
        vocab=list(doc["vocab"]),
        counts=counts,
    )
