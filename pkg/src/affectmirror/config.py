"""Service configuration: a JSON file naming assets, knobs, and the backend.

Paths are resolved relative to the config file so a checkout runs from any
working directory. Referenced assets must exist at load time and parse at
startup; `load_assets` is the fail-fast step that turns a validated config
into live objects (cascade, classifier, lexicon, generation backend).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .emotions import EmotionLexicon, load_lexicon
from .engine import EngineConfig, PipelineDeps, SessionStore
from .nn import NetworkClassifier
from .poet import (
    GenerationParams,
    NgramBackend,
    RemoteBackend,
    load_corpus,
    load_ngram,
    train_ngram,
)
from .vision import Cascade, DetectionParams, import_cascade_xml, load_cascade

BACKENDS = ("ngram", "remote")


class ConfigError(ValueError):
    """Invalid or incomplete service configuration."""


@dataclass(frozen=True)
class NgramSettings:
    corpus: Path | None = None
    model: Path | None = None
    order: int = 3
    alpha: float = 0.01


@dataclass(frozen=True)
class RemoteSettings:
    endpoint: str = ""
    timeout_s: float = 5.0


@dataclass(frozen=True)
class ServiceConfig:
    host: str
    port: int
    cascade_path: Path
    weights_path: Path
    lexicon_path: Path
    backend: str
    ngram: NgramSettings
    remote: RemoteSettings
    generation: GenerationParams
    engine: EngineConfig
    detector: DetectionParams
    session_store_path: Path
    generation_timeout_s: float = 10.0
    ui_dir: Path | None = None


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what}: not found: {path}")
    return path


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else (base / candidate).resolve()

    listen = doc.get("listen", {})
    backend = doc.get("backend", "ngram")
    if backend not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}, got {backend!r}")

    ngram_doc = doc.get("ngram", {})
    ngram = NgramSettings(
        corpus=resolve(ngram_doc["corpus"]) if "corpus" in ngram_doc else None,
        model=resolve(ngram_doc["model"]) if "model" in ngram_doc else None,
        order=int(ngram_doc.get("order", 3)),
        alpha=float(ngram_doc.get("alpha", 0.01)),
    )
    remote_doc = doc.get("remote", {})
    remote = RemoteSettings(
        endpoint=str(remote_doc.get("endpoint", "")),
        timeout_s=float(remote_doc.get("timeout_s", 5.0)),
    )

    gen_doc = doc.get("generation", {})
    generation = GenerationParams(
        max_words=int(gen_doc.get("max_words", 80)),
        min_words=int(gen_doc.get("min_words", 5)),
        temperature=float(gen_doc.get("temperature", 0.8)),
        top_k=int(gen_doc.get("top_k", 40)),
        max_attempts=int(gen_doc.get("max_attempts", 3)),
        fallback_line=str(
            gen_doc.get("fallback_line", GenerationParams().fallback_line)
        ),
    ).validate()

    lexicon_path = _require_file(resolve(doc.get("lexicon", "")), "lexicon")
    lexicon = load_lexicon(lexicon_path)

    eng_doc = doc.get("engine", {})
    engine = EngineConfig(
        activate_frames=int(eng_doc.get("activate_frames", 3)),
        absence_frames=int(eng_doc.get("absence_frames", 15)),
        emotion_window=int(eng_doc.get("emotion_window", 10)),
        fade_in_ms=int(eng_doc.get("fade_in_ms", 1500)),
        fade_out_ms=int(eng_doc.get("fade_out_ms", 1200)),
        lexicon=lexicon,
    )

    det_doc = doc.get("detector", {})
    detector = DetectionParams(
        scale_factor=float(det_doc.get("scale_factor", 1.1)),
        min_neighbors=int(det_doc.get("min_neighbors", 3)),
        min_size=int(det_doc.get("min_size", 48)),
    ).validate()

    cascade_path = _require_file(resolve(doc.get("cascade", "")), "cascade")
    weights_path = _require_file(resolve(doc.get("weights", "")), "weights")
    if backend == "ngram":
        if ngram.model is not None:
            _require_file(ngram.model, "ngram model")
        elif ngram.corpus is not None:
            _require_file(ngram.corpus, "corpus")
        else:
            raise ConfigError("ngram backend needs a 'corpus' or 'model' path")
    elif not remote.endpoint:
        raise ConfigError("remote backend needs an 'endpoint'")

    ui_dir = doc.get("ui")
    return ServiceConfig(
        host=str(listen.get("host", "127.0.0.1")),
        port=int(listen.get("port", 8765)),
        cascade_path=cascade_path,
        weights_path=weights_path,
        lexicon_path=lexicon_path,
        backend=backend,
        ngram=ngram,
        remote=remote,
        generation=generation,
        engine=engine,
        detector=detector,
        session_store_path=resolve(doc.get("session_store", "sessions.ndjson")),
        generation_timeout_s=float(doc.get("generation_timeout_s", 10.0)),
        ui_dir=resolve(ui_dir) if ui_dir else None,
    )


@dataclass
class Assets:
    cascade: Cascade
    classifier: NetworkClassifier
    lexicon: EmotionLexicon
    backend: object
    store: SessionStore

    def pipeline_deps(self, config: ServiceConfig) -> PipelineDeps:
        return PipelineDeps(
            cascade=self.cascade,
            classifier=self.classifier,
            lexicon=self.lexicon,
            backend=self.backend,
            params=config.generation,
            detect_params=config.detector,
        )


def load_assets(config: ServiceConfig) -> Assets:
    """Fail-fast startup loading; errors name the offending asset."""
    try:
        if config.cascade_path.suffix.lower() == ".xml":
            cascade = import_cascade_xml(config.cascade_path)
        else:
            cascade = load_cascade(config.cascade_path)
    except Exception as exc:
        raise ConfigError(f"cascade: {exc}") from exc
    try:
        classifier = NetworkClassifier.from_file(config.weights_path)
    except Exception as exc:
        raise ConfigError(f"weights: {exc}") from exc
    lexicon = config.engine.lexicon

    if config.backend == "ngram":
        try:
            if config.ngram.model is not None:
                model = load_ngram(config.ngram.model)
            else:
                docs = load_corpus(config.ngram.corpus)
                model = train_ngram(docs, config.ngram.order, config.ngram.alpha)
        except Exception as exc:
            raise ConfigError(f"ngram backend: {exc}") from exc
        backend = NgramBackend(model)
    else:
        backend = RemoteBackend(config.remote.endpoint, config.remote.timeout_s)

    return Assets(
        cascade=cascade,
        classifier=classifier,
        lexicon=lexicon,
        backend=backend,
        store=SessionStore(config.session_store_path),
    )
