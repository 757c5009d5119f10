"""affectmirror: an affective mirror pipeline.

Faces are detected with a staged Haar cascade, classified into seven emotion
categories by a small CNN, mapped to an intensity-graded emotion word, and
used to seed a poem generator whose output is trimmed, validated, and
presented through a presence-driven fade interaction. A survey-statistics
module scores the companion meaning questionnaire.
"""

from .emotions import (
    EmotionCategory,
    EmotionLexicon,
    SeedText,
    check_probs,
    compose_seed,
    default_lexicon,
    dominant_emotion,
    load_lexicon,
    map_emotion,
)
from .engine import (
    EngineConfig,
    EngineState,
    Phase,
    SessionEntry,
    SessionStore,
    aggregate_emotion,
    mood_history,
    run_pipeline_once,
    transition,
)
from .metrics import (
    Component,
    ComponentMap,
    QuestionnaireResponse,
    component_report,
    correlation_matrix,
    five_number_summary,
    mean_sd,
    p_value_r,
    pearson_r,
)
from .nn import (
    Network,
    NetworkClassifier,
    infer_probs,
    load_weights,
    load_weights_file,
    save_weights,
    softmax,
)
from .poet import (
    GenerationParams,
    NgramBackend,
    NgramModel,
    Poem,
    RemoteBackend,
    generate_raw,
    load_corpus,
    make_poem,
    sample_token,
    train_ngram,
    trim_and_validate,
)
from .vision import (
    Cascade,
    DetectionParams,
    FaceBox,
    detect_faces,
    import_cascade_xml,
    integral_image,
    largest_face,
    load_cascade,
    preprocess_face,
    read_pgm,
    rect_sum,
    save_cascade,
    write_pgm,
)

__version__ = "0.1.0"
