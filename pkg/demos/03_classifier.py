"""Face crop through the CNN: preprocessing, inference, probabilities.

The bundled fer_tiny.ferw is a randomly initialized fixture that exercises
every layer kind; swap in weights exported from a real trained model for
meaningful classification.
"""

from pathlib import Path

from affectmirror import (
    DetectionParams,
    NetworkClassifier,
    detect_faces,
    largest_face,
    map_emotion,
    preprocess_face,
    read_pgm,
)
from affectmirror.emotions import EmotionCategory, default_lexicon
from affectmirror.nn import load_weights_file

ROOT = Path(__file__).resolve().parent.parent
net = load_weights_file(ROOT / "fixtures" / "fer_tiny.ferw")
print("network layers:")
for i, layer in enumerate(net.layers):
    print(f"  {i}: {layer.kind}")

frame = read_pgm(ROOT / "fixtures" / "face.pgm")
from affectmirror import load_cascade

cascade = load_cascade(ROOT / "fixtures" / "cascade.hcas")
box = largest_face(
    detect_faces(frame, cascade, DetectionParams(1.1, 3, 24))
)
tensor = preprocess_face(frame, box)
print(f"\ncrop {box} -> tensor {tensor.shape}, range [{tensor.min():.2f}, {tensor.max():.2f}]")

clf = NetworkClassifier(net, name="ferw:fer_tiny.ferw")
probs = clf.classify(tensor)
print("\nprobabilities:")
for cat in EmotionCategory:
    bar = "#" * int(probs[cat] * 40)
    print(f"  {cat.name.lower():<9} {probs[cat]:.3f} {bar}")
print(f"\nemotion word: {map_emotion(probs, default_lexicon())!r}")
