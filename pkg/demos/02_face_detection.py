"""Staged-cascade face detection on the synthetic fixture frame.

Shows the constant-time rectangle sums behind the features, the raw
multi-scale hits, and the grouped detection the pipeline actually uses.
"""

from pathlib import Path

from affectmirror import (
    DetectionParams,
    detect_faces,
    integral_image,
    largest_face,
    load_cascade,
    read_pgm,
    rect_sum,
)
from affectmirror.vision import scan_windows

ROOT = Path(__file__).resolve().parent.parent
frame = read_pgm(ROOT / "fixtures" / "face.pgm")
cascade = load_cascade(ROOT / "fixtures" / "cascade.hcas")
params = DetectionParams(scale_factor=1.1, min_neighbors=3, min_size=24)

ii = integral_image(frame)
print(f"frame {frame.shape[1]}x{frame.shape[0]}, "
      f"whole-image sum via integral image: {rect_sum(ii, 0, 0, frame.shape[1], frame.shape[0])}")
print(f"bright block sum (36,36,48,24): {rect_sum(ii, 36, 36, 48, 24)}")

raw = scan_windows(frame, cascade, params)
print(f"\nraw hits across scales: {len(raw)}")
sizes = sorted({(b.w, b.h) for b in raw})
print(f"window sizes that fired: {sizes}")

faces = detect_faces(frame, cascade, params)
print(f"\ngrouped detections (min_neighbors={params.min_neighbors}):")
for box in faces:
    print(f"  x={box.x} y={box.y} w={box.w} h={box.h}")
print(f"tracked face: {largest_face(faces)}")
