"""Face detection: integral images, staged Haar cascades, and face-crop prep.

The detector is the classic staged scheme: rectangular intensity-difference
features are evaluated in constant time on an integral image, weak one-split
classifiers vote within each stage, and a window survives only if every
stage's weighted vote sum clears the stage threshold. Windows are evaluated
on their variance-normalized intensities so lighting changes do not move the
feature scale. Overlapping raw hits are grouped; thin groups are discarded.

Cascades load from a compact native binary format (magic ``HCAS``) or import
from the stump-only subset of the de-facto XML cascade interchange format.
"""

from __future__ import annotations

import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_WINDOW_STD = 1e-9
GROUP_EPS = 0.2

HCAS_MAGIC = b"HCAS"
HCAS_VERSION = 1


class CascadeError(ValueError):
    """Raised when a cascade file is malformed; never raised at detect time."""


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class HaarRect:
    """Weighted rectangle in base-window coordinates."""

    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass(frozen=True)
class WeakClassifier:
    """Decision stump over one 2-3 rectangle feature."""

    rects: tuple[HaarRect, ...]
    threshold: float
    left_value: float
    right_value: float


@dataclass(frozen=True)
class CascadeStage:
    threshold: float
    classifiers: tuple[WeakClassifier, ...]


@dataclass(frozen=True)
class Cascade:
    base_width: int
    base_height: int
    stages: tuple[CascadeStage, ...]

    def validate(self) -> "Cascade":
        if self.base_width < 1 or self.base_height < 1:
            raise CascadeError("base window must be at least 1x1")
        if not self.stages:
            raise CascadeError("cascade has no stages")
        for si, stage in enumerate(self.stages):
            if not np.isfinite(stage.threshold):
                raise CascadeError(f"stage {si}: non-finite threshold")
            for wi, weak in enumerate(stage.classifiers):
                vals = (weak.threshold, weak.left_value, weak.right_value)
                if not all(np.isfinite(v) for v in vals):
                    raise CascadeError(f"stage {si} weak {wi}: non-finite values")
                if not 2 <= len(weak.rects) <= 3:
                    raise CascadeError(f"stage {si} weak {wi}: needs 2-3 rects")
                for r in weak.rects:
                    if not np.isfinite(r.weight):
                        raise CascadeError(f"stage {si} weak {wi}: non-finite weight")
                    if (
                        r.x < 0
                        or r.y < 0
                        or r.w <= 0
                        or r.h <= 0
                        or r.x + r.w > self.base_width
                        or r.y + r.h > self.base_height
                    ):
                        raise CascadeError(
                            f"stage {si} weak {wi}: rect outside base window"
                        )
        return self


@dataclass(frozen=True)
class DetectionParams:
    scale_factor: float = 1.1
    min_neighbors: int = 3
    min_size: int = 48

    def validate(self) -> "DetectionParams":
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.min_neighbors < 0 or self.min_size < 1:
            raise ValueError("min_neighbors must be >= 0 and min_size >= 1")
        return self


def check_gray(img) -> np.ndarray:
    """Validate a grayscale frame: 2-D uint8, at least 1x1."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected non-empty 2-D grayscale image, got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
    return arr


def rgb_to_gray(rgb) -> np.ndarray:
    """Luma conversion (0.299/0.587/0.114), rounded to nearest integer."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {arr.shape}")
    weights = np.array([0.299, 0.587, 0.114])
    return np.rint(arr.astype(np.float64) @ weights).astype(np.uint8)


@dataclass(frozen=True)
class IntegralImage:
    """Prefix-sum planes of an image and of its squared pixels.

    Both planes are stored zero-padded: shape (height+1, width+1) with row 0
    and column 0 all zero, so ``sums[y+1, x+1]`` is the inclusive sum of all
    pixels at (i <= x, j <= y) and rectangle sums need no edge special cases.
    """

    width: int
    height: int
    sums: np.ndarray
    squared_sums: np.ndarray


def integral_image(img) -> IntegralImage:
    arr = check_gray(img)
    h, w = arr.shape
    sums = np.zeros((h + 1, w + 1), dtype=np.int64)
    sq = np.zeros((h + 1, w + 1), dtype=np.int64)
    a64 = arr.astype(np.int64)
    np.cumsum(np.cumsum(a64, axis=0), axis=1, out=sums[1:, 1:])
    np.cumsum(np.cumsum(a64 * a64, axis=0), axis=1, out=sq[1:, 1:])
    return IntegralImage(width=w, height=h, sums=sums, squared_sums=sq)


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> int:
    """Sum of pixels in the rectangle via the four-corner formula.

    Exact for integer pixels; a zero-area rectangle sums to 0.
    """
    if w < 0 or h < 0 or x < 0 or y < 0 or x + w > ii.width or y + h > ii.height:
        raise ValueError(f"rect ({x},{y},{w},{h}) outside {ii.width}x{ii.height}")
    s = ii.sums
    return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])


def _grid_sums(plane: np.ndarray, xs, ys, w: int, h: int) -> np.ndarray:
    """Window sums for every top-left position in xs x ys, vectorized."""
    return (
        plane[np.ix_(ys + h, xs + w)]
        - plane[np.ix_(ys, xs + w)]
        - plane[np.ix_(ys + h, xs)]
        + plane[np.ix_(ys, xs)]
    )


def scan_windows(img, cascade: Cascade, params: DetectionParams) -> list[FaceBox]:
    """Multi-scale scan; returns every raw window that passes all stages.

    Constant windows (std <= 1e-9) are treated as non-face, which also keeps
    the variance normalization away from a divide by zero.
    """
    arr = check_gray(img)
    params.validate()
    ii = integral_image(arr)
    img_h, img_w = arr.shape
    hits: list[FaceBox] = []
    scale = 1.0
    while True:
        win_w = int(round(cascade.base_width * scale))
        win_h = int(round(cascade.base_height * scale))
        if win_w > img_w or win_h > img_h:
            break
        if win_w >= params.min_size and win_h >= params.min_size:
            step = max(1, int(round(scale)))
            xs = np.arange(0, img_w - win_w + 1, step)
            ys = np.arange(0, img_h - win_h + 1, step)
            hits.extend(_scan_scale(ii, cascade, scale, win_w, win_h, xs, ys))
        scale *= params.scale_factor
    return hits


def _scan_scale(ii, cascade, scale, win_w, win_h, xs, ys) -> list[FaceBox]:
    n = float(win_w * win_h)
    win_sum = _grid_sums(ii.sums, xs, ys, win_w, win_h).astype(np.float64)
    win_sq = _grid_sums(ii.squared_sums, xs, ys, win_w, win_h).astype(np.float64)
    mean = win_sum / n
    var = win_sq / n - mean * mean
    std = np.sqrt(np.maximum(var, 0.0))
    alive = std > MIN_WINDOW_STD
    for stage in cascade.stages:
        if not alive.any():
            break
        stage_sum = np.zeros_like(std)
        for weak in stage.classifiers:
            feature = np.zeros_like(std)
            for r in weak.rects:
                # clamp: independent rounding may push a rect past the window
                rx = min(int(round(r.x * scale)), win_w - 1)
                ry = min(int(round(r.y * scale)), win_h - 1)
                rw = min(max(1, int(round(r.w * scale))), win_w - rx)
                rh = min(max(1, int(round(r.h * scale))), win_h - ry)
                feature += r.weight * _grid_sums(ii.sums, xs + rx, ys + ry, rw, rh)
            feature /= n
            stage_sum += np.where(
                feature < weak.threshold * std, weak.left_value, weak.right_value
            )
        alive &= stage_sum >= stage.threshold
    iy, ix = np.nonzero(alive)
    return [FaceBox(int(xs[j]), int(ys[i]), win_w, win_h) for i, j in zip(iy, ix)]


def group_boxes(
    boxes: list[FaceBox], min_neighbors: int, eps: float = GROUP_EPS
) -> list[FaceBox]:
    """Merge similar raw hits (transitive closure); drop thin groups.

    Two boxes are neighbors when every side differs by at most
    eps * mean(min width, min height); each surviving group is replaced by
    its member-wise mean box. The partition does not depend on input order.
    """
    if not boxes:
        return []
    n = len(boxes)
    parent = list(range(n))

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    coords = np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64)
    xs, ys, ws, hs = coords.T
    for i in range(n - 1):
        delta = eps * 0.5 * (np.minimum(ws[i], ws[i + 1 :]) + np.minimum(hs[i], hs[i + 1 :]))
        close = (
            (np.abs(xs[i] - xs[i + 1 :]) <= delta)
            & (np.abs(ys[i] - ys[i + 1 :]) <= delta)
            & (np.abs(ws[i] - ws[i + 1 :]) <= delta)
            & (np.abs(hs[i] - hs[i + 1 :]) <= delta)
        )
        for j in np.nonzero(close)[0]:
            ri, rj = find(i), find(int(j) + i + 1)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[FaceBox]] = {}
    for i, box in enumerate(boxes):
        groups.setdefault(find(i), []).append(box)
    merged = []
    for members in groups.values():
        if len(members) < max(1, min_neighbors):
            continue
        merged.append(
            FaceBox(
                x=int(round(np.mean([m.x for m in members]))),
                y=int(round(np.mean([m.y for m in members]))),
                w=int(round(np.mean([m.w for m in members]))),
                h=int(round(np.mean([m.h for m in members]))),
            )
        )
    merged.sort(key=lambda b: (b.y, b.x, b.w, b.h))
    return merged


def detect_faces(
    img, cascade: Cascade, params: DetectionParams | None = None
) -> list[FaceBox]:
    """Grouped face boxes, deterministic for fixed inputs."""
    params = params or DetectionParams()
    return group_boxes(scan_windows(img, cascade, params), params.min_neighbors)


def largest_face(faces: list[FaceBox]) -> FaceBox | None:
    """Box with maximal area; ties break by smallest (y, then x)."""
    if not faces:
        return None
    return min(faces, key=lambda b: (-b.area, b.y, b.x))


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling at half-pixel centers; returns float64."""
    src = np.asarray(img, dtype=np.float64)
    in_h, in_w = src.shape
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def preprocess_face(img, box: FaceBox, size: int = 48) -> np.ndarray:
    """Crop, resize to size x size, and map pixels into [-1, 1].

    Returns a (1, size, size) float32 tensor ready for the classifier:
    v -> (v/255 - 0.5) * 2.
    """
    arr = check_gray(img)
    if box.w <= 0 or box.h <= 0:
        raise ValueError(f"degenerate face box {box}")
    if box.x < 0 or box.y < 0 or box.x + box.w > arr.shape[1] or box.y + box.h > arr.shape[0]:
        raise ValueError(f"face box {box} outside image {arr.shape}")
    crop = arr[box.y : box.y + box.h, box.x : box.x + box.w]
    resized = bilinear_resize(crop, size, size)
    scaled = (resized / 255.0 - 0.5) * 2.0
    return scaled.astype(np.float32)[None, :, :]


# --- native binary cascade format -------------------------------------------
#
# magic "HCAS" | u32 version=1 | u32 base_w | u32 base_h | u32 n_stages
# per stage:  f32 stage_threshold | u32 n_weak
# per weak:   f32 node_threshold | f32 left_value | f32 right_value | u32 n_rects
# per rect:   i32 x | i32 y | i32 w | i32 h | f32 weight
# All fields little-endian.


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CascadeError("unexpected end of stream")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals


def load_cascade(path: str | Path) -> Cascade:
    return parse_cascade(Path(path).read_bytes())


def parse_cascade(data: bytes) -> Cascade:
    r = _Reader(data)
    (magic,) = r.take("<4s")
    if magic != HCAS_MAGIC:
        raise CascadeError(f"bad magic {magic!r}, expected {HCAS_MAGIC!r}")
    version, base_w, base_h, n_stages = r.take("<IIII")
    if version != HCAS_VERSION:
        raise CascadeError(f"unsupported cascade version {version}")
    stages = []
    for _ in range(n_stages):
        stage_threshold, n_weak = r.take("<fI")
        weaks = []
        for _ in range(n_weak):
            thr, left, right, n_rects = r.take("<fffI")
            rects = []
            for _ in range(n_rects):
                x, y, w, h, weight = r.take("<iiiif")
                rects.append(HaarRect(x, y, w, h, weight))
            weaks.append(WeakClassifier(tuple(rects), thr, left, right))
        stages.append(CascadeStage(stage_threshold, tuple(weaks)))
    if r.pos != len(data):
        raise CascadeError(f"{len(data) - r.pos} trailing bytes after cascade")
    return Cascade(base_w, base_h, tuple(stages)).validate()


def save_cascade(cascade: Cascade, path: str | Path) -> None:
    cascade.validate()
    out = bytearray()
    out += struct.pack(
        "<4sIIII",
        HCAS_MAGIC,
        HCAS_VERSION,
        cascade.base_width,
        cascade.base_height,
        len(cascade.stages),
    )
    for stage in cascade.stages:
        out += struct.pack("<fI", stage.threshold, len(stage.classifiers))
        for weak in stage.classifiers:
            out += struct.pack(
                "<fffI", weak.threshold, weak.left_value, weak.right_value, len(weak.rects)
            )
            for r in weak.rects:
                out += struct.pack("<iiiif", r.x, r.y, r.w, r.h, r.weight)
    Path(path).write_bytes(bytes(out))


# --- XML interchange importer (stump-only subset) ----------------------------


def import_cascade_xml(path: str | Path) -> Cascade:
    """Import the stump-only subset of the common XML cascade format.

    Supported layout: <cascade> with <width>/<height>, <stages> holding
    stump weak classifiers (4-token internalNodes, 2 leafValues) and a
    <features> table of 2-3 weighted upright rects. Tilted features and
    multi-node trees are rejected.
    """
    try:
        root = ET.parse(str(path)).getroot()
    except ET.ParseError as exc:
        raise CascadeError(f"cannot parse cascade XML {path}: {exc}") from exc
    casc = root.find("cascade")
    if casc is None:
        raise CascadeError("no <cascade> element found")
    if (casc.findtext("featureType") or "HAAR").strip() != "HAAR":
        raise CascadeError("only HAAR feature cascades are supported")
    base_w = int(casc.findtext("width", "0"))
    base_h = int(casc.findtext("height", "0"))

    features = []
    features_el = casc.find("features")
    if features_el is None:
        raise CascadeError("missing <features> table")
    for feat in features_el.findall("_"):
        if int((feat.findtext("tilted") or "0").strip() or "0"):
            raise CascadeError("tilted features are not supported")
        rects = []
        rects_el = feat.find("rects")
        if rects_el is None:
            raise CascadeError("feature without <rects>")
        for rect_el in rects_el.findall("_"):
            vals = (rect_el.text or "").split()
            if len(vals) != 5:
                raise CascadeError(f"malformed rect entry {rect_el.text!r}")
            x, y, w, h = (int(float(v)) for v in vals[:4])
            rects.append(HaarRect(x, y, w, h, float(vals[4])))
        features.append(tuple(rects))

    stages = []
    stages_el = casc.find("stages")
    if stages_el is None:
        raise CascadeError("missing <stages> table")
    for stage_el in stages_el.findall("_"):
        stage_threshold = float(stage_el.findtext("stageThreshold", "nan"))
        weaks = []
        weak_root = stage_el.find("weakClassifiers")
        if weak_root is None:
            raise CascadeError("stage without <weakClassifiers>")
        for weak_el in weak_root.findall("_"):
            nodes = (weak_el.findtext("internalNodes") or "").split()
            leaves = (weak_el.findtext("leafValues") or "").split()
            if len(nodes) != 4 or len(leaves) != 2:
                raise CascadeError("only stump weak classifiers are supported")
            feat_idx = int(nodes[2])
            if not 0 <= feat_idx < len(features):
                raise CascadeError(f"feature index {feat_idx} out of range")
            weaks.append(
                WeakClassifier(
                    rects=features[feat_idx],
                    threshold=float(nodes[3]),
                    left_value=float(leaves[0]),
                    right_value=float(leaves[1]),
                )
            )
        stages.append(CascadeStage(stage_threshold, tuple(weaks)))
    return Cascade(base_w, base_h, tuple(stages)).validate()


# --- PGM frame files ----------------------------------------------------------


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM file into a 2-D uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).copy()


def write_pgm(path: str | Path, img) -> None:
    arr = check_gray(img)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())
