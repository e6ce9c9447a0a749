"""Annotation ingestion, hand cropping, mirroring, and augmentation.

Annotations are line-delimited JSON, one object per image:

    {"image": str, "hand": "left"|"right", "kp": [[x, y, v] x 21],
     "head": float?, "box": [x, y, w, h]?, "ext_box": [x, y, w, h]?}

Crops are square windows around the hand, resized to the network input
size with bilinear interpolation; the source->crop affine transform is
recorded so predictions can be mapped back. Left hands are mirrored so a
single right-hand model serves both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, FormatError
from .heatmap import make_background_heatmap, make_keypoint_heatmap
from .netgraph import NUM_KEYPOINTS, OUTPUT_CHANNELS

HEAD_SCALED = "head_scaled"        # square of side 1.2 * head size
HAND_SCALED = "hand_scaled"        # square of side 2 * tight hand box
EXTERNAL_ENLARGED = "external_enlarged"  # detector box squared, grown 25%
FIXED_WINDOW = "fixed_window"      # fixed-size window, no resize

CROP_FACTORS = {HEAD_SCALED: 1.2, HAND_SCALED: 2.0, EXTERNAL_ENLARGED: 1.25}

ROTATION_RANGE_DEG = 30.0
TRANSLATION_RANGE_PX = 30.0
SCALE_RANGE = (0.8, 1.5)


@dataclass
class Annotation:
    image_ref: str
    keypoints: np.ndarray      # (21, 2) source-image pixels
    visible: np.ndarray        # (21,) bool
    handedness: str            # "left" | "right"
    head_size: float | None = None
    hand_box: tuple | None = None      # (x, y, w, h), tight
    external_box: tuple | None = None  # (x, y, w, h), detector-provided

    def hand_center(self) -> np.ndarray:
        if self.hand_box is not None:
            x, y, w, h = self.hand_box
            return np.array([x + w / 2.0, y + h / 2.0])
        kp = self.keypoints[self.visible] if self.visible.any() else self.keypoints
        return kp.mean(axis=0)


@dataclass
class CropStrategy:
    kind: str = FIXED_WINDOW
    target_size: int = 224

    def __post_init__(self):
        if self.kind not in (HEAD_SCALED, HAND_SCALED, EXTERNAL_ENLARGED, FIXED_WINDOW):
            raise ConfigurationError(f"unknown crop strategy {self.kind!r}")
        if self.target_size < 1:
            raise ConfigurationError("target_size must be >= 1")


@dataclass
class Sample:
    """A cropped, resized, normalized image plus everything to undo it."""

    image: np.ndarray          # (t, t, 3) float32 in [-1, 1]
    keypoints: np.ndarray      # (21, 2) crop-frame pixels
    visible: np.ndarray
    transform: np.ndarray      # 2x3 affine, source -> crop pixels
    handedness: str
    image_ref: str = ""
    mirrored: bool = False

    def to_source(self, points_xy: np.ndarray) -> np.ndarray:
        """Map crop-frame points back to source-image coordinates."""
        return apply_affine(invert_affine(self.transform), points_xy)


# --- small affine toolkit (2x3 row-major matrices, mapping column (x, y, 1)) ---

def identity_affine() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def compose_affine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """The transform that applies b first, then a."""
    a3 = np.vstack([a, [0.0, 0.0, 1.0]])
    b3 = np.vstack([b, [0.0, 0.0, 1.0]])
    return (a3 @ b3)[:2]


def invert_affine(m: np.ndarray) -> np.ndarray:
    return np.linalg.inv(np.vstack([m, [0.0, 0.0, 1.0]]))[:2]


def apply_affine(m: np.ndarray, points_xy) -> np.ndarray:
    pts = np.asarray(points_xy, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def warp_image(image: np.ndarray, m: np.ndarray, out_hw: tuple,
               fill: float = 0.0) -> np.ndarray:
    """Bilinear warp: output pixel (x, y) samples the input at m^-1 (x, y).

    Samples falling outside the input are filled with `fill`.
    """
    img = np.asarray(image, dtype=np.float32)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]
    oh, ow = out_hw
    inv = invert_affine(m)
    xs, ys = np.meshgrid(np.arange(ow, dtype=np.float64),
                         np.arange(oh, dtype=np.float64))
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0).astype(np.float32)
    fy = (sy - y0).astype(np.float32)

    def tap(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        vals = vals.astype(np.float32)
        vals[~inside] = fill
        return vals

    wx, wy = fx[..., None], fy[..., None]
    out = (tap(y0, x0) * (1 - wx) * (1 - wy)
           + tap(y0, x0 + 1) * wx * (1 - wy)
           + tap(y0 + 1, x0) * (1 - wx) * wy
           + tap(y0 + 1, x0 + 1) * wx * wy)
    out = out.astype(np.float32)
    return out[:, :, 0] if squeeze else out


# --- annotation loading ---

def parse_annotation(record: dict, where: str = "") -> Annotation:
    try:
        kp = record["kp"]
        if len(kp) != NUM_KEYPOINTS:
            raise FormatError(f"{where}expected {NUM_KEYPOINTS} keypoints, got {len(kp)}")
        arr = np.asarray(kp, dtype=np.float64)
        if arr.shape != (NUM_KEYPOINTS, 3) or not np.isfinite(arr).all():
            raise FormatError(f"{where}keypoints must be 21 finite [x, y, v] triples")
        hand = record["hand"]
        if hand not in ("left", "right"):
            raise FormatError(f"{where}hand must be 'left' or 'right', got {hand!r}")
        return Annotation(
            image_ref=record["image"],
            keypoints=arr[:, :2],
            visible=arr[:, 2] > 0,
            handedness=hand,
            head_size=record.get("head"),
            hand_box=tuple(record["box"]) if record.get("box") else None,
            external_box=tuple(record["ext_box"]) if record.get("ext_box") else None,
        )
    except KeyError as e:
        raise FormatError(f"{where}missing required field {e.args[0]!r}") from None


def load_annotations(path) -> list[Annotation]:
    """Parse a line-delimited JSON annotation file. Unknown fields are ignored."""
    annotations = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}: "
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{where}malformed JSON ({e.msg})") from None
            annotations.append(parse_annotation(record, where))
    return annotations


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB image as (h, w, 3) uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


# --- cropping / mirroring / augmentation ---

def _crop_geometry(ann: Annotation, strategy: CropStrategy) -> tuple[np.ndarray, float]:
    """Square window (center, side) in source pixels for the strategy."""
    kind = strategy.kind
    if kind == HEAD_SCALED:
        if ann.head_size is None:
            raise ConfigurationError("head_scaled crop requires a head size")
        return ann.hand_center(), CROP_FACTORS[kind] * ann.head_size
    if kind == HAND_SCALED:
        if ann.hand_box is None:
            raise ConfigurationError("hand_scaled crop requires a hand box")
        x, y, w, h = ann.hand_box
        side = CROP_FACTORS[kind] * max(w, h)
        return np.array([x + w / 2.0, y + h / 2.0]), side
    if kind == EXTERNAL_ENLARGED:
        if ann.external_box is None:
            raise ConfigurationError("external_enlarged crop requires a detector box")
        x, y, w, h = ann.external_box
        # Rectangles are squared to the longer side before the enlargement.
        side = CROP_FACTORS[kind] * max(w, h)
        return np.array([x + w / 2.0, y + h / 2.0]), side
    return ann.hand_center(), float(strategy.target_size)


def crop_hand(image: np.ndarray, ann: Annotation, strategy: CropStrategy) -> Sample:
    """Crop the hand window, resize to target_size, record the transform."""
    center, side = _crop_geometry(ann, strategy)
    t = strategy.target_size
    scale = t / side
    transform = np.array([
        [scale, 0.0, (side / 2.0 - center[0]) * scale],
        [0.0, scale, (side / 2.0 - center[1]) * scale],
    ])
    cropped = warp_image(np.asarray(image, dtype=np.float32), transform, (t, t), fill=0.0)
    return Sample(
        image=(cropped / np.float32(127.5) - np.float32(1.0)),
        keypoints=apply_affine(transform, ann.keypoints),
        visible=ann.visible.copy(),
        transform=transform,
        handedness=ann.handedness,
        image_ref=ann.image_ref,
    )


def mirror_left(sample: Sample) -> Sample:
    """Horizontal flip: x' = (width - 1) - x on image and keypoints alike."""
    t = sample.image.shape[1]
    flip = np.array([[-1.0, 0.0, t - 1.0], [0.0, 1.0, 0.0]])
    kp = sample.keypoints.copy()
    kp[:, 0] = (t - 1) - kp[:, 0]
    return replace(
        sample,
        image=sample.image[:, ::-1].copy(),
        keypoints=kp,
        transform=compose_affine(flip, sample.transform),
        mirrored=not sample.mirrored,
    )


def draw_augmentation(seed, rng=None) -> tuple[float, tuple, float]:
    """Sample (rotation deg, (tx, ty) px, scale) from the training ranges."""
    rng = rng or np.random.default_rng(seed)
    theta = rng.uniform(-ROTATION_RANGE_DEG, ROTATION_RANGE_DEG)
    tx = rng.uniform(-TRANSLATION_RANGE_PX, TRANSLATION_RANGE_PX)
    ty = rng.uniform(-TRANSLATION_RANGE_PX, TRANSLATION_RANGE_PX)
    scale = rng.uniform(*SCALE_RANGE)
    return theta, (tx, ty), scale


def augmentation_affine(theta_deg: float, translation: tuple, scale: float,
                        size: int) -> np.ndarray:
    """Scale, then rotate, then translate, all about the crop center."""
    c = (size - 1) / 2.0
    rad = np.deg2rad(theta_deg)
    cos, sin = np.cos(rad), np.sin(rad)
    recenter = np.array([[1.0, 0.0, -c], [0.0, 1.0, -c]])
    scaling = np.array([[scale, 0.0, 0.0], [0.0, scale, 0.0]])
    rotation = np.array([[cos, -sin, 0.0], [sin, cos, 0.0]])
    back = np.array([[1.0, 0.0, c + translation[0]], [0.0, 1.0, c + translation[1]]])
    return compose_affine(back, compose_affine(rotation, compose_affine(scaling, recenter)))


def augment(sample: Sample, seed) -> Sample:
    """Apply one random rotation/translation/scale, reproducibly per seed."""
    theta, translation, scale = draw_augmentation(seed)
    t = sample.image.shape[1]
    aff = augmentation_affine(theta, translation, scale, t)
    return replace(
        sample,
        image=warp_image(sample.image, aff, (t, t), fill=0.0),
        keypoints=apply_affine(aff, sample.keypoints),
        transform=compose_affine(aff, sample.transform),
    )


def make_training_pair(sample: Sample, sigma: float,
                       output_grid: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Image tensor plus 22-plane target heatmaps at output-grid scale.

    Invisible keypoints yield all-zero planes (the limiting Gaussian).
    """
    gh, gw = output_grid
    t = sample.image.shape[1]
    ratio = gh / t
    planes = np.zeros((gh, gw, NUM_KEYPOINTS), dtype=np.float32)
    for k in range(NUM_KEYPOINTS):
        if sample.visible[k]:
            kx, ky = sample.keypoints[k] * ratio
            planes[:, :, k] = make_keypoint_heatmap((kx, ky), (gh, gw), sigma)
    target = np.concatenate(
        [planes, make_background_heatmap(planes)[:, :, None]], axis=2)
    assert target.shape == (gh, gw, OUTPUT_CHANNELS)
    return sample.image[None], target
