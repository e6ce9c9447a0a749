"""Heatmap synthesis and decoding.

Targets are truncated 2D Gaussians sampled at integer pixel centers; the
background plane is one minus the per-pixel maximum over the 21 keypoint
planes. Decoding softmaxes each keypoint plane and takes the argmax; planes
whose peak probability falls below a confidence threshold fall back to the
candidate peak nearest (in mean distance) to the confidently decoded points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .netgraph import NUM_KEYPOINTS, OUTPUT_CHANNELS
from .tensor import spatial_softmax

# Keypoint index layout: 0 wrist; then base-to-tip chains of 4 for thumb,
# index, middle, ring, little.
KEYPOINT_NAMES = ["wrist"] + [
    f"{finger}_{part}"
    for finger in ("thumb", "index", "middle", "ring", "little")
    for part in ("mcp", "pip", "dip", "tip")
]

SOURCE_ARGMAX = "argmax"
SOURCE_FALLBACK = "fallback"


@dataclass
class DecodeParams:
    """Decoding knobs: confidence threshold, fallback width, target sigma.

    confidence_threshold defaults to 10x the uniform probability of the
    grid being decoded (scale-free in grid size).
    """

    confidence_threshold: float | None = None
    max_fallback_peaks: int = 5
    sigma: float = 1.75

    def __post_init__(self):
        if self.confidence_threshold is not None and not (
                0.0 < self.confidence_threshold < 1.0):
            raise InputError("confidence_threshold must lie in (0, 1)")
        if self.max_fallback_peaks < 1:
            raise InputError("max_fallback_peaks must be >= 1")
        if not self.sigma > 0:
            raise InputError("sigma must be > 0")

    def threshold_for(self, grid_hw: tuple) -> float:
        if self.confidence_threshold is not None:
            return self.confidence_threshold
        return 10.0 / (grid_hw[0] * grid_hw[1])


@dataclass
class Keypoint:
    index: int
    x: float
    y: float
    confidence: float
    source: str = SOURCE_ARGMAX

    @property
    def name(self) -> str:
        return KEYPOINT_NAMES[self.index]


@dataclass
class KeypointSet:
    points: list[Keypoint]
    frame: str = "grid"  # coordinate frame the positions live in

    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)


def make_keypoint_heatmap(keypoint, grid_hw, sigma: float) -> np.ndarray:
    """Truncated Gaussian score plane centered at (kx, ky), float64 (h, w)."""
    kx, ky = float(keypoint[0]), float(keypoint[1])
    h, w = grid_hw
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    d2 = (xs - kx) ** 2 + (ys - ky) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def make_background_heatmap(keypoint_planes: np.ndarray) -> np.ndarray:
    """Inverse mask of the per-pixel maximum: 1 - max over planes.

    keypoint_planes is (h, w, K); an all-zero stack yields all ones.
    """
    planes = np.asarray(keypoint_planes, dtype=np.float32)
    if planes.ndim != 3:
        raise InputError(f"expected (h, w, K) planes, got shape {planes.shape}")
    return 1.0 - planes.max(axis=2)


def find_peaks(prob: np.ndarray, max_peaks: int) -> list[tuple[int, int, float]]:
    """Local maxima of a probability plane under the 8-neighborhood.

    A cell qualifies when it is >= every neighbor. Returns up to max_peaks
    entries (x, y, prob), sorted by probability descending, equal values
    ordered by row-major index.
    """
    prob = np.asarray(prob, dtype=np.float64)
    h, w = prob.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = prob
    is_peak = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_peak &= prob >= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    ys, xs = np.nonzero(is_peak)
    order = sorted(range(len(ys)), key=lambda i: (-prob[ys[i], xs[i]], ys[i] * w + xs[i]))
    return [(int(xs[i]), int(ys[i]), float(prob[ys[i], xs[i]])) for i in order[:max_peaks]]


def _argmax_cell(prob: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(prob))  # ties resolve to the lowest row-major index
    return flat % prob.shape[1], flat // prob.shape[1]


def decode_keypoints(raw: np.ndarray, params: DecodeParams | None = None) -> KeypointSet:
    """Decode raw 22-channel heatmaps into 21 grid-space keypoints.

    Pass 1 softmaxes each keypoint plane and keeps argmax positions whose
    peak probability clears the threshold. Pass 2 resolves the remaining
    planes by picking, among their strongest peaks, the one with the lowest
    mean distance to the pass-1 points; with no confident points at all it
    degenerates to the per-plane global argmax. The background plane does
    not participate.
    """
    params = params or DecodeParams()
    raw = np.asarray(raw, dtype=np.float32)
    if raw.ndim == 4 and raw.shape[0] == 1:
        raw = raw[0]
    if raw.ndim != 3 or raw.shape[2] != OUTPUT_CHANNELS:
        raise InputError(f"expected (h, w, {OUTPUT_CHANNELS}) heatmaps, got {raw.shape}")
    h, w = raw.shape[:2]
    tau = params.threshold_for((h, w))

    probs = [spatial_softmax(raw[:, :, k]) for k in range(NUM_KEYPOINTS)]
    results: list[Keypoint | None] = [None] * NUM_KEYPOINTS
    anchors = []
    for k, prob in enumerate(probs):
        peak = float(prob.max())
        if peak >= tau:
            x, y = _argmax_cell(prob)
            results[k] = Keypoint(k, float(x), float(y), peak, SOURCE_ARGMAX)
            anchors.append((x, y))
    anchor_arr = np.array(anchors, dtype=np.float64)
    for k, prob in enumerate(probs):
        if results[k] is not None:
            continue
        if len(anchors) == 0:
            x, y = _argmax_cell(prob)
            results[k] = Keypoint(k, float(x), float(y),
                                  float(prob[y, x]), SOURCE_FALLBACK)
            continue
        peaks = find_peaks(prob, params.max_fallback_peaks)
        best = min(peaks, key=lambda p: np.linalg.norm(
            anchor_arr - np.array([p[0], p[1]], dtype=np.float64), axis=1).mean())
        results[k] = Keypoint(k, float(best[0]), float(best[1]),
                              best[2], SOURCE_FALLBACK)
    return KeypointSet(results, frame="grid")
