"""Synthetic hand-pose dataset for toy-scale training.

Each image shows a stylized five-finger skeleton on a noise background.
Every keypoint is drawn as a disc in its own fixed color, so the
image-to-heatmap mapping is learnable in minutes on a CPU. Annotations are
written in the engine's line-delimited JSON schema; the bounding box is the
full frame so a fixed-window crop at the same size is the identity
transform (crop coordinates == source coordinates).
"""

from __future__ import annotations

import colorsys
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

NUM_KEYPOINTS = 21
DEFAULT_SIZE = 112
MARGIN = 10

# wrist + per-finger mcp/pip/dip/tip, one saturated color each
PALETTE = [
    tuple(int(255 * c) for c in colorsys.hsv_to_rgb(k / NUM_KEYPOINTS, 1.0, 1.0))
    for k in range(NUM_KEYPOINTS)
]


def make_pose(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random (21, 2) keypoint layout fitted inside the frame margins."""
    pts = np.zeros((NUM_KEYPOINTS, 2))
    base = rng.uniform(0, 2 * math.pi)
    for f in range(5):
        ang = base + (f - 2) * rng.uniform(0.25, 0.45)
        pos = np.zeros(2)
        for j in range(4):
            ang += rng.uniform(-0.15, 0.15)
            step = rng.uniform(0.18, 0.30) * (1.0 if j == 0 else 0.6)
            pos = pos + step * np.array([math.cos(ang), math.sin(ang)])
            pts[1 + 4 * f + j] = pos
    # scale the canonical pose into a random sub-window of the frame
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-6)
    target = rng.uniform(0.55, 0.85) * (size - 2 * MARGIN)
    pts = (pts - lo) * (target / span)
    extent = pts.max(axis=0)
    shift = np.array([
        rng.uniform(MARGIN, size - MARGIN - extent[0]),
        rng.uniform(MARGIN, size - MARGIN - extent[1]),
    ])
    return pts + shift


def render(rng: np.random.Generator, kp: np.ndarray, size: int) -> Image.Image:
    noise = rng.integers(0, 90, (size, size, 3), dtype=np.uint8)
    im = Image.fromarray(noise, "RGB")
    draw = ImageDraw.Draw(im)
    for f in range(5):
        chain = [0] + [1 + 4 * f + j for j in range(4)]
        for a, b in zip(chain, chain[1:]):
            draw.line([tuple(kp[a]), tuple(kp[b])], fill=(150, 150, 150), width=3)
    for k in range(NUM_KEYPOINTS):
        x, y = kp[k]
        r = 3.5
        draw.ellipse([x - r, y - r, x + r, y + r], fill=PALETTE[k])
    return im


def write_dataset(out_dir, count: int, seed: int,
                  size: int = DEFAULT_SIZE) -> Path:
    """Write PNGs plus an annotation file; returns the annotation path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ann_path = out_dir / "ann.jsonl"
    with open(ann_path, "w", encoding="utf-8") as fh:
        for i in range(count):
            kp = make_pose(rng, size)
            name = f"img_{i:05d}.png"
            render(rng, kp, size).save(out_dir / name)
            record = {
                "image": name,
                "hand": "right",
                "kp": [[float(x), float(y), 1] for x, y in kp],
                "box": [0, 0, size, size],
            }
            fh.write(json.dumps(record) + "\n")
    return ann_path


def load_arrays(ann_path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Images as (n, 3, S, S) float32 in [-1, 1], keypoints (n, 21, 2)."""
    ann_path = Path(ann_path)
    images, kps, names = [], [], []
    with open(ann_path, "r", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            with Image.open(ann_path.parent / record["image"]) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float32)
            images.append(arr / 127.5 - 1.0)
            kps.append(np.asarray(record["kp"], dtype=np.float64)[:, :2])
            names.append(record["image"])
    x = np.transpose(np.stack(images), (0, 3, 1, 2)).astype(np.float32)
    return x, np.stack(kps), names
