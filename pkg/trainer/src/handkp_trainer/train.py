"""Toy-scale training loop for the mirror model.

Per-pixel squared error against 22 Gaussian target planes (21 keypoints
plus a complement background plane), Adadelta optimizer, early stop once
held-out grid-space PCK reaches the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .model import NUM_KEYPOINTS, MirrorModel


@dataclass
class TrainConfig:
    input_size: int = 112
    sigma: float = 1.75          # grid pixels
    batch_size: int = 32
    max_epochs: int = 30
    lr: float = 1.0
    seed: int = 0
    pck_threshold: float = 5.0   # grid pixels, for the early-stop metric
    target_pck: float = 0.95


def make_targets(kp: np.ndarray, input_size: int, sigma: float) -> torch.Tensor:
    """(n, 21, 2) input-pixel keypoints -> (n, 22, g, g) target planes."""
    g = input_size // 8
    ratio = g / input_size
    ys, xs = np.mgrid[0:g, 0:g].astype(np.float64)
    n = kp.shape[0]
    planes = np.zeros((n, NUM_KEYPOINTS + 1, g, g), dtype=np.float32)
    for i in range(n):
        for k in range(NUM_KEYPOINTS):
            kx, ky = kp[i, k] * ratio
            d2 = (xs - kx) ** 2 + (ys - ky) ** 2
            planes[i, k] = np.exp(-d2 / (2.0 * sigma * sigma))
        planes[i, NUM_KEYPOINTS] = 1.0 - planes[i, :NUM_KEYPOINTS].max(axis=0)
    return torch.from_numpy(planes)


def decode_argmax(heatmaps: torch.Tensor) -> np.ndarray:
    """(n, 22, g, g) -> (n, 21, 2) grid-cell (x, y) of each keypoint plane."""
    n, _, g, _ = heatmaps.shape
    flat = heatmaps[:, :NUM_KEYPOINTS].reshape(n, NUM_KEYPOINTS, -1)
    idx = flat.argmax(dim=2).cpu().numpy()
    return np.stack([idx % g, idx // g], axis=2).astype(np.float64)


def grid_pck(pred: np.ndarray, gt_grid: np.ndarray, threshold: float) -> float:
    err = np.linalg.norm(pred - gt_grid, axis=2)
    return float((err <= threshold).mean())


def evaluate_pck(model: MirrorModel, x: torch.Tensor, kp: np.ndarray,
                 config: TrainConfig) -> float:
    model.eval()
    preds = []
    with torch.no_grad():
        for i in range(0, len(x), config.batch_size):
            preds.append(decode_argmax(model(x[i:i + config.batch_size])))
    gt_grid = kp * (model.output_grid / config.input_size)
    return grid_pck(np.concatenate(preds), gt_grid, config.pck_threshold)


def train_toy(model: MirrorModel, train_x: np.ndarray, train_kp: np.ndarray,
              val_x: np.ndarray, val_kp: np.ndarray,
              config: TrainConfig, log=print) -> dict:
    """Returns a history dict with per-epoch loss and held-out PCK."""
    torch.manual_seed(config.seed)
    xt = torch.from_numpy(train_x)
    yt = make_targets(train_kp, config.input_size, config.sigma)
    xv = torch.from_numpy(val_x)
    optimizer = torch.optim.Adadelta(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history = {"loss": [], "val_pck": []}
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(len(xt))
        losses = []
        for i in range(0, len(order), config.batch_size):
            batch = order[i:i + config.batch_size]
            optimizer.zero_grad()
            loss = torch.mean((model(xt[batch]) - yt[batch]) ** 2)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        pck = evaluate_pck(model, xv, val_kp, config)
        history["loss"].append(float(np.mean(losses)))
        history["val_pck"].append(pck)
        log(f"epoch {epoch:2d}  loss {history['loss'][-1]:.5f}  "
            f"val PCK@{config.pck_threshold:g} {pck:.3f}")
        if pck >= config.target_pck:
            break
    return history
