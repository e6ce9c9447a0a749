"""Scikit-learn style facade over the network, codec, and weight loader."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import InputError
from .heatmap import DecodeParams, decode_keypoints
from .netgraph import NetworkConfig, build_network, forward
from .weights_io import bind_weights, load_archive


def check_images(X, input_size: int) -> np.ndarray:
    """Coerce to (n, S, S, 3) float32 in [-1, 1]; accepts 8-bit pixels."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1:] != (input_size, input_size, 3):
        raise InputError(
            f"expected images shaped (n, {input_size}, {input_size}, 3), got {X.shape}")
    if X.max() > 1.0:  # pixel-valued input
        X = X / np.float32(127.5) - np.float32(1.0)
    return X


class HandKeypointDetector(BaseEstimator):
    """Predicts 21 hand keypoints per image from a bound weight archive.

    fit() builds the network and binds the archive at `model_path`;
    predict() returns keypoint coordinates in input-image pixels, shaped
    (n, 21, 2). predict_heatmaps() exposes the raw 22-channel maps.
    """

    def __init__(self, model_path=None, input_size=224, tau=None,
                 sigma=1.75, max_fallback_peaks=5):
        self.model_path = model_path
        self.input_size = input_size
        self.tau = tau
        self.sigma = sigma
        self.max_fallback_peaks = max_fallback_peaks

    def fit(self, X=None, y=None):
        self.network_ = build_network(NetworkConfig(input_size=self.input_size))
        if self.model_path is not None:
            bind_weights(self.network_, load_archive(self.model_path))
        self.decode_params_ = DecodeParams(
            confidence_threshold=self.tau,
            max_fallback_peaks=self.max_fallback_peaks,
            sigma=self.sigma,
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit() before predicting")

    def predict_heatmaps(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_images(X, self.input_size)
        return np.stack([forward(self.network_, img[None])[0] for img in X])

    def decode(self, raw_heatmaps):
        return decode_keypoints(raw_heatmaps, self.decode_params_)

    def predict(self, X) -> np.ndarray:
        """Keypoints in input-image pixels, (n, 21, 2)."""
        self._check_fitted()
        raw = self.predict_heatmaps(X)
        scale = self.input_size / self.network_.output_grid[0]
        return np.stack([self.decode(r).xy() * scale for r in raw])
