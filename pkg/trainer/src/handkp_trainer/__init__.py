"""Reference trainer for the hand-keypoint inference engine.

Mirrors the engine's architecture in torch, trains at toy scale on
synthetic data, exports weight archives in the engine's byte format, and
verifies forward-pass parity through the engine's command line.
"""

from .model import MirrorModel
from .train import TrainConfig, train_toy

__all__ = ["MirrorModel", "TrainConfig", "train_toy"]
