"""Pose evaluation: end-point error, PCK/PCKh curves, AUC, root alignment."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError

# Default threshold grids, in pixels (or fractions of head size for PCKh).
THRESHOLDS_30PX = np.arange(0.0, 30.0001, 0.5)
THRESHOLDS_15PX = np.arange(0.0, 15.0001, 0.5)
THRESHOLDS_HEAD = np.arange(0.0, 1.0001, 0.05)


@dataclass
class ErrorSample:
    """One keypoint's localization error, with its PCK normalizer."""

    index: int
    error: float
    normalizer: float = 1.0
    valid: bool = True

    def __post_init__(self):
        if self.error < 0:
            raise InputError("error must be >= 0")
        if not self.normalizer > 0:
            raise InputError("normalizer must be > 0")


@dataclass
class PckCurve:
    thresholds: np.ndarray
    values: np.ndarray

    def to_csv(self) -> str:
        lines = ["threshold,value"]
        lines += [f"{t:g},{v:.6f}" for t, v in zip(self.thresholds, self.values)]
        return "\n".join(lines) + "\n"


def epe(pred_xy, gt_xy, valid=None) -> dict:
    """Euclidean per-keypoint errors plus mean and median over valid entries."""
    pred = np.asarray(pred_xy, dtype=np.float64)
    gt = np.asarray(gt_xy, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise InputError(f"keypoint arrays must both be (n, 2), got {pred.shape} vs {gt.shape}")
    diff = pred - gt
    errors = np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1])
    mask = np.ones(len(errors), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    kept = errors[mask]
    return {
        "errors": errors,
        "valid": mask,
        "mean": float(kept.mean()) if kept.size else float("nan"),
        "median": float(np.median(kept)) if kept.size else float("nan"),
    }


def pck_curve(samples: list[ErrorSample], thresholds) -> PckCurve:
    """Fraction of valid samples with error/normalizer <= t, per threshold t."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size and np.any(np.diff(thresholds) <= 0):
        raise InputError("thresholds must be strictly increasing")
    normalized = np.array([s.error / s.normalizer for s in samples if s.valid])
    if normalized.size == 0:
        values = np.zeros_like(thresholds)
    else:
        # Inclusive comparison at the threshold.
        values = (normalized[None, :] <= thresholds[:, None]).mean(axis=1)
    return PckCurve(thresholds, values)


def auc(curve: PckCurve) -> float:
    """Trapezoidal area under the curve, normalized by the threshold span."""
    t, v = curve.thresholds, curve.values
    if t.size < 2:
        raise InputError("AUC needs at least 2 thresholds")
    return float(np.trapezoid(v, t) / (t[-1] - t[0]))


def align_root(pred_xy, gt_xy, root_index: int = 0) -> np.ndarray:
    """Translate predictions so the root keypoint matches ground truth."""
    pred = np.asarray(pred_xy, dtype=np.float64)
    gt = np.asarray(gt_xy, dtype=np.float64)
    return pred + (gt[root_index] - pred[root_index])


def summary(samples: list[ErrorSample], thresholds) -> dict:
    """JSON-ready {auc, mean_epe, median_epe} plus the curve itself."""
    curve = pck_curve(samples, thresholds)
    errors = np.array([s.error for s in samples if s.valid])
    return {
        "auc": auc(curve),
        "mean_epe": float(errors.mean()) if errors.size else float("nan"),
        "median_epe": float(np.median(errors)) if errors.size else float("nan"),
        "num_keypoints": int(errors.size),
        "curve": curve,
    }


def summary_json(report: dict) -> str:
    return json.dumps({
        "auc": report["auc"],
        "mean_epe": report["mean_epe"],
        "median_epe": report["median_epe"],
        "num_keypoints": report["num_keypoints"],
    }, indent=2)


def format_table_row(name: str, report: dict) -> str:
    """One 'AUC / mean EPE / median EPE' result row."""
    return (f"{name}  AUC {report['auc']:.3f}  "
            f"mean EPE {report['mean_epe']:.2f}px  "
            f"median EPE {report['median_epe']:.2f}px")
