"""Cross-implementation parity check against the inference engine.

The engine is exercised strictly through its command line and file
formats: we export an archive, run `infer --dump-heatmaps`, and compare
the engine's raw heatmaps with this package's torch forward pass.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import torch

from . import hkwf
from .model import MirrorModel
from .synth import load_arrays

DEVIATION_LIMIT = 1e-4


def run_engine(args: list[str]) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "handkp", *args],
                          capture_output=True, text=True)


def infer_heatmaps(archive_path, ann_path, workdir, size: int) -> tuple[dict, Path]:
    """Run the engine's inference; returns its heatmaps and prediction path."""
    workdir = Path(workdir)
    pred_path = workdir / "pred.jsonl"
    dump_path = workdir / "heatmaps.hkwf"
    proc = run_engine([
        "infer", "--model", str(archive_path), "--input", str(ann_path),
        "--out", str(pred_path), "--crop", "fixed", "--size", str(size),
        "--dump-heatmaps", str(dump_path),
    ])
    if proc.returncode != 0:
        raise RuntimeError(f"engine inference failed ({proc.returncode}): "
                           f"{proc.stderr.strip()}")
    return hkwf.load(dump_path), pred_path


def parity_report(model: MirrorModel, ann_path, workdir,
                  archive_path=None) -> dict:
    """Compare engine heatmaps with the torch forward pass, image by image.

    The archive the engine loads defaults to a fresh export of `model`;
    pass `archive_path` to check against a tampered or stale archive
    instead (the comparison should then fail).
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if archive_path is None:
        archive_path = workdir / "model.hkwf"
        hkwf.save(model.export_entries(), archive_path)
    engine_maps, _ = infer_heatmaps(archive_path, ann_path, workdir,
                                    model.input_size)
    images, _, names = load_arrays(ann_path)
    model.eval()
    with torch.no_grad():
        ours = model(torch.from_numpy(images)).cpu().numpy()
    deviations = {}
    for i, name in enumerate(names):
        engine = engine_maps[f"{name}.heatmaps"]          # (g, g, 22)
        mine = np.transpose(ours[i], (1, 2, 0))
        deviations[name] = float(np.abs(engine - mine).max())
    worst = max(deviations.values())
    return {
        "images": len(names),
        "max_deviation": worst,
        "limit": DEVIATION_LIMIT,
        "passes": worst < DEVIATION_LIMIT,
        "per_image": deviations,
    }


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
