"""Parity edge cases and archive-format robustness."""

import pytest
import torch

from handkp_trainer import hkwf, parity
from handkp_trainer.model import MirrorModel


def test_zero_weight_model_deviation_is_zero(fixture_data, tmp_path):
    model = MirrorModel(112)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        for bn in model.bns.values():
            bn.running_mean.zero_()
            bn.running_var.fill_(1.0)
    report = parity.parity_report(model, fixture_data, tmp_path)
    assert report["max_deviation"] == 0.0


def test_untrained_model_heatmaps_near_uniform():
    torch.manual_seed(3)
    model = MirrorModel(112).eval()
    with torch.no_grad():
        raw = model(torch.rand(1, 3, 112, 112) * 2 - 1)
    probs = torch.softmax(raw[0, :21].reshape(21, -1), dim=1)
    uniform = 1.0 / (14 * 14)
    assert float(probs.max()) < 20 * uniform
    assert float(probs.min()) > uniform / 100


def test_corrupted_archive_rejected(tmp_path, seeded_model):
    path = tmp_path / "model.hkwf"
    hkwf.save(seeded_model.export_entries(), path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="CRC"):
        hkwf.load(path)
