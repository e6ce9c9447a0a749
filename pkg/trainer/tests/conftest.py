import numpy as np
import pytest
import torch

from handkp_trainer.model import MirrorModel
from handkp_trainer.synth import write_dataset


@pytest.fixture(scope="session")
def fixture_data(tmp_path_factory):
    """16 synthetic fixture images plus annotations."""
    out = tmp_path_factory.mktemp("fixtures")
    ann = write_dataset(out, 16, seed=101, size=112)
    return ann


@pytest.fixture()
def seeded_model():
    torch.manual_seed(42)
    model = MirrorModel(112)
    rng = np.random.default_rng(42)
    for bn in model.bns.values():
        bn.running_mean.copy_(torch.from_numpy(
            rng.normal(0, 0.05, bn.num_features).astype(np.float32)))
        bn.running_var.copy_(torch.from_numpy(
            rng.uniform(0.5, 1.5, bn.num_features).astype(np.float32)))
    return model
