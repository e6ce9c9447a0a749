import numpy as np
import pytest

from handkp.weights_io import WeightArchive, expected_entries


def random_archive(net, rng: np.random.Generator, weight_scale=0.1) -> WeightArchive:
    """Random but sane weights for every entry a network expects."""
    entries = {}
    for name, dims in expected_entries(net).items():
        if name.endswith(".bn.gamma"):
            arr = rng.uniform(0.5, 1.5, dims)
        elif name.endswith(".bn.var"):
            arr = rng.uniform(0.5, 1.5, dims)
        elif name.endswith(".bn.eps"):
            arr = np.full(dims, 1e-3)
        elif name.endswith(".bn.beta") or name.endswith(".bn.mean") or name.endswith(".b"):
            arr = rng.normal(0.0, 0.05, dims)
        else:
            arr = rng.normal(0.0, weight_scale, dims)
        entries[name] = arr.astype(np.float32)
    return WeightArchive(entries)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
