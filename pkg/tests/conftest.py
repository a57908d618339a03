import numpy as np
import pytest

from freeknot import Dataset, IntervalPartition, KnotState


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_state(partition: IntervalPartition, active=(), gammas=None) -> KnotState:
    z = np.zeros(partition.k_max, dtype=np.uint8)
    for k in active:
        z[k] = 1
    gamma = partition.midpoints() if gammas is None else np.asarray(gammas, dtype=float)
    return KnotState(z, gamma, partition)


def gaussian_dataset(n=30, seed=0, noise=0.3) -> Dataset:
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, size=n))
    f = np.sin(5.0 * x) + 0.5 * x
    return Dataset(x, f + rng.normal(0.0, noise, size=n))
