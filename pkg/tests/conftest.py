import numpy as np
import pytest

from tvcomp.core import TernaryTensor
from tvcomp.tensor_store import TaskVector


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_task_vector(rng, group_sizes, scale=1.0):
    return TaskVector(
        {
            f"g{i}": (scale * rng.standard_normal(n)).astype(np.float32)
            for i, n in enumerate(group_sizes)
        }
    )


def random_ternary(rng, dim, density, name="t", scale=None):
    nnz = min(dim, max(0, int(round(density * dim))))
    idx = np.sort(rng.choice(dim, size=nnz, replace=False)).astype(np.int64)
    signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=nnz)
    if scale is None:
        scale = float(rng.uniform(0.1, 2.0))
    return TernaryTensor(name, dim, idx, signs, scale)
