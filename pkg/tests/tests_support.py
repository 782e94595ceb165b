"""Tiny shared builders for the test suite."""

import numpy as np

from softsensor import Dataset


def tiny_dataset(n=40, p=3, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, p))
    y = M @ np.arange(1.0, p + 1.0) + 0.1 * rng.standard_normal(n)
    return Dataset(
        columns=tuple(f"x{j}" for j in range(p)),
        M=M,
        y=y,
        y_mask=np.ones(n, dtype=bool),
        index=np.arange(1, n + 1, dtype=float),
        orig_rows=np.arange(1, n + 1),
    )
