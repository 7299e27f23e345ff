from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def confounded_data(rng, p=300, n=30, k=2, d=1, noise=1.0, omega=0.5):
    """Small dataset with an intercept nuisance and latent factors tied to x."""
    x = rng.standard_normal((n, d))
    c = x @ np.full((d, k), omega) + rng.standard_normal((n, k))
    l = rng.standard_normal((p, k)) * 2
    b = np.where(rng.random((p, d)) < 0.1, rng.standard_normal((p, d)), 0.0)
    y = b @ x.T + l @ c.T + noise * rng.standard_normal((p, n))
    return y, x, np.ones((n, 1)), c, b
