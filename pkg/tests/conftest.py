import numpy as np
import pytest

from scengame.quadratic import QuadraticConfig, build_game


@pytest.fixture
def quad_game():
    """Two players, two dims each, unit curvature, targets in [-1, 1]."""
    cfg = QuadraticConfig()
    spec, sampler = build_game(cfg)
    return cfg, spec, sampler


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
