from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "vallab",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("vallab")


def within(est, target, sigmas: float = 3.0, atol: float = 0.0) -> bool:
    """Estimate agrees with ``target`` to ``sigmas`` combined standard errors."""
    t_mean = getattr(target, "mean", target)
    t_err = getattr(target, "stderr", 0.0)
    return abs(est.mean - t_mean) <= sigmas * math.hypot(est.stderr, t_err) + atol


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
