import os
import sys

import numpy as np
import pytest

_repo_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if _repo_root not in sys.path:
    sys.path.insert(0, _repo_root)

from core.geometry import PointCloud  # noqa: E402
from core.synth import SynthConfig, generate_long_tail  # noqa: E402


@pytest.fixture(scope="session")
def long_tail_cloud() -> PointCloud:
    """Default k=2 long-tail scan, 122880 points over 3-80 m."""
    return generate_long_tail(SynthConfig())


@pytest.fixture(scope="session")
def small_long_tail() -> PointCloud:
    return generate_long_tail(SynthConfig(n_points=20000, seed=11))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
