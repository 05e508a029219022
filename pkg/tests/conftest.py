import numpy as np
import pytest

from pgikit.pipeline import PipelineConfig, flatten_point_cloud
from pgikit.shapes import gen_shape


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_run():
    """A quick (barely trained) pipeline run on a 1024-point cone."""
    pc = gen_shape("cone", 1024, seed=3)
    cfg = PipelineConfig.from_preset("1024").with_steps(5)
    return pc, flatten_point_cloud(pc, cfg)
