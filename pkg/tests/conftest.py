import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_cfg():
    """A few activities and very narrow layers: enough to exercise every code path quickly."""
    from gazegraph.config import RunConfig

    return RunConfig(node_dim=16, edge_dim=16, ecc_hidden=8, lstm_hidden=16, head_hidden=16, max_decode_len=28,
                     lr=3e-3, epochs=2, batch_size=16, activities=4, cameras=2, test_cameras_per_activity=1,
                     videos_per_pair=2, seed=3)


@pytest.fixture(scope="session")
def tiny_experiment(tiny_cfg):
    from gazegraph.evaluation import Experiment

    return Experiment(tiny_cfg)


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.LINES):
        terminalreporter.write_line(line)
