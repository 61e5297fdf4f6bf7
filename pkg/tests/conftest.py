import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=150,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_drive(tmp_path_factory):
    """40 small synthetic fundus pairs on disk in the images/ + masks/ layout."""
    from fvkit.datasets import write_synthetic_drive
    root = tmp_path_factory.mktemp("drive")
    return write_synthetic_drive(str(root), n_images=40, height=72, width=68, seed=0)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FVKIT_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="long-running; set FVKIT_FULL=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
