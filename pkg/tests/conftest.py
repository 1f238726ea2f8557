"""Shared fixtures: small fast corpora for unit tests, the default synthetic
corpus for protocol-level tests."""

import numpy as np
import pytest

from hyperclass import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_corpus():
    """Six classes x twelve rows at d=8; enough for every episode shape."""
    return generate_synthetic(SyntheticConfig(
        num_classes=6, per_class=12, dim=8, noise_sigma=0.3, seed=11,
        split_fractions=(0.5, 0.25, 0.25)))


@pytest.fixture(scope="session")
def default_corpus():
    """The default 50-class corpus used by the trend and protocol tests."""
    return generate_synthetic(SyntheticConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
