import warnings

import numpy as np
import pytest

from mortpca.ingest import WeekIndex
from mortpca.model import fit_model
from mortpca.synthetic import SynthConfig, generate_synthetic_panel
from mortpca.trend import FitConfig

FAST_FIT = FitConfig(t0_step=8.0, golden_passes=2)


@pytest.fixture(scope="session")
def synth():
    return generate_synthetic_panel(SynthConfig(), seed=11)


@pytest.fixture(scope="session")
def fitted(synth):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_model(synth.panel, WeekIndex.of(2019, 52), trend_config=FAST_FIT)


@pytest.fixture(scope="session")
def holdout(synth):
    return synth.panel.between(first=WeekIndex.of(2020, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
