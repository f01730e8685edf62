import math

import numpy as np
import pytest

from gwloc.dataset import GenerationConfig, generate
from gwloc.dispersion import DispersionModel, ModeCurve, default_model
from gwloc.wavefield import FrequencyGrid, PlateScene, ordered_pairs


@pytest.fixture
def two_mode_model():
    return default_model()


@pytest.fixture
def linear_model():
    return DispersionModel(modes=(ModeCurve(kind="linear", c=5400.0),), alpha=1.0)


@pytest.fixture
def small_grid():
    return FrequencyGrid(n_bins=64, f_max=2.5e5)


def make_scene(sensors, damage=None, length=1.0, width=1.0):
    sensors = np.asarray(sensors, dtype=np.float64)
    return PlateScene(
        length=length,
        width=width,
        sensors=sensors,
        pairs=ordered_pairs(sensors.shape[0]),
        damage=damage,
    )


@pytest.fixture
def tiny_dataset():
    """20 quick samples, 4 sensors, uncertain + 25 dB."""
    return generate(GenerationConfig(n_samples=20, n_bins=32, f_max=3.2e4, n_sensors=4, seed=3))


@pytest.fixture
def tiny_ideal_dataset():
    return generate(
        GenerationConfig(
            n_samples=20,
            n_bins=32,
            f_max=3.2e4,
            n_sensors=4,
            alpha_mode="fixed",
            snr_db=math.inf,
            seed=3,
        )
    )
