import numpy as np
import pytest

from cloudseg.synth import SynthVariant, make_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# small variant keeps labeler and service tests fast
SMALL_VARIANT = SynthVariant(
    "small", (0.75, 0.68, 0.25), (0.48, 0.26, 0.20),
    n_plane=1200, n_sphere=800, n_clutter=120,
)


@pytest.fixture
def small_scene(rng):
    return make_scene(SMALL_VARIANT, rng)
