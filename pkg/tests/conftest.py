import time

import pytest

from fostersim.estimate import fit_bundle
from fostersim.synth import generate_labelled, ny_regime

# Fixed before any results were looked at; every statistical check uses it.
WORLD_SEED = 2017
HISTORY_MONTHS = 204  # 2000-11 .. 2017-10


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def ny_world(timings):
    t0 = time.perf_counter()
    truth = ny_regime()
    episodes, labels, true_los = generate_labelled(truth, 0, HISTORY_MONTHS, WORLD_SEED)
    timings["generate"] = time.perf_counter() - t0
    return truth, episodes, labels, true_los


@pytest.fixture(scope="session")
def ny_bundle(ny_world, timings):
    _, episodes, _, _ = ny_world
    t0 = time.perf_counter()
    bundle = fit_bundle(episodes, 0, HISTORY_MONTHS)
    timings["fit"] = time.perf_counter() - t0
    return bundle
