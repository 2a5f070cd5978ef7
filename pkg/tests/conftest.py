"""Shared fixtures and the randomized scene builder used across suites."""

import math
from pathlib import Path

import numpy as np
import pytest

import tisnav as tn

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

L1_WAVELENGTH_M = 0.19029367279836487


def random_scene(rng, n_sats=None, n_arrays=None, noise=None):
    """A random valid scene: 4..8 satellites, 2..6 arrays, user near origin.

    Array azimuths keep a minimum angular separation so every pairwise ray
    intersection stays well conditioned; everything else is free.
    """
    lam = L1_WAVELENGTH_M
    n_sats = int(rng.integers(4, 9)) if n_sats is None else n_sats
    n_arrays = int(rng.integers(2, 7)) if n_arrays is None else n_arrays

    sats = []
    for sid in range(1, n_sats + 1):
        az = rng.uniform(0.0, 2.0 * math.pi)
        el = rng.uniform(math.radians(15.0), math.radians(80.0))
        rad = rng.uniform(1.9e7, 2.3e7)
        pos = tn.Position3(
            rad * math.cos(el) * math.cos(az),
            rad * math.cos(el) * math.sin(az),
            rad * math.sin(el),
        )
        sats.append(
            tn.SatelliteEphemeris(
                sid, pos, float(rng.uniform(-1e-3, 1e-3)), 0.0, lam, 4, lam / 2
            )
        )

    while True:
        azimuths = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_arrays))
        gaps = np.diff(np.concatenate([azimuths, [azimuths[0] + 2 * math.pi]]))
        if gaps.min() > math.radians(12.0):
            break
    arrays = []
    slots = rng.permutation(n_arrays) + 1
    for i, az in enumerate(azimuths):
        r = rng.uniform(2.5, 8.0)
        k = int(rng.choice([16, 25, 36, 49, 64, 81]))
        pos = tn.Position3(
            r * math.cos(az), r * math.sin(az), float(rng.uniform(0.5, 2.5))
        )
        arrays.append(
            tn.TisArray(i + 1, pos, k, lam / 2, ((1.0, 0.0),) * k, int(slots[i]))
        )

    user = tn.UserConfig(
        tn.Position3(
            float(rng.uniform(-0.5, 0.5)),
            float(rng.uniform(-0.5, 0.5)),
            float(rng.uniform(1.0, 2.0)),
        ),
        float(rng.uniform(-1e-3, 1e-3)),
        4,
        lam / 2,
    )
    if noise is None:
        noise = tn.NoiseModel(0.0, 0.0, "none")
    return tn.Scene(
        tuple(sats), tuple(arrays), user, noise, int(rng.integers(0, 2**31))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2026)


@pytest.fixture(scope="session")
def demo_scene():
    return tn.demo_constellation()


@pytest.fixture(scope="session")
def reference_scene():
    return tn.load_scene(SCENARIOS / "reference_scene.yaml")


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS
