"""Small builders shared by the inference tests."""
import numpy as np

from radiomap.features import FeatureSet
from radiomap.inference.model import PropagationParams


def random_features(rng, T, Q, missing=0.0):
    s = rng.uniform(-60, -20, size=(T, Q))
    aod = rng.uniform(-np.pi, np.pi, size=(T, Q))
    nu = rng.uniform(-40, -20, size=(T, Q))
    mask = rng.uniform(size=(T, Q)) >= missing
    for arr in (s, aod, nu):
        arr[~mask] = np.nan
    return FeatureSet(s, aod, nu, mask)


def random_params(rng, fs, Q=None):
    Q = Q or fs.Q
    labels = rng.integers(0, 2, size=fs.mask.shape).astype(np.int8)
    labels[~fs.mask] = -1
    return PropagationParams(rng.uniform(-40, -20, (Q, 2)), rng.uniform(10, 30, (Q, 2)),
                             rng.uniform(0.5, 4, (Q, 2)), rng.uniform(0.01, 0.5, 2),
                             rng.uniform(-30, -10, 2), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 3), labels)
