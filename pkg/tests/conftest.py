import numpy as np
import pytest

from trajrank.core import DisplacementSeries, Trajectory
from trajrank.ingestion import Regime, Scenario, synth_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def two_regime_corpus():
    scenario = Scenario(
        regimes=(Regime("straight", speed=1.0, heading=0.0),
                 Regime("straight", speed=1.0, heading=np.pi / 2)),
        noise_std=0.02,
    )
    return synth_corpus(scenario, 160, seed=7)


def random_trajectory(rng, n_points=21, dt=0.4):
    pts = np.cumsum(rng.normal(0, 0.5, size=(n_points, 2)), axis=0)
    return Trajectory("t", pts, dt=dt)


def random_full_series(rng, t_obs=8, t_pred=12):
    deltas = rng.normal(0, 0.4, size=(t_obs + t_pred, 2))
    return DisplacementSeries(deltas, t_obs, t_pred, origin=tuple(rng.normal(0, 5, 2)))
