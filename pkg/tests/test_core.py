import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajrank.core import (
    DisplacementSeries,
    FlatDisplacement,
    Standardizer,
    Trajectory,
    concat,
    flatten,
    integrate,
    split,
    to_displacements,
    to_trajectory,
    unflatten,
)
from trajrank.errors import LengthMismatchError


def test_to_displacements_constant_velocity():
    t = Trajectory("a", [(0, 0), (1, 0), (2, 0)])
    d = to_displacements(t, 1, 1)
    npt.assert_array_equal(d.deltas, [[1, 0], [1, 0]])
    assert d.origin == (0.0, 0.0)


def test_to_displacements_static_agent():
    t = Trajectory("a", [(3, 3), (3, 3), (3, 3)])
    d = to_displacements(t, 1, 1)
    npt.assert_array_equal(d.deltas, np.zeros((2, 2)))


def test_to_displacements_direct_subtraction():
    t = Trajectory("a", [(0, 0), (1, 1), (1, 3)])
    d = to_displacements(t, 1, 1)
    npt.assert_array_equal(d.deltas, [[1, 1], [0, 2]])


def test_to_displacements_length_mismatch_names_both_lengths():
    t = Trajectory("a", [(0, 0), (1, 0), (2, 0)])
    with pytest.raises(LengthMismatchError, match="3 points.*expected 5"):
        to_displacements(t, 2, 2)


def test_integrate_excludes_start():
    d = DisplacementSeries([[1, 0], [1, 0]], 1, 1, origin=(0, 0))
    npt.assert_array_equal(integrate(d), [[1, 0], [2, 0]])


def test_integrate_zero_displacement_identity():
    d = DisplacementSeries([[0, 0]], 1, 0, origin=(5, -2))
    npt.assert_array_equal(integrate(d), [[5, -2]])


def test_roundtrip_random_trajectories(rng):
    for _ in range(100):
        n = int(rng.integers(3, 30))
        pts = np.cumsum(rng.normal(0, 1, size=(n, 2)), axis=0) + rng.normal(0, 10, 2)
        t = Trajectory("r", pts)
        d = to_displacements(t, 1, n - 2)
        rebuilt = to_trajectory(d)
        assert np.abs(rebuilt.points - t.points).max() < 1e-9


def test_flatten_interleaves():
    d = DisplacementSeries([[1, 2], [3, 4]], 1, 1)
    npt.assert_array_equal(flatten(d).values, [1, 2, 3, 4])


def test_flatten_single_step():
    d = DisplacementSeries([[0, 0]], 1, 0)
    npt.assert_array_equal(flatten(d).values, [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_flatten_unflatten_bijection(t_obs, t_pred, seed):
    rng = np.random.default_rng(seed)
    d = DisplacementSeries(rng.normal(size=(t_obs + t_pred, 2)), t_obs, t_pred)
    back = unflatten(flatten(d), t_obs, t_pred)
    npt.assert_array_equal(back.deltas, d.deltas)


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 2**31 - 1))
def test_translation_invariance(tx, ty, seed):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.normal(size=(10, 2)), axis=0)
    d1 = to_displacements(Trajectory("a", pts), 4, 5)
    d2 = to_displacements(Trajectory("a", pts + np.array([tx, ty])), 4, 5)
    npt.assert_allclose(d1.deltas, d2.deltas, atol=1e-9)


def test_split_paper_horizons():
    d = DisplacementSeries(np.ones((20, 2)), 8, 12)
    obs, fut = split(d)
    assert len(obs) == 8 and len(fut) == 12
    assert obs.t_obs == 8 and fut.t_obs == 0 and fut.t_pred == 12


def test_split_concat_restores(rng):
    deltas = rng.normal(size=(20, 2))
    d = DisplacementSeries(deltas, 8, 12, origin=(2.0, 3.0))
    obs, fut = split(d)
    back = concat(obs, fut)
    npt.assert_array_equal(back.deltas, d.deltas)
    assert back.origin == d.origin


def test_split_future_origin_is_last_observed_position():
    d = DisplacementSeries([[1, 0], [0, 1], [2, 2]], 2, 1, origin=(1, 1))
    _, fut = split(d)
    assert fut.origin == (2.0, 2.0)


def test_split_rejects_observation_only():
    d = DisplacementSeries(np.ones((8, 2)), 8, 12)  # observation-only
    with pytest.raises(ValueError, match="full series"):
        split(d)


def test_zero_t_pred_series_is_observation_only():
    d = DisplacementSeries(np.ones((4, 2)), 4, 0)
    assert not d.is_full
    with pytest.raises(ValueError):
        split(d)


def test_trajectory_invariants():
    with pytest.raises(ValueError, match="at least 2"):
        Trajectory("a", [(0, 0)])
    with pytest.raises(ValueError, match="dt"):
        Trajectory("a", [(0, 0), (1, 1)], dt=0.0)


def test_series_length_invariant():
    with pytest.raises(LengthMismatchError):
        DisplacementSeries(np.ones((5, 2)), 8, 12)


def test_flat_displacement_even_length():
    with pytest.raises(ValueError):
        FlatDisplacement([1.0, 2.0, 3.0])


def test_arrays_are_frozen():
    t = Trajectory("a", [(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        t.points[0, 0] = 9.0


def test_standardizer_roundtrip(rng):
    deltas = rng.normal(3.0, 2.5, size=(50, 12, 2))
    std = Standardizer.fit(deltas)
    z = std.transform(deltas)
    npt.assert_allclose(z.reshape(-1, 2).mean(axis=0), 0, atol=1e-12)
    npt.assert_allclose(z.reshape(-1, 2).std(axis=0), 1, atol=1e-12)
    npt.assert_allclose(std.inverse(z), deltas, atol=1e-12)
    back = Standardizer.from_doc(std.to_doc())
    npt.assert_array_equal(back.mean, std.mean)
    npt.assert_array_equal(back.std, std.std)
