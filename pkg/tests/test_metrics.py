import numpy as np
import numpy.testing as npt
import pytest

from trajrank.core import DisplacementSeries
from trajrank.errors import LengthMismatchError
from trajrank.forecasters import ProposalSet
from trajrank.metrics import (
    EvalReport,
    EvalRow,
    ade,
    aggregate,
    fde,
    topk_by_likelihood,
    topk_by_sampling,
)


def fut(deltas, origin=(0.0, 0.0)):
    return DisplacementSeries(np.asarray(deltas, dtype=float), 0, len(deltas), origin=origin)


def test_perfect_prediction_zero_error(rng):
    p = rng.normal(size=(12, 2))
    assert ade(p, p.copy()) == 0.0
    assert fde(p, p.copy()) == 0.0


def test_constant_offset_pythagorean():
    truth = np.zeros((5, 2))
    pred = truth + np.array([3.0, 4.0])
    assert ade(pred, truth) == 5.0
    assert fde(pred, truth) == 5.0


def test_matches_naive_per_step_recomputation(rng):
    for _ in range(30):
        p, t = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
        naive_ade = sum(float(np.hypot(*(a - b))) for a, b in zip(p, t)) / 9
        naive_fde = float(np.hypot(*(p[-1] - t[-1])))
        assert abs(ade(p, t) - naive_ade) < 1e-12
        assert abs(fde(p, t) - naive_fde) < 1e-12


def test_series_inputs_integrate_from_origin():
    pred = fut([[1, 0], [1, 0]], origin=(5.0, 5.0))
    truth = fut([[1, 0], [1, 0]], origin=(5.0, 5.0))
    assert ade(pred, truth) == 0.0


def test_length_mismatch_error(rng):
    with pytest.raises(LengthMismatchError):
        ade(rng.normal(size=(5, 2)), rng.normal(size=(6, 2)))


def test_translation_rotation_invariance(rng):
    p, t = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
    theta = 1.1
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shift = np.array([4.2, -1.0])
    assert abs(ade(p, t) - ade(p @ rot.T + shift, t @ rot.T + shift)) < 1e-9
    assert abs(fde(p, t) - fde(p @ rot.T + shift, t @ rot.T + shift)) < 1e-9


def _ranked_pset(rows, probs):
    props = tuple(fut(r) for r in rows)
    return ProposalSet(props, cluster_ids=tuple(range(len(rows))),
                       probabilities=np.asarray(probs, dtype=float))


def test_topk_by_likelihood_selection_semantics():
    truth = fut([[1, 0], [1, 0]])
    # correct proposal (index 2) ranked 3rd of 5
    pset = _ranked_pset(
        [[[0, 1], [0, 1]], [[2, 0], [2, 0]], [[1, 0], [1, 0]],
         [[0, 2], [0, 2]], [[3, 3], [3, 3]]],
        [0.35, 0.3, 0.2, 0.1, 0.05])
    a3, f3 = topk_by_likelihood(pset, truth, 3)
    assert a3 == 0.0 and f3 == 0.0
    a2, _ = topk_by_likelihood(pset, truth, 2)
    assert a2 > 0.0


def test_topk_by_likelihood_top1_is_argmax():
    truth = fut([[1, 0]])
    pset = _ranked_pset([[[1, 0]], [[0, 1]]], [0.4, 0.6])
    a1, _ = topk_by_likelihood(pset, truth, 1)
    assert a1 > 0.0  # argmax proposal is the wrong one


def test_topk_equals_best_of_all_at_k_equals_K(rng):
    truth = fut(rng.normal(size=(4, 2)))
    rows = [rng.normal(size=(4, 2)) for _ in range(5)]
    pset = _ranked_pset(rows, softish(rng, 5))
    aK, _ = topk_by_likelihood(pset, truth, 5)
    assert aK == min(ade(fut(r), truth) for r in rows)


def softish(rng, k):
    p = rng.uniform(0.1, 1.0, size=k)
    return p / p.sum()


def test_topk_monotone_non_increasing(rng):
    truth = fut(rng.normal(size=(4, 2)))
    pset = _ranked_pset([rng.normal(size=(4, 2)) for _ in range(6)], softish(rng, 6))
    vals = [topk_by_likelihood(pset, truth, k)[0] for k in range(1, 7)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_topk_uniform_probs_equals_oracle(rng):
    truth = fut(rng.normal(size=(4, 2)))
    rows = [rng.normal(size=(4, 2)) for _ in range(4)]
    pset = _ranked_pset(rows, np.full(4, 0.25))
    a, _ = topk_by_likelihood(pset, truth, 4)
    assert a == min(ade(fut(r), truth) for r in rows)


def test_topk_by_likelihood_ties_prefer_smaller_cluster(rng):
    truth = fut([[1, 0]])
    # tied probabilities: selection must take cluster 0 first
    pset = _ranked_pset([[[1, 0]], [[9, 9]]], [0.5, 0.5])
    a1, _ = topk_by_likelihood(pset, truth, 1)
    assert a1 == 0.0


def test_topk_by_likelihood_requires_probabilities(rng):
    props = (fut(rng.normal(size=(3, 2))),)
    pset = ProposalSet(props, cluster_ids=(0,))
    with pytest.raises(ValueError, match="probabilities"):
        topk_by_likelihood(pset, fut(rng.normal(size=(3, 2))), 1)
    with pytest.raises(ValueError, match="k must be"):
        topk_by_likelihood(pset.with_probabilities([1.0]), fut(rng.normal(size=(3, 2))), 2)


def test_topk_by_sampling_first_k_order():
    truth = fut([[1, 0]])
    samples = [fut([[5, 5]]), fut([[1, 0]]), fut([[0, 0]])]
    a1, _ = topk_by_sampling(samples, truth, 1)
    assert a1 > 0  # first sample only
    a2, _ = topk_by_sampling(samples, truth, 2)
    assert a2 == 0.0


def test_topk_by_sampling_duplicates_no_effect():
    truth = fut([[1, 0]])
    s = fut([[2, 0]])
    single = topk_by_sampling([s], truth, 1)
    dup = topk_by_sampling([s, fut([[2, 0]]), fut([[2, 0]])], truth, 3)
    assert single == dup


def test_topk_by_sampling_needs_enough_samples():
    truth = fut([[1, 0]])
    with pytest.raises(ValueError, match="at least"):
        topk_by_sampling([fut([[1, 0]])], truth, 3)


def test_topk_by_sampling_matches_bruteforce(rng):
    truth = fut(rng.normal(size=(5, 2)))
    samples = [fut(rng.normal(size=(5, 2))) for _ in range(6)]
    a3, _ = topk_by_sampling(samples, truth, 3)
    assert a3 == min(ade(s, truth) for s in samples[:3])


def test_eval_row_rejects_non_finite():
    with pytest.raises(ValueError, match="finite"):
        EvalRow(dataset="d", model="m", clustering="", ranking="", k=None,
                top1_ade=float("nan"), top1_ade_std=0, top1_fde=1, top1_fde_std=0,
                top3_ade=1, top3_ade_std=0, top3_fde=1, top3_fde_std=0,
                ranking_accuracy=None, ranking_accuracy_std=None, runs=1, seeds=(1,))


def test_eval_report_roundtrip_and_csv():
    row = EvalRow(dataset="synth", model="gan-ours", clustering="kmeans",
                  ranking="cent", k=3,
                  top1_ade=0.5, top1_ade_std=0.01, top1_fde=0.9, top1_fde_std=0.02,
                  top3_ade=0.3, top3_ade_std=0.01, top3_fde=0.6, top3_fde_std=0.02,
                  ranking_accuracy=91.0, ranking_accuracy_std=1.5, runs=5,
                  seeds=(1, 2, 3, 4, 5))
    report = EvalReport(rows=(row,), config_hash="abc")
    back = EvalReport.from_doc(report.to_doc())
    assert back.rows == report.rows
    csv = report.to_csv()
    assert csv.splitlines()[0].startswith("dataset,model")
    assert "gan-ours" in csv and "1|2|3|4|5" in csv


def test_aggregate_single_run_zero_std():
    mean, std = aggregate([0.7])
    assert mean == 0.7 and std == 0.0
