import math

import numpy as np
import pytest

from mixlab.errors import ParameterError, ShapeMismatchError
from mixlab.metrics import MetricReport, average_reports, compute_metrics
from mixlab.rng import RngStream

from _oracles import loop_metrics


def test_perfect_prediction():
    r = compute_metrics([0.5, -1.0, 2.0], [0.5, -1.0, 2.0])
    assert r.mae == 0.0
    assert r.corr == pytest.approx(1.0, abs=1e-12)
    assert r.acc2 == 1.0 and r.f1 == 1.0
    assert r.acc5 == 1.0 and r.acc7 == 1.0


def test_perfect_linear_relation():
    r = compute_metrics([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    assert r.corr == pytest.approx(1.0, abs=1e-12)
    assert r.mae == pytest.approx(2.0, abs=1e-15)


def test_neutral_targets_are_excluded_from_binary_metrics():
    r = compute_metrics([-0.5, 9.0, 1.0], [-1.0, 0.0, 2.0])
    assert r.n_binary_included == 2
    assert r.n_binary_excluded == 1
    assert r.acc2 == 1.0


def test_exclusion_by_prediction_flag():
    # zero *prediction* drops the example instead
    r = compute_metrics([0.0, 1.0, -1.0], [5.0, 2.0, -3.0], exclude_by="pred")
    assert r.n_binary_included == 2
    assert r.acc2 == 1.0


def test_binned_accuracy_clamps_and_rounds():
    # acc5 clamps 4.7 and -2.6 to the +-2 bins of their targets; acc7 keeps
    # bin 3 vs target bin 2 apart while -2.6 rounds to -3, matching
    r = compute_metrics([4.7, -2.6], [2.0, -3.0])
    assert r.acc5 == 1.0
    assert r.acc7 == 0.5


def test_binned_accuracy_ties_round_to_even():
    # 0.5 and 1.5 both round to even bins: 0 and 2
    r = compute_metrics([0.5, 1.5], [0.0, 2.0])
    assert r.acc5 == 1.0


def test_anticorrelated_predictions():
    r = compute_metrics([3.0, 2.0, 1.0], [1.0, 2.0, 3.0])
    assert r.corr == pytest.approx(-1.0, abs=1e-12)


def test_constant_predictions_flag_undefined_corr():
    r = compute_metrics([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    assert not r.corr_defined
    assert math.isnan(r.corr)
    assert r.mae == pytest.approx(1.0)


def test_all_neutral_targets_flag_binary_metrics_nan():
    r = compute_metrics([1.0, -1.0], [0.0, 0.0])
    assert r.n_binary_included == 0
    assert math.isnan(r.acc2) and math.isnan(r.f1)


def test_correlation_is_affine_invariant():
    rng = RngStream(3).split("aff")
    t = rng.gen.standard_normal(200)
    p = rng.gen.standard_normal(200)
    base = compute_metrics(p, t).corr
    shifted = compute_metrics(2.5 * p + 7.0, t).corr
    assert shifted == pytest.approx(base, abs=1e-9)


def test_weighted_f1_matches_hand_value():
    # preds [+,+,-,-], targets [+,-,+,-]: each class F1 = 0.5, any weighting = 0.5
    r = compute_metrics([1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], weighted_f1=True)
    assert r.f1 == pytest.approx(0.5)


def test_f1_zero_when_no_positive_anywhere():
    r = compute_metrics([-1.0, -2.0], [-1.0, -2.0])
    assert r.f1 == 0.0 and r.acc2 == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_matches_loop_oracle_on_random_vectors(seed):
    rng = RngStream(seed).split("metrics")
    for _ in range(20):
        n = int(rng.gen.integers(1, 40))
        t = np.round(rng.gen.uniform(-4, 4, n), 1)  # rounding creates exact zeros
        p = rng.gen.uniform(-4, 4, n)
        want = loop_metrics(p, t)
        got = compute_metrics(p, t)
        assert abs(got.mae - want["mae"]) <= 1e-12
        if want["corr_defined"]:
            assert abs(got.corr - want["corr"]) <= 1e-12
        else:
            assert not got.corr_defined
        assert got.n_binary_included == want["n_binary_included"]
        assert got.n_binary_excluded == want["n_binary_excluded"]
        if want["n_binary_included"] > 0:
            assert abs(got.acc2 - want["acc2"]) <= 1e-12
            assert abs(got.f1 - want["f1"]) <= 1e-12
        assert abs(got.acc5 - want["acc5"]) <= 1e-12
        assert abs(got.acc7 - want["acc7"]) <= 1e-12


def test_input_validation():
    with pytest.raises(ShapeMismatchError):
        compute_metrics([1.0], [1.0, 2.0])
    with pytest.raises(ParameterError):
        compute_metrics([], [])
    with pytest.raises(ParameterError):
        compute_metrics([np.nan], [1.0])
    with pytest.raises(ParameterError):
        compute_metrics([1.0], [1.0], exclude_by="label")


def test_as_dict_round_trip():
    r = compute_metrics([1.0, -1.0], [1.0, -2.0])
    d = r.as_dict()
    assert d["mae"] == r.mae and d["corr_defined"] is True
    assert set(d) == {"mae", "corr", "corr_defined", "acc2", "f1", "acc5", "acc7",
                      "n_binary_included", "n_binary_excluded"}


def test_average_reports_means_and_counts():
    a = compute_metrics([1.0, 2.0], [1.0, 4.0])
    b = compute_metrics([0.0, 3.0], [1.0, 3.0])
    avg = average_reports([a, b])
    assert avg.mae == pytest.approx((a.mae + b.mae) / 2)
    assert avg.n_binary_included == a.n_binary_included + b.n_binary_included
    assert avg.corr_defined


def test_average_reports_undefined_corr_poisons_mean():
    a = compute_metrics([1.0, 2.0], [1.0, 4.0])
    b = compute_metrics([1.0, 1.0], [1.0, 4.0])  # constant pred, corr undefined
    avg = average_reports([a, b])
    assert not avg.corr_defined and math.isnan(avg.corr)
    with pytest.raises(ParameterError):
        average_reports([])
