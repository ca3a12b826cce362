import math

import numpy as np
import pytest

from srkrp.analysis import (
    average_weight,
    cost_model,
    empirical_vs_approx_report,
    failure_prob_approx,
    format_table,
    single_weight_full_rank_prob,
    zero_column_prob_approx,
)
from srkrp.campaign import CampaignResult
from srkrp.codec import SystemConfig
from srkrp.errors import ParameterError

# 50-digit mpmath evaluations of 1 - (1 - (1 - w/K)^rows)^K
APPROX_K64_LN64 = 0.5827990932723754432248906
APPROX_K64_W9 = 0.00391773420273185474271046


def test_spot_values_against_high_precision():
    assert failure_prob_approx(64, 64, math.log(64)) == pytest.approx(APPROX_K64_LN64, rel=1e-12)
    assert failure_prob_approx(64, 64, 9.0) == pytest.approx(APPROX_K64_W9, rel=1e-12)


def test_tiny_probabilities_keep_relative_accuracy():
    # first-order term K * (1 - w/K)^rows dominates when it is tiny
    K, rows, w = 64, 64, 30.0
    first = K * (1 - w / K) ** rows
    assert failure_prob_approx(K, rows, w) == pytest.approx(first, rel=1e-9)
    assert failure_prob_approx(K, rows, w) > 0


def test_dense_rows_never_leave_zero_columns():
    value = failure_prob_approx(16, 16, 16.0)
    assert value == 0.0 and math.copysign(1.0, value) == 1.0


@pytest.mark.parametrize("K, rows, w", [(0, 4, 1.0), (4, 3, 1.0), (4, 4, 5.0), (4, 4, 0.0)])
def test_approx_rejects_bad_arguments(K, rows, w):
    with pytest.raises(ParameterError):
        failure_prob_approx(K, rows, w)


def test_approx_matches_bernoulli_monte_carlo():
    K, rows, w = 16, 20, 2.5
    rng = np.random.default_rng(17)
    trials = 40_000
    mats = rng.random((trials, rows, K)) < w / K
    empirical = np.mean(~mats.any(axis=1).all(axis=1))
    p = failure_prob_approx(K, rows, w)
    assert abs(empirical - p) < 4 * math.sqrt(p * (1 - p) / trials)


def test_extra_rows_enter_the_exponent():
    K, rows, w, R, ws = 64, 64, 4.0, 2, 32.0
    col = (1 - w / K) ** rows * (1 - ws / K) ** R
    assert zero_column_prob_approx(K, rows, w, R, ws) == pytest.approx(1 - (1 - col) ** K, rel=1e-12)
    assert zero_column_prob_approx(K, rows, w) == failure_prob_approx(K, rows, w)
    assert zero_column_prob_approx(K, rows, w, 1, float(K)) == 0.0
    with pytest.raises(ParameterError):
        zero_column_prob_approx(K, rows, w, 1)


@pytest.mark.parametrize("K, expected", [(1, 1.0), (2, 0.5), (3, 2 / 9), (4, 0.09375)])
def test_single_weight_full_rank(K, expected):
    assert single_weight_full_rank_prob(K) == expected


def test_single_weight_large_K_is_continuous():
    exact = single_weight_full_rank_prob(170)
    via_log = math.exp(math.lgamma(171) - 170 * math.log(170))
    assert exact == pytest.approx(via_log, rel=1e-10)
    assert 0 < single_weight_full_rank_prob(400) < exact


def test_average_weight():
    assert average_weight(1.0, 64) == pytest.approx(math.log(64))
    assert average_weight(2.0, 64, log_base=2) == pytest.approx(12.0)


def test_cost_model_hand_example():
    cfg = SystemConfig(m=2, n=2, workers=6, stragglers=2, extra=1, r=4, s=4, t=4)
    report = cost_model(cfg, 16, 16)
    # dense code: u = v = u* = v* = 2
    assert report.compute_per_worker == 32.0
    assert report.comm_per_worker == 32.0
    assert report.encoding == 6 * (3 * 8 + 3 * 8) + 1 * (3 * 8 + 3 * 8)
    assert report.decoding == 16 * 5 + 4 * (4 * 3 + 4 * 1) * 16 * 16 / 16
    assert set(report.as_dict()) == {"compute_per_worker", "comm_per_worker", "encoding", "decoding"}


def test_cost_model_requires_shapes():
    with pytest.raises(ParameterError):
        cost_model(SystemConfig(m=1, n=1, workers=1), 1, 1)
    with pytest.raises(ParameterError):
        cost_model(SystemConfig(m=1, n=1, workers=1, r=2, s=2, t=2), 5, 1)


def _result(failures, approx):
    return CampaignResult(K=4, m=2, n=2, N=4, S=0, R=0, theta=None, w_avg=1.0, w_star_avg=0.0,
                          trials_run=100, failures=failures, zero_col_count=failures, approx_p_zc=approx, seed=0)


def test_report_rows_and_table():
    rows = empirical_vs_approx_report([_result(50, 0.25), _result(0, 0.0)])
    assert rows[0]["P_f"] == 0.5 and rows[0]["ratio"] == 2.0
    assert math.isnan(rows[1]["ratio"])
    table = format_table(rows)
    lines = table.splitlines()
    assert len(lines) == 3 and lines[0].split()[0] == "K"
    with pytest.raises(ParameterError):
        empirical_vs_approx_report([])
