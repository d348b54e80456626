"""Qualitative checks on trained models from the two synthetic experiments."""

import pytest

from hyperhawkes.experiments import ExperimentConfig, call_response_report, make_data, run, spike_report

pytestmark = pytest.mark.slow


def test_trigger_memory_follow_up_mark_is_predicted(scenario1):
    rep = spike_report(scenario1["full"].model, scenario1["data"].test)
    assert rep.follow_accuracy > 0.5, rep.follow_accuracy


@pytest.fixture(scope="module")
def call_response():
    cfg = ExperimentConfig(scenario="call-response", n_train=1000, n_val=100, n_test=100, time_budget_s=240.0)
    data = make_data(cfg)
    return call_response_report(run(cfg, data).model, data.test)


def test_calls_outlive_green_noise(call_response):
    assert call_response.median_lifetime_call > call_response.median_lifetime_green


def test_responses_attributed_to_latest_call(call_response):
    assert call_response.recent_call_top.size > 50
    assert call_response.fraction_recent_call_top > 0.5
