import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hyperhawkes.data import Sequence
from hyperhawkes.model import HHP, HHPConfig

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_sequence(rng, K=3, n=None, t_end=20.0, max_n=30):
    n = int(rng.integers(0, max_n + 1)) if n is None else n
    times = np.sort(rng.uniform(0, t_end, n))
    times = times[np.concatenate([[True], np.diff(times) > 1e-9])] if n else times
    times = times[times > 0]
    return Sequence(times, rng.integers(0, K, times.size), t_end)


def random_model(seed, K=3, d=4, h=4, l=1, r=2, ablation="full", readout="softplus", scale=1.0):
    m = HHP.create(HHPConfig(K=K, d=d, h=h, l=l, r=r, ablation=ablation, readout=readout), seed=seed)
    rng = np.random.default_rng(seed + 1000)
    m.params["alpha"] = m.params["alpha"] * scale
    m.params["im_u"] = rng.uniform(-1, 1, d)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance results, filled by test_acceptance.py and printed at the end of the run
ACCEPTANCE = {}


def record_acceptance(number, name, passed, detail):
    ACCEPTANCE[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d} {name}: {detail}")


# scenario-1 training is shared by the acceptance and scenario tests
SCENARIO1_BUDGET_S = {"full": 480.0, "not_stateful": 240.0, "not_hyper": 240.0, "not_latent": 240.0}


@pytest.fixture(scope="session")
def scenario1():
    from hyperhawkes.experiments import ExperimentConfig, make_data, poisson_baseline_ll, run

    cfg = ExperimentConfig(scenario="trigger-memory")
    data = make_data(cfg)
    out = {"cfg": cfg, "data": data, "poisson_ll": poisson_baseline_ll(data)}
    for ablation, budget in SCENARIO1_BUDGET_S.items():
        cfg.time_budget_s = budget
        out[ablation] = run(cfg, data, ablation)
    return out
