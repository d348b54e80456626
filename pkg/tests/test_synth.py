import numpy as np

from hyperhawkes.data import validate_sequence
from hyperhawkes.synth import (BLUE, GREEN, ORANGE, CallResponseConfig, TriggerMemoryConfig, call_response_sequence,
                               gen_call_response, gen_poisson, gen_trigger_memory, sample_homogeneous_poisson,
                               sequence_rng)


def test_homogeneous_poisson_mean_count():
    rate, T, n = 1 / 3, 100.0, 10_000
    counts = [len(sample_homogeneous_poisson(rate, T, sequence_rng(7, i))) for i in range(n)]
    assert abs(np.mean(counts) - rate * T) <= 3 * np.sqrt(rate * T / n)


def test_homogeneous_poisson_edge_cases():
    assert len(sample_homogeneous_poisson(1.0, 1e-12, np.random.default_rng(0))) == 0
    a = sample_homogeneous_poisson(2.0, 10.0, np.random.default_rng(3))
    b = sample_homogeneous_poisson(2.0, 10.0, np.random.default_rng(3))
    assert np.array_equal(a, b) and np.all(np.diff(a) > 0)


def _forced_flags(marks):
    forced = np.zeros(len(marks), dtype=bool)
    for i in range(len(marks) - 1):
        if marks[i] == GREEN and not forced[i]:
            forced[i + 1] = True
    return forced


def test_trigger_memory_dataset():
    ds = gen_trigger_memory(TriggerMemoryConfig(n_sequences=2000, seed=0))
    assert len(ds) == 2000 and ds.num_marks == 3
    assert all(s.t_end == 100.0 for s in ds)
    assert all(validate_sequence(s, 3) == [] for s in ds)
    gaps, greens, free = [], 0, 0
    for s in ds:
        forced = _forced_flags(s.marks)
        for i in range(len(s) - 1):
            if s.marks[i] == GREEN and not forced[i]:
                # the memory rule, checked exactly
                if i >= 1:
                    assert s.marks[i + 1] == s.marks[i - 1]
                else:
                    assert s.marks[i + 1] in (BLUE, ORANGE)
                gaps.append(s.times[i + 1] - s.times[i])
        greens += int(np.sum((s.marks == GREEN) & ~forced))
        free += int(np.sum(~forced))
    assert abs(greens / free - 0.2) <= 0.01
    gaps = np.array(gaps)
    assert abs(gaps.mean() - 10.0) <= 3 * 0.1 / np.sqrt(gaps.size)
    assert abs(gaps.std() - 0.1) <= 0.01


def test_trigger_memory_deterministic():
    a = gen_trigger_memory(TriggerMemoryConfig(n_sequences=5, seed=3))
    b = gen_trigger_memory(TriggerMemoryConfig(n_sequences=5, seed=3))
    assert all(x == y for x, y in zip(a, b))


def test_call_response_structure():
    ds = gen_call_response(CallResponseConfig(n_sequences=2000, seed=1))
    greens = []
    for s in ds:
        assert validate_sequence(s, 3) == []
        chain = s.marks[s.marks != GREEN]
        # strict alternation starting with a call
        assert np.all(chain[0::2] == BLUE) and np.all(chain[1::2] == ORANGE)
        calls, resp = s.times[s.marks == BLUE], s.times[s.marks == ORANGE]
        assert len(calls) - len(resp) in (0, 1)
        assert np.all(resp > calls[: len(resp)])
        greens.append(np.sum(s.marks == GREEN))
    assert abs(np.mean(greens) - 50) <= 3 * np.sqrt(50 / len(ds))


def test_call_response_zero_horizon():
    s = call_response_sequence(CallResponseConfig(horizon=1e-12), np.random.default_rng(0))
    assert len(s) == 0


def test_gen_poisson_rates():
    ds = gen_poisson([0.5, 1.5], 100.0, 500, seed=2)
    counts = np.bincount(np.concatenate([s.marks for s in ds]), minlength=2)
    T = 100.0 * 500
    assert np.all(np.abs(counts - np.array([0.5, 1.5]) * T) <= 4 * np.sqrt(np.array([0.5, 1.5]) * T))
