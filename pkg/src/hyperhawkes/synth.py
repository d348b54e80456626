"""Synthetic scenarios: trigger-memory, call-response, homogeneous Poisson.

Marks: trigger-memory uses {0: blue, 1: orange, 2: green};
call-response uses {0: call (blue), 1: response (orange), 2: green}.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, Sequence

BLUE, ORANGE, GREEN = 0, 1, 2


@dataclass
class TriggerMemoryConfig:
    rate: float = 1.0 / 3.0
    mark_probs: tuple = (0.4, 0.4, 0.2)
    delay_mean: float = 10.0
    delay_var: float = 0.01
    horizon: float = 100.0
    n_sequences: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.rate <= 0 or self.delay_var < 0 or self.horizon <= 0:
            raise ValueError("rate and horizon must be positive, delay_var non-negative")
        if abs(sum(self.mark_probs) - 1.0) > 1e-9 or min(self.mark_probs) < 0:
            raise ValueError("mark_probs must be a probability vector")


@dataclass
class CallResponseConfig:
    green_rate: float = 0.5
    call_rate: float = 1.0 / 15.0
    delay_mean: float = 10.0
    delay_var: float = 0.01
    horizon: float = 100.0
    n_sequences: int = 2000
    seed: int = 0

    def __post_init__(self):
        if min(self.green_rate, self.call_rate) <= 0 or self.horizon <= 0 or self.delay_var < 0:
            raise ValueError("rates and horizon must be positive")


def sequence_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, sequence index)."""
    return np.random.default_rng([int(seed), int(index)])


def sample_homogeneous_poisson(rate: float, T: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        raise ValueError("rate must be positive")
    times = []
    t = rng.exponential(1.0 / rate)
    while t < T:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    return np.array(times, dtype=np.float64)


def _positive_delay(rng, mean, var):
    std = np.sqrt(var)
    while True:
        x = rng.normal(mean, std)
        if x > 0:
            return x


def trigger_memory_sequence(cfg: TriggerMemoryConfig, rng: np.random.Generator) -> Sequence:
    times, marks = [], []
    t = 0.0
    probs = np.asarray(cfg.mark_probs, dtype=np.float64)
    while True:
        t += rng.exponential(1.0 / cfg.rate)
        if t >= cfg.horizon:
            break
        k = int(rng.choice(3, p=probs))
        times.append(t)
        marks.append(k)
        if k != GREEN:
            continue
        # trigger: the next event repeats the mark preceding the trigger
        if len(marks) >= 2:
            follow = marks[-2]
        else:
            follow = int(rng.integers(2))  # nothing to repeat: blue or orange
        t_follow = t + _positive_delay(rng, cfg.delay_mean, cfg.delay_var)
        if t_follow >= cfg.horizon:
            break
        t = t_follow
        times.append(t)
        marks.append(follow)
    return Sequence(np.array(times), np.array(marks, dtype=np.int64), cfg.horizon)


def gen_trigger_memory(cfg: TriggerMemoryConfig) -> Dataset:
    seqs = [trigger_memory_sequence(cfg, sequence_rng(cfg.seed, i)) for i in range(cfg.n_sequences)]
    return Dataset(seqs, 3, {"scenario": "trigger-memory", "config": asdict(cfg)})


def call_response_sequence(cfg: CallResponseConfig, rng: np.random.Generator) -> Sequence:
    green = sample_homogeneous_poisson(cfg.green_rate, cfg.horizon, rng)
    chain_t, chain_k = [], []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / cfg.call_rate)
        if t >= cfg.horizon:
            break
        chain_t.append(t)
        chain_k.append(BLUE)
        t += _positive_delay(rng, cfg.delay_mean, cfg.delay_var)
        if t >= cfg.horizon:
            break
        chain_t.append(t)
        chain_k.append(ORANGE)
    times = np.concatenate([green, np.array(chain_t)])
    marks = np.concatenate([np.full(len(green), GREEN), np.array(chain_k, dtype=np.int64)])
    order = np.argsort(times, kind="stable")
    return Sequence(times[order], marks[order].astype(np.int64), cfg.horizon)


def gen_call_response(cfg: CallResponseConfig) -> Dataset:
    seqs = [call_response_sequence(cfg, sequence_rng(cfg.seed, i)) for i in range(cfg.n_sequences)]
    return Dataset(seqs, 3, {"scenario": "call-response", "config": asdict(cfg)})


def gen_poisson(rates, horizon: float, n_sequences: int, seed: int = 0) -> Dataset:
    """Independent homogeneous Poisson streams, one per mark, superposed."""
    rates = np.asarray(rates, dtype=np.float64)
    total = rates.sum()
    seqs = []
    for i in range(n_sequences):
        rng = sequence_rng(seed, i)
        t = sample_homogeneous_poisson(total, horizon, rng)
        k = rng.choice(len(rates), size=len(t), p=rates / total) if len(t) else np.zeros(0, int)
        seqs.append(Sequence(t, k, horizon))
    return Dataset(seqs, len(rates), {"scenario": "poisson", "rates": rates.tolist()})


SCENARIOS = {
    "trigger-memory": (TriggerMemoryConfig, gen_trigger_memory),
    "call-response": (CallResponseConfig, gen_call_response),
}
