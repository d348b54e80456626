"""The two synthetic experiments: data, training runs and their probes.

Shared by the scripts in ``scripts/`` and the acceptance suite so both
exercise the same settings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import PoissonModel
from .evaluation import predict_next_mark
from .interpret import lifetime_influence, record_trace, retrospective_attribution
from .model import HHP, HHPConfig, dataset_log_likelihood, empirical_base_rate
from .synth import BLUE, GREEN, ORANGE, CallResponseConfig, TriggerMemoryConfig, gen_call_response, \
    gen_trigger_memory
from .train import TrainConfig, train


@dataclass
class ExperimentConfig:
    scenario: str = "trigger-memory"
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 300
    seed: int = 0
    d: int = 32
    h: int = 8
    l: int = 1
    r: int = 2
    lr: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    mc_per_interval: int = 20
    time_budget_s: float | None = 600.0


@dataclass
class ExperimentData:
    train: object
    val: object
    test: object


@dataclass
class RunResult:
    ablation: str
    model: HHP
    test_ll: float
    epochs: int
    seconds: float
    history: list = field(default_factory=list)


def make_data(cfg: ExperimentConfig) -> ExperimentData:
    """Train/val/test sets from disjoint seed streams."""
    def gen(n, offset):
        if cfg.scenario == "trigger-memory":
            return gen_trigger_memory(TriggerMemoryConfig(n_sequences=n, seed=cfg.seed + offset))
        if cfg.scenario == "call-response":
            return gen_call_response(CallResponseConfig(n_sequences=n, seed=cfg.seed + offset))
        raise ValueError(f"unknown scenario {cfg.scenario!r}")
    return ExperimentData(gen(cfg.n_train, 0), gen(cfg.n_val, 1), gen(cfg.n_test, 2))


def poisson_baseline_ll(data: ExperimentData) -> float:
    """Held-out per-event LL of the fitted homogeneous Poisson + categorical model."""
    return float(PoissonModel.fit(data.train).loglik_terms(data.test)[0].mean())


def run(cfg: ExperimentConfig, data: ExperimentData, ablation: str = "full") -> RunResult:
    K = data.train.num_marks
    d = K if ablation == "not_latent" else cfg.d
    model = HHP.create(HHPConfig(K=K, d=d, h=cfg.h, l=cfg.l, r=cfg.r, ablation=ablation), seed=cfg.seed,
                       base_rate=empirical_base_rate(data.train))
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, max_epochs=cfg.max_epochs, patience=cfg.patience,
                       mc_per_interval=cfg.mc_per_interval, seed=cfg.seed, time_budget_s=cfg.time_budget_s)
    start = time.perf_counter()
    res = train(model, data.train, data.val, tcfg)
    seconds = time.perf_counter() - start
    test_ll = dataset_log_likelihood(res.model, data.test, cfg.mc_per_interval, cfg.seed)[0]
    return RunResult(ablation, res.model, test_ll, len(res.history), seconds, res.history)


# ---------------------------------------------------------------------------
# trigger-memory probes


def trigger_events(seq):
    """(index, repeated mark) of triggers that have a preceding event and a follow-up.

    A green event is a trigger unless it is itself a forced follow-up.
    """
    out, follow = [], False
    for i, k in enumerate(seq.marks):
        trig = k == GREEN and not follow
        if trig and i >= 1 and i + 1 < len(seq):
            out.append((i, int(seq.marks[i - 1])))
        follow = trig
    return out


@dataclass
class SpikeReport:
    ratios: np.ndarray          # lambda_k(t + late) / lambda_k(t + early) per trigger
    follow_correct: np.ndarray  # predicted mark at the follow-up time == true mark

    @property
    def fraction_spiking(self) -> float:
        return float(np.mean(self.ratios >= 3.0))

    @property
    def follow_accuracy(self) -> float:
        return float(np.mean(self.follow_correct))


def spike_report(model, ds, early: float = 5.0, late: float = 10.0) -> SpikeReport:
    """Intensity of the to-be-repeated mark after each held-out trigger.

    Nothing happens between a trigger and its follow-up, so the runner
    conditioned on the history up to the trigger gives the exact intensity.
    """
    ratios, correct = [], []
    for seq in ds:
        targets = dict(trigger_events(seq))
        runner = model.runner()
        for i, (t, k) in enumerate(zip(seq.times, seq.marks)):
            runner.observe(t, k)
            if i in targets:
                lam = runner.intensity([early, late])[:, targets[i]]
                ratios.append(lam[1] / lam[0])
                correct.append(predict_next_mark(runner, seq.times[i + 1]) == seq.marks[i + 1])
    return SpikeReport(np.array(ratios), np.array(correct, dtype=bool))


# ---------------------------------------------------------------------------
# call-response probes


@dataclass
class CallResponseReport:
    median_lifetime_call: float
    median_lifetime_green: float
    recent_call_top: np.ndarray  # per response: latest call has the largest positive attribution

    @property
    def fraction_recent_call_top(self) -> float:
        return float(np.mean(self.recent_call_top))


def call_response_report(model, ds, grid_per_interval: int = 20) -> CallResponseReport:
    calls, greens, top = [], [], []
    for seq in ds:
        if len(seq) == 0:
            continue
        trace = record_trace(model, seq)
        life = lifetime_influence(model, seq, grid_per_interval, trace)
        calls.extend(life[seq.marks == BLUE])
        greens.extend(life[seq.marks == GREEN])
        for i in np.flatnonzero(seq.marks == ORANGE):
            prior_calls = np.flatnonzero(seq.marks[:i] == BLUE)
            if prior_calls.size == 0:
                continue
            scores = retrospective_attribution(model, seq, int(i), trace)
            j = int(np.argmax(scores))
            top.append(j == prior_calls[-1] and scores[j] > 0)
    return CallResponseReport(float(np.median(calls)), float(np.median(greens)), np.array(top, dtype=bool))
