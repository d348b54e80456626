"""Next-event prediction, time-rescaling PIT values and the evaluation report.

Every function here talks to models through ``model.runner()`` and
``model.loglik_terms(...)``, so HHP, the linear Hawkes baseline and the
Poisson baseline are evaluated by the same code.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .synth import sequence_rng

GRID = 512
SURVIVAL_TOL = 1e-4
S_MAX_CAP = 1e6
PCE_LEVELS = 50
ECE_BINS = 10


@dataclass
class TimePrediction:
    mean: float
    s_max: float
    truncated: bool


def _survival(runner, s_max: float):
    s = np.concatenate([[0.0], np.geomspace(s_max * 1e-7, s_max, GRID)])
    lam = runner.intensity(s).sum(axis=1)
    return s, np.exp(-cumulative_trapezoid(lam, s, initial=0.0))


def predict_next_time(runner, s_max: float | None = None) -> TimePrediction:
    """Expected waiting time until the next event after the runner's last event.

    Survival is integrated on a geometric grid; ``s_max`` is doubled until the
    survival drops below ``SURVIVAL_TOL``. The tiny mass left beyond ``s_max``
    is placed at ``s_max``.
    """
    if s_max is None:
        lam0 = float(runner.intensity([0.0]).sum())
        s_max = 10.0 / lam0 if lam0 > 0 else 1.0
        s_max = min(max(s_max, 1e-6), S_MAX_CAP)
    while True:
        s, S = _survival(runner, s_max)
        if S[-1] < SURVIVAL_TOL:
            break
        if s_max >= S_MAX_CAP:
            return TimePrediction(s_max, s_max, True)
        s_max = min(2.0 * s_max, S_MAX_CAP)
    mid = 0.5 * (s[1:] + s[:-1])
    mean = float(np.sum(mid * (S[:-1] - S[1:])) + s[-1] * S[-1])
    return TimePrediction(mean, s_max, False)


def predict_next_mark(runner, t_next: float) -> int:
    """argmax_k of the intensity just before ``t_next``; lowest index wins ties."""
    lam = runner.intensity([t_next - runner.t_last])[0]
    return int(np.argmax(lam))


def mark_probabilities(runner, t_next: float) -> np.ndarray:
    lam = runner.intensity([t_next - runner.t_last])[0]
    tot = lam.sum()
    return lam / tot if tot > 0 else np.full(lam.size, 1.0 / lam.size)


def sequence_pit(model, seq, rng, mc_per_interval: int = 20) -> np.ndarray:
    runner = model.runner()
    out = np.empty(len(seq))
    for i, (t, k) in enumerate(zip(seq.times, seq.marks)):
        comp = runner.interval_compensator(t - runner.t_last, rng, mc_per_interval)
        out[i] = -np.expm1(-comp)
        runner.observe(t, k)
    return out


def pit_values(model, dataset, mc_per_interval: int = 20, seed: int = 0) -> np.ndarray:
    """u_i = 1 - exp(-Lambda(t_{i-1}, t_i)) for every event, in dataset order."""
    parts = [sequence_pit(model, s, sequence_rng(seed, i), mc_per_interval) for i, s in enumerate(dataset)]
    return np.concatenate(parts) if parts else np.zeros(0)


def pce(u) -> float:
    """Mean absolute gap between the empirical CDF of ``u`` and the identity."""
    u = np.sort(np.asarray(u, dtype=np.float64))
    if u.size == 0:
        return float("nan")
    q = (np.arange(PCE_LEVELS) + 0.5) / PCE_LEVELS
    ecdf = np.searchsorted(u, q, side="right") / u.size
    return float(np.mean(np.abs(ecdf - q)))


def ece(confidence, correct, bins: int = ECE_BINS) -> float:
    confidence = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    if confidence.size == 0:
        return float("nan")
    idx = np.minimum((confidence * bins).astype(int), bins - 1)
    total = 0.0
    for b in range(bins):
        sel = idx == b
        if sel.any():
            total += sel.sum() * abs(correct[sel].mean() - confidence[sel].mean())
    return float(total / confidence.size)


@dataclass
class EvalConfig:
    mc_per_interval: int = 20
    seed: int = 0
    workers: int | None = None


@dataclass
class MetricsReport:
    ll_total: float
    ll_time: float
    ll_mark: float
    rmse: float
    accuracy: float
    pce: float
    ece: float
    n_events: int
    truncated: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass
class _SeqStats:
    sq_err: np.ndarray
    correct: np.ndarray
    confidence: np.ndarray
    pit: np.ndarray
    truncated: int


def _sequence_stats(model, seq, rng, mc: int) -> _SeqStats:
    runner = model.runner()
    n = len(seq)
    sq_err, correct, conf, pit = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    truncated = 0
    for i, (t, k) in enumerate(zip(seq.times, seq.marks)):
        dt = t - runner.t_last
        pred = predict_next_time(runner)
        truncated += pred.truncated
        sq_err[i] = (pred.mean - dt) ** 2
        p = mark_probabilities(runner, t)
        correct[i] = float(predict_next_mark(runner, t) == k)
        conf[i] = p.max()
        pit[i] = -np.expm1(-runner.interval_compensator(dt, rng, mc))
        runner.observe(t, k)
    return _SeqStats(sq_err, correct, conf, pit, truncated)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("HHP_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(model, dataset, cfg: EvalConfig | None = None) -> MetricsReport:
    cfg = cfg or EvalConfig()
    total, time, mark = model.loglik_terms(dataset, cfg.mc_per_interval, cfg.seed)
    seqs = list(dataset)
    # PIT draws use a stream disjoint from the likelihood evaluation
    jobs = [(s, sequence_rng(cfg.seed + 1, i)) for i, s in enumerate(seqs)]
    workers = cfg.workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            stats = list(pool.map(lambda a: _sequence_stats(model, a[0], a[1], cfg.mc_per_interval), jobs))
    else:
        stats = [_sequence_stats(model, s, r, cfg.mc_per_interval) for s, r in jobs]
    cat = lambda name: np.concatenate([getattr(st, name) for st in stats]) if stats else np.zeros(0)
    sq_err, correct, conf, pit = cat("sq_err"), cat("correct"), cat("confidence"), cat("pit")
    n = int(sq_err.size)
    ll_time, ll_mark = float(np.mean(time)), float(np.mean(mark))
    return MetricsReport(
        ll_total=ll_time + ll_mark,
        ll_time=ll_time,
        ll_mark=ll_mark,
        rmse=float(np.sqrt(sq_err.mean())) if n else float("nan"),
        accuracy=float(correct.mean()) if n else float("nan"),
        pce=pce(pit),
        ece=ece(conf, correct),
        n_events=n,
        truncated=int(sum(st.truncated for st in stats)),
    )
