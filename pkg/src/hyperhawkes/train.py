"""Adam training with early stopping on validation log-likelihood."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import HHP, batch_loss, check_model_data, dataset_log_likelihood

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    mc_per_interval: int = 20
    clip_norm: float = 10.0
    seed: int = 0
    trainable: tuple | None = None  # None trains every parameter
    time_budget_s: float | None = None

    def __post_init__(self):
        for name in ("lr", "batch_size", "max_epochs", "mc_per_interval", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> dict:
        self.step_count += 1
        b1, b2, t = self.beta1, self.beta2, self.step_count
        out = dict(params)
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * b1 + (1 - b1) * g
            v = self.v.get(k, 0.0) * b2 + (1 - b2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            out[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, max_norm: float):
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


@dataclass
class EpochRecord:
    epoch: int
    train_ll: float
    val_ll: float
    wallclock_s: float


@dataclass
class TrainResult:
    model: HHP
    history: list
    best_epoch: int
    best_val_ll: float

    def write_history(self, path):
        write_history(self.history, path)


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_ll", "val_ll", "wallclock_s"])
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_ll), repr(rec.val_ll), f"{rec.wallclock_s:.3f}"])


def _norms(params):
    return ", ".join(f"{k}={np.linalg.norm(v):.3g}" for k, v in params.items())


def train(model: HHP, train_ds, val_ds, cfg: TrainConfig | None = None, history_path=None) -> TrainResult:
    """Minimise the negative mean per-event log-likelihood with Adam.

    Returns the parameters with the best validation log-likelihood. The
    validation estimate reuses one Monte-Carlo seed across epochs so epoch
    comparisons are not dominated by sampling noise.
    """
    cfg = cfg or TrainConfig()
    check_model_data(model, train_ds)
    check_model_data(model, val_ds)
    rng = np.random.default_rng(cfg.seed)
    names = list(model.params) if cfg.trainable is None else list(cfg.trainable)
    unknown = set(names) - set(model.params)
    if unknown:
        raise ValueError(f"unknown trainable parameters: {sorted(unknown)}")
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in model.params.items()}
    opt = Adam(cfg.lr)
    seqs = list(train_ds)
    mcfg = model.config

    def val_ll(p):
        return dataset_log_likelihood(HHP(mcfg, p), val_ds, cfg.mc_per_interval, cfg.seed)[0]

    best = val_ll(params)
    best_params, best_epoch = params, 0
    history, since_best = [], 0
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(seqs))
        lls, weights = [], []
        for b, lo in enumerate(range(0, len(seqs), cfg.batch_size)):
            batch = [seqs[j] for j in order[lo:lo + cfg.batch_size]]
            frozen = {k: v for k, v in params.items() if k not in names}

            def objective(P):
                return batch_loss(mcfg, {**frozen, **P}, batch, cfg.mc_per_interval, rng)

            loss, grads = ad.value_and_grad(objective, {k: params[k] for k in names})
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite loss/gradient at epoch {epoch}, batch {b}: "
                                    f"loss={loss}; parameter norms: {_norms(params)}")
            grads, _ = clip_by_global_norm(dict(grads), cfg.clip_norm)
            params = opt.step(params, grads)
            lls.append(-loss)
            weights.append(len(batch))
        vll = val_ll(params)
        rec = EpochRecord(epoch, float(np.average(lls, weights=weights)), vll, time.perf_counter() - start)
        history.append(rec)
        log.info("epoch %d train_ll %.4f val_ll %.4f (%.1fs)", epoch, rec.train_ll, vll, rec.wallclock_s)
        if vll > best:
            best, best_params, best_epoch, since_best = vll, params, epoch, 0
        else:
            since_best += 1
        if history_path is not None:
            write_history(history, history_path)
        if since_best >= cfg.patience:
            break
        if cfg.time_budget_s is not None and rec.wallclock_s > cfg.time_budget_s:
            log.info("time budget reached after epoch %d", epoch)
            break
    return TrainResult(HHP(mcfg, best_params), history, best_epoch, best)
