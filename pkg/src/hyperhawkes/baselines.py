"""Classical baselines: marked linear Hawkes (exponential kernel) and Poisson.

The linear Hawkes process uses a per-output decay ``beta_k``::

    lambda^k(t) = mu_k + sum_{t_i < t} alpha[k, k_i] exp(-beta_k (t - t_i))

which keeps both the recurrence and the compensator in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import autodiff as ad
from .data import Dataset, Sequence


@dataclass
class LHPParams:
    mu: np.ndarray     # (K,)
    alpha: np.ndarray  # (K, K); column j is the impulse of a mark-j event
    beta: np.ndarray   # (K,)

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        K = self.mu.size
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(K, K)
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=np.float64), (K,)).copy()
        if np.any(self.mu < 0) or np.any(self.alpha < 0) or np.any(self.beta <= 0):
            raise ValueError("LHP needs mu >= 0, alpha >= 0, beta > 0")

    @property
    def K(self):
        return self.mu.size

    def runner(self):
        return LHPRunner(self)

    def to_log(self) -> dict:
        return {"log_mu": np.log(self.mu), "log_alpha": np.log(self.alpha), "log_beta": np.log(self.beta)}

    @classmethod
    def from_log(cls, theta) -> "LHPParams":
        return cls(np.exp(theta["log_mu"]), np.exp(theta["log_alpha"]), np.exp(theta["log_beta"]))

    def loglik_terms(self, ds, mc_per_interval=None, seed=0):
        return lhp_loglik_terms(self, ds)


def lhp_intensity(params: LHPParams, times, marks, t: float) -> np.ndarray:
    """Direct O(N) sum over history events strictly before ``t``."""
    times = np.asarray(times, dtype=np.float64)
    marks = np.asarray(marks, dtype=np.int64)
    lam = params.mu.copy()
    for ti, ki in zip(times, marks):
        if ti < t:
            lam += params.alpha[:, ki] * np.exp(-params.beta * (t - ti))
    return lam


class LHPRunner:
    """Markovian evaluation of the LHP along a growing history."""

    def __init__(self, params: LHPParams):
        self.p = params
        self.excite = np.zeros(params.K)  # right limit of sum of kernels at t_last
        self.t_last = 0.0

    def intensity(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
        return self.p.mu + self.excite * np.exp(-self.p.beta * s)

    def upper_bound(self, s0: float) -> float:
        # intensity is non-increasing between events
        return float(self.intensity([s0]).sum() + self.p.mu.sum())

    def compensator(self, s: float) -> float:
        """Exact integral of total intensity over (t_last, t_last + s]."""
        return float(self.p.mu.sum() * s + np.sum(self.excite / self.p.beta * (1.0 - np.exp(-self.p.beta * s))))

    def interval_compensator(self, dt, rng=None, n=None) -> float:
        return self.compensator(dt)

    def observe(self, t: float, k: int):
        dt = t - self.t_last
        if dt <= 0:
            raise ValueError("events must be strictly increasing")
        self.excite = self.excite * np.exp(-self.p.beta * dt) + self.p.alpha[:, int(k)]
        self.t_last = t


def _lhp_pack(seqs):
    B = len(seqs)
    N = max(1, max(len(s) for s in seqs))
    dt = np.zeros((B, N))
    ev = np.zeros((B, N))
    marks = np.zeros((B, N), dtype=np.int64)
    remain = np.zeros((B, N))
    T = np.array([s.t_end for s in seqs])
    for b, s in enumerate(seqs):
        n = len(s)
        dt[b, :n] = np.diff(s.times, prepend=0.0)
        ev[b, :n] = 1.0
        marks[b, :n] = s.marks
        remain[b, :n] = s.t_end - s.times
    return dt, ev, marks, remain, T


def lhp_loglik_batch(theta, seqs, K: int):
    """Exact log-likelihood per sequence (un-normalised), differentiable in log-parameters."""
    dt, ev, marks, remain, T = _lhp_pack(seqs)
    mu = ad.exp(theta["log_mu"])
    alpha = ad.exp(theta["log_alpha"])
    beta = ad.exp(theta["log_beta"])
    onehot = np.eye(K)[marks] * ev[..., None]
    B, N = dt.shape
    excite = np.zeros((B, K))
    loglam = 0.0
    comp = ad.mul(ad.sum(mu), T)
    for i in range(N):
        decay = ad.exp(ad.neg(ad.mul(beta, dt[:, i:i + 1])))
        left = ad.mul(excite, decay)
        lam = ad.add(mu, left)
        evi = ev[:, i]
        loglam = ad.add(loglam, ad.log(ad.add(ad.sum(ad.mul(lam, onehot[:, i, :]), axis=-1), 1.0 - evi)))
        jump = ad.matvec(alpha, onehot[:, i, :])
        excite = ad.add(left, jump)
        tail = ad.sub(1.0, ad.exp(ad.neg(ad.mul(beta, remain[:, i:i + 1]))))
        comp = ad.add(comp, ad.sum(ad.mul(ad.div(jump, beta), tail), axis=-1))
    return ad.sub(loglam, comp)


def lhp_loglik_terms(params: LHPParams, ds):
    """Per-sequence per-event (total, time, mark) log-likelihood, exact."""
    tot, tim, mar = [], [], []
    for s in ds:
        r = params.runner()
        lk = lt = 0.0
        for t, k in zip(s.times, s.marks):
            lam = r.intensity([t - r.t_last])[0]
            lk += np.log(lam[k])
            lt += np.log(lam.sum())
            r.observe(t, k)
        comp = params.mu.sum() * s.t_end + float(np.sum(
            params.alpha[:, s.marks].T / params.beta * (1 - np.exp(-params.beta * (s.t_end - s.times)[:, None])))) \
            if len(s) else params.mu.sum() * s.t_end
        n = max(len(s), 1)
        tot.append((lk - comp) / n)
        tim.append((lt - comp) / n)
        mar.append((lk - lt) / n)
    return np.array(tot), np.array(tim), np.array(mar)


def lhp_log_likelihood(params: LHPParams, seq: Sequence) -> float:
    """Exact per-event log-likelihood of one sequence."""
    return float(lhp_loglik_terms(params, [seq])[0][0])


def fit_lhp(ds: Dataset, init: LHPParams | None = None, batch_size: int = 1000, maxiter: int = 500):
    """Maximum-likelihood fit over log-parameters with L-BFGS and tape gradients."""
    K = ds.num_marks
    if init is None:
        rate = ds.n_events / sum(s.t_end for s in ds) / K
        init = LHPParams(np.full(K, rate / 2), np.full((K, K), 0.5 / K), np.ones(K))
    theta0 = init.to_log()
    keys = list(theta0)
    shapes = [theta0[k].shape for k in keys]
    sizes = [theta0[k].size for k in keys]
    n_events = max(ds.n_events, 1)
    seqs = list(ds)

    def unflat(x):
        out, o = {}, 0
        for k, sh, n in zip(keys, shapes, sizes):
            out[k] = x[o:o + n].reshape(sh)
            o += n
        return out

    def objective(x):
        theta = unflat(x)
        total, grad = 0.0, np.zeros_like(x)
        for start in range(0, len(seqs), batch_size):
            chunk = seqs[start:start + batch_size]
            v, g = ad.value_and_grad(lambda th: ad.neg(ad.sum(lhp_loglik_batch(th, chunk, K))), theta)
            total += v
            grad += np.concatenate([g[k].ravel() for k in keys])
        return total / n_events, grad / n_events

    x0 = np.concatenate([theta0[k].ravel() for k in keys])
    res = minimize(objective, x0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
    return LHPParams.from_log(unflat(res.x)), res


@dataclass
class PoissonModel:
    """Homogeneous Poisson process with a categorical mark distribution."""

    rates: np.ndarray

    def __post_init__(self):
        self.rates = np.atleast_1d(np.asarray(self.rates, dtype=np.float64))

    @property
    def K(self):
        return self.rates.size

    @classmethod
    def fit(cls, ds: Dataset) -> "PoissonModel":
        counts = np.bincount(np.concatenate([s.marks for s in ds] + [np.zeros(0, int)]),
                             minlength=ds.num_marks).astype(float)
        total_time = sum(s.t_end for s in ds)
        return cls(np.maximum(counts, 1e-12) / total_time)

    def runner(self):
        return _ConstantRunner(self.rates)

    def loglik_terms(self, ds, mc_per_interval=None, seed=0):
        tot, tim, mar = [], [], []
        lam = self.rates.sum()
        for s in ds:
            n = max(len(s), 1)
            comp = lam * s.t_end
            lk = float(np.log(self.rates[s.marks]).sum())
            lt = len(s) * np.log(lam)
            tot.append((lk - comp) / n)
            tim.append((lt - comp) / n)
            mar.append((lk - lt) / n)
        return np.array(tot), np.array(tim), np.array(mar)


class _ConstantRunner:
    def __init__(self, rates):
        self.rates = rates
        self.t_last = 0.0

    def intensity(self, s):
        s = np.asarray(s, dtype=np.float64).reshape(-1)
        return np.broadcast_to(self.rates, (s.size, self.rates.size)).copy()

    def upper_bound(self, s0):
        return float(self.rates.sum())

    def interval_compensator(self, dt, rng=None, n=None):
        return float(self.rates.sum() * dt)

    def observe(self, t, k):
        if t <= self.t_last:
            raise ValueError("events must be strictly increasing")
        self.t_last = t


def hhp_from_lhp(params: LHPParams):
    """An HHP whose intensity equals the LHP exactly.

    Uses the d = K ablation with the identity readout, no rotation and real
    per-coordinate decays ``beta``, so ``x(t)`` is the LHP excitation vector.
    """
    from .model import HHP, HHPConfig

    K = params.K
    cfg = HHPConfig(K=K, d=K, h=2, l=1, r=1, ablation="not_latent", readout="identity")
    model = HHP.create(cfg, seed=0)
    model.params.update({
        "const_angles": np.zeros(cfg.n_angles),
        "const_decay": ad.inverse_softplus(params.beta),
        "log_re_u": np.zeros(K),
        "im_u": np.zeros(K),
        "alpha": params.alpha.copy(),
        "mu": params.mu.copy(),
    })
    return model
