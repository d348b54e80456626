"""Hyper Hawkes process: latent recurrence, intensity decode, Monte-Carlo likelihood.

Between events the complex latent state follows

    x(t) = V_i exp(D_i (t - t_i)) V_i^* x(t_i)

with ``(V_i, D_i)`` emitted by the hypernetwork after event ``i``; each event
adds the real impulse ``alpha[:, k]``. Intensities are
``readout(mu + W Re(x(t-)))`` with softplus as the production readout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import Dataset, Sequence, check_dataset
from .hypernet import (ABLATIONS, embed_event, emit_dynamics, gru_step, init_gru_params,
                       init_head_params, init_state, uses_gru)
from .unitary import apply_diag_exp, apply_factors, n_angles, rotation_factors

CHECKPOINT_FORMAT = "hyperhawkes-checkpoint/1"
READOUTS = ("softplus", "identity")


@dataclass
class HHPConfig:
    K: int
    d: int = 32
    h: int = 8
    l: int = 1
    r: int = 2
    ablation: str = "full"
    # "identity" is a test hook that removes the rectification
    readout: str = "softplus"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        if self.readout not in READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.K < 1 or self.h < 2 or self.l < 1 or self.r < 1:
            raise ValueError("need K >= 1, h >= 2, l >= 1, r >= 1")
        if self.ablation == "not_latent":
            if self.d != self.K:
                raise ValueError(f"not_latent requires d == K (got d={self.d}, K={self.K})")
        elif self.d < 2 or self.d % 2:
            raise ValueError(f"latent dimension d must be even, got {self.d}")

    @property
    def n_angles(self) -> int:
        return n_angles(self.d, self.r)


def readout_fn(kind: str):
    return ad.softplus if kind == "softplus" else (lambda z: z)


def readout_np(kind: str, z):
    return ad.softplus_np(z) if kind == "softplus" else np.asarray(z)


def init_params(cfg: HHPConfig, rng: np.random.Generator, base_rate=None) -> dict:
    """Fresh parameters. ``base_rate`` (per mark) sets ``mu`` so softplus(mu) matches it."""
    P = {}
    if uses_gru(cfg.ablation):
        P.update(init_gru_params(rng, cfg.K, cfg.h, cfg.l))
    P.update(init_head_params(rng, cfg.d, cfg.h, cfg.r, cfg.ablation))
    P["log_re_u"] = rng.uniform(np.log(0.01), 0.0, size=cfg.d)
    P["im_u"] = rng.uniform(-0.5, 0.5, size=cfg.d)
    P["alpha"] = rng.standard_normal((cfg.d, cfg.K)) * 0.1
    if cfg.ablation != "not_latent":
        P["W"] = rng.uniform(-1, 1, size=(cfg.K, cfg.d)) / np.sqrt(cfg.d)
    rate = np.full(cfg.K, 0.1) if base_rate is None else np.broadcast_to(base_rate, (cfg.K,))
    P["mu"] = ad.inverse_softplus(np.maximum(rate, 1e-6))
    return P


def empirical_base_rate(ds: Dataset) -> np.ndarray:
    """Events per unit time per mark, spread evenly over marks."""
    total_time = float(sum(s.t_end for s in ds))
    return np.full(ds.num_marks, ds.n_events / (ds.num_marks * total_time))


@dataclass
class HHP:
    config: HHPConfig
    params: dict

    @classmethod
    def create(cls, config: HHPConfig, seed: int = 0, base_rate=None) -> "HHP":
        return cls(config, init_params(config, np.random.default_rng(seed), base_rate))

    @property
    def K(self):
        return self.config.K

    def n_parameters(self) -> int:
        return int(sum(np.size(v) for v in self.params.values()))

    def copy(self) -> "HHP":
        return HHP(replace(self.config), {k: np.array(v, copy=True) for k, v in self.params.items()})

    # checkpoint -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "config": asdict(self.config),
            "n_parameters": self.n_parameters(),
            "params": {k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
                       for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HHP":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a checkpoint (format={doc.get('format')!r})")
        cfg = HHPConfig(**doc["config"])
        params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
        expected = init_params(cfg, np.random.default_rng(0))
        if set(expected) != set(params):
            raise ValueError(f"checkpoint parameters {sorted(params)} do not match config {sorted(expected)}")
        for k, v in expected.items():
            if v.shape != params[k].shape:
                raise ValueError(f"parameter {k}: shape {params[k].shape} != {v.shape}")
        return cls(cfg, params)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HHP":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def runner(self):
        return HHPRunner(self)

    def loglik_terms(self, ds, mc_per_interval: int = 20, seed: int = 0):
        return loglik_terms(self, ds, mc_per_interval, seed)


def configure_ablation(model: HHP, kind: str, seed: int = 0) -> HHP:
    """Variant of ``model`` with the given ablation.

    Shared parameters are carried over; replaced head outputs become fresh
    trainable constants. ``not_latent`` forces ``d = K`` and drops ``W``, so
    it is re-initialised apart from ``mu``.
    """
    cfg = model.config
    d = cfg.K if kind == "not_latent" else cfg.d
    new_cfg = replace(cfg, ablation=kind, d=d)
    fresh = init_params(new_cfg, np.random.default_rng(seed))
    for k, v in model.params.items():
        if k in fresh and np.shape(fresh[k]) == np.shape(v):
            fresh[k] = np.array(v, copy=True)
    return HHP(new_cfg, fresh)


# ---------------------------------------------------------------------------
# single-step building blocks


def propagate(angles, decay_re, decay_im, xr, xi, dt, d: int, r: int):
    """Left limit at ``t_i + dt`` from the right limit at ``t_i`` (complex as pairs)."""
    fac = rotation_factors(angles, d, r)
    yr, yi = apply_factors(fac, xr, xi, adjoint=True)
    yr, yi = apply_diag_exp(decay_re, decay_im, dt, yr, yi)
    return apply_factors(fac, yr, yi)


def apply_impulse(P, xr, xi, mark: int):
    K = ad.value(P["alpha"]).shape[1]
    if not 0 <= mark < K:
        raise IndexError(f"mark {mark} out of range [0, {K})")
    return ad.add(xr, P["alpha"][:, mark]), xi


def pre_activation(cfg: HHPConfig, P, xr):
    if cfg.ablation == "not_latent":
        return ad.add(P["mu"], xr)
    return ad.add(P["mu"], ad.matvec(P["W"], xr))


def intensity(cfg: HHPConfig, P, xr):
    """Marked intensity from the real part of a left-limit state."""
    return readout_fn(cfg.readout)(pre_activation(cfg, P, xr))


def readout_matrix(model: HHP) -> np.ndarray:
    if model.config.ablation == "not_latent":
        return np.eye(model.K)
    return np.asarray(model.params["W"])


# ---------------------------------------------------------------------------
# batched recurrence


@dataclass
class Trace:
    """Replay record of one sequence (numpy values)."""

    knots: np.ndarray       # (N+1,) interval starts: 0, t_1, ..., t_N
    t_end: float
    angles: np.ndarray      # (N+1, n_angles) dynamics of each interval
    decay_re: np.ndarray    # (N+1, d)
    decay_im: np.ndarray    # (N+1, d)
    x_right_re: np.ndarray  # (N+1, d) right limits at the knots
    x_right_im: np.ndarray
    lam_left: np.ndarray    # (N, K) intensities at event left limits
    marks: np.ndarray       # (N,)


@dataclass
class BatchResult:
    mark_sum: object   # per sequence: sum_i log lambda^{k_i}(t_i-)
    time_sum: object   # per sequence: sum_i log lambda(t_i-)
    comp: object       # per sequence: Monte-Carlo compensator
    n_events: np.ndarray
    comp_se: np.ndarray
    traces: list = field(default_factory=list)

    def per_event(self):
        """(total, time, mark) per sequence, each normalised by max(N, 1)."""
        norm = 1.0 / np.maximum(self.n_events, 1)
        total = ad.mul(ad.sub(self.mark_sum, self.comp), norm)
        time = ad.mul(ad.sub(self.time_sum, self.comp), norm)
        mark = ad.mul(ad.sub(self.mark_sum, self.time_sum), norm)
        return total, time, mark


def _pack(seqs, K):
    B = len(seqs)
    Ns = np.array([len(s) for s in seqs])
    L = int(Ns.max()) + 1
    dt = np.zeros((B, L))
    ev = np.zeros((B, L))
    marks = np.zeros((B, L), dtype=np.int64)
    for b, s in enumerate(seqs):
        knots = np.concatenate([[0.0], s.times, [s.t_end]])
        dt[b, : len(s) + 1] = np.diff(knots)
        ev[b, : len(s)] = 1.0
        marks[b, : len(s)] = s.marks
    if np.any(dt < 0):
        raise ValueError("events must be strictly increasing and within [0, t_end]")
    if np.any((dt <= 0) & (ev > 0)):
        raise ValueError("events must be strictly increasing and start after t=0")
    return Ns, L, dt, ev, marks


def forward_batch(cfg: HHPConfig, P, seqs, mc: int, rng: np.random.Generator, record=False,
                  likelihood=True) -> BatchResult:
    """Run the recurrence over a padded batch of sequences.

    Intervals are (t_i, t_{i+1}] for i = 0..N with t_0 = 0 and t_{N+1} = T.
    Each interval is evaluated at its right end (the event left limit) plus
    ``mc`` uniform points, all propagated from the same right limit.
    ``likelihood=False`` skips the log terms, so state traces can be
    recorded even where an identity readout goes negative.
    """
    if mc < 1:
        raise ValueError("need at least one Monte-Carlo point per interval")
    B = len(seqs)
    d, K = cfg.d, cfg.K
    Ns, L, dt, ev, marks = _pack(seqs, K)
    u = rng.random((B, L, mc))
    onehot = np.eye(K)[marks] * ev[..., None]
    gap_in = np.where(ev > 0, dt, 1.0)
    stateful = uses_gru(cfg.ablation)
    readout = readout_fn(cfg.readout)

    xr = np.zeros((B, 1, d))
    xi = np.zeros((B, 1, d))
    W = np.eye(K) if cfg.ablation == "not_latent" else P["W"]
    state = init_state(P, cfg.l, (B,)) if stateful else None
    if not stateful:
        angles, dre, dim = emit_dynamics(P, cfg.ablation)
        fac = rotation_factors(angles, d, cfg.r)
        # readout rows in the (fixed) eigenbasis: Re(W V z) = Ar.zr + Ai.zi with A = V* W^T
        Ar, Ai = apply_factors(fac, W, np.zeros((K, d)), adjoint=True)

    mark_sum = time_sum = comp = 0.0
    comp_var = np.zeros(B)
    traces = {k: [] for k in ("angles", "dre", "dim", "xr", "xi", "lam")} if record else None
    for i in range(L):
        if stateful:
            angles, dre, dim = emit_dynamics(P, cfg.ablation, state[-1])
            if np.ndim(ad.value(angles)) > 1:
                fac = rotation_factors(ad.reshape(angles, (B, 1, cfg.n_angles)), d, cfg.r)
            elif i == 0:
                fac = rotation_factors(angles, d, cfg.r)
            dre3, dim3 = ad.reshape(dre, (B, 1, d)), ad.reshape(dim, (B, 1, d))
        else:
            dre3, dim3 = dre, dim
        if record:
            traces["angles"].append(np.broadcast_to(ad.value(angles), (B, cfg.n_angles)).copy())
            traces["dre"].append(np.broadcast_to(ad.value(dre), (B, d)).copy())
            traces["dim"].append(np.broadcast_to(ad.value(dim), (B, d)).copy())
            traces["xr"].append(np.array(ad.value(xr))[:, 0, :])
            traces["xi"].append(np.array(ad.value(xi))[:, 0, :])
        dti = dt[:, i]
        s = np.concatenate([dti[:, None], u[:, i, :] * dti[:, None]], axis=1)[..., None]
        if stateful:
            # rotate the state and the readout rows into the eigenbasis in one pass
            sr = ad.concat([xr, ad.broadcast(W, (B, K, d))], axis=1)
            si = ad.concat([xi, np.zeros((B, K, d))], axis=1)
            ar, ai = apply_factors(fac, sr, si, adjoint=True)
            yr, yi = ar[:, :1, :], ai[:, :1, :]
            zr, zi = apply_diag_exp(dre3, dim3, s, yr, yi)  # (B, 1 + mc, d)
            proj = ad.add(ad.matmul(zr, ad.swap_last(ar[:, 1:, :])), ad.matmul(zi, ad.swap_last(ai[:, 1:, :])))
        else:
            yr, yi = apply_factors(fac, xr, xi, adjoint=True)
            zr, zi = apply_diag_exp(dre3, dim3, s, yr, yi)
            proj = ad.add(ad.matvec(Ar, zr), ad.matvec(Ai, zi))
        lam = readout(ad.add(P["mu"], proj))  # (B, 1 + mc, K)

        lam_left = lam[:, 0, :]
        evi = ev[:, i]
        if likelihood:
            mark_sum = ad.add(mark_sum, ad.log(ad.add(ad.sum(ad.mul(lam_left, onehot[:, i, :]), axis=-1), 1.0 - evi)))
            time_sum = ad.add(time_sum, ad.log(ad.add(ad.mul(ad.sum(lam_left, axis=-1), evi), 1.0 - evi)))
        lam_mc = ad.sum(lam[:, 1:, :], axis=-1)  # (B, mc)
        comp = ad.add(comp, ad.mul(ad.sum(lam_mc, axis=-1), dti / mc))
        if mc > 1:
            comp_var += dti ** 2 * np.var(ad.value(lam_mc), axis=-1, ddof=1) / mc
        if record:
            traces["lam"].append(np.array(ad.value(lam_left)))

        if i == L - 1:
            break
        xlr, xli = apply_factors(fac, zr[:, 0:1, :], zi[:, 0:1, :])
        impulse = ad.matvec(P["alpha"], onehot[:, i, :])
        xr = ad.add(xlr, ad.reshape(impulse, (B, 1, d)))
        xi = xli
        if stateful:
            state = gru_step(P, state, embed_event(P, marks[:, i], gap_in[:, i]))

    result = BatchResult(mark_sum, time_sum, comp, Ns, np.sqrt(comp_var))
    if record:
        stack = {k: np.stack(v, axis=1) for k, v in traces.items()}
        for b, s in enumerate(seqs):
            n = len(s)
            result.traces.append(Trace(
                knots=np.concatenate([[0.0], s.times]), t_end=s.t_end,
                angles=stack["angles"][b, : n + 1], decay_re=stack["dre"][b, : n + 1],
                decay_im=stack["dim"][b, : n + 1], x_right_re=stack["xr"][b, : n + 1],
                x_right_im=stack["xi"][b, : n + 1], lam_left=stack["lam"][b, :n],
                marks=np.asarray(s.marks)))
    return result


def batch_loss(cfg: HHPConfig, P, seqs, mc: int, rng):
    """Negative mean per-event log-likelihood over a batch (a scalar node)."""
    total, _, _ = forward_batch(cfg, P, seqs, mc, rng).per_event()
    return ad.neg(ad.mean(total))


# ---------------------------------------------------------------------------
# per-sequence evaluation


@dataclass
class SequenceEval:
    lam_left: np.ndarray
    compensator: float
    compensator_se: float
    trace: Trace


@dataclass
class LogLik:
    total: float
    time: float
    mark: float
    n_events: int
    compensator: float
    compensator_se: float


def evaluate_sequence(model: HHP, seq: Sequence, mc_per_interval: int = 20, rng=None,
                      likelihood=True) -> SequenceEval:
    rng = np.random.default_rng(0) if rng is None else rng
    res = forward_batch(model.config, model.params, [seq], mc_per_interval, rng, record=True,
                        likelihood=likelihood)
    return SequenceEval(res.traces[0].lam_left, float(np.asarray(res.comp)[0]), float(res.comp_se[0]), res.traces[0])


def log_likelihood(model: HHP, seq: Sequence, mc_per_interval: int = 20, rng=None) -> LogLik:
    rng = np.random.default_rng(0) if rng is None else rng
    res = forward_batch(model.config, model.params, [seq], mc_per_interval, rng)
    total, time, mark = (float(np.asarray(v)[0]) for v in res.per_event())
    return LogLik(total, time, mark, len(seq), float(np.asarray(res.comp)[0]), float(res.comp_se[0]))


def loglik_terms(model: HHP, ds, mc_per_interval: int = 20, seed: int = 0, batch_size: int = 64):
    """Per-sequence per-event (total, time, mark) arrays."""
    rng = np.random.default_rng(seed)
    seqs = list(ds)
    tot, tim, mar = [], [], []
    for start in range(0, len(seqs), batch_size):
        res = forward_batch(model.config, model.params, seqs[start:start + batch_size], mc_per_interval, rng)
        t, ti, m = res.per_event()
        tot.append(np.asarray(t))
        tim.append(np.asarray(ti))
        mar.append(np.asarray(m))
    return tuple(np.concatenate(v) for v in (tot, tim, mar))


def dataset_log_likelihood(model, ds, mc_per_interval: int = 20, seed: int = 0):
    """Mean over sequences of per-event (total, time, mark) log-likelihood."""
    return tuple(float(v.mean()) for v in model.loglik_terms(ds, mc_per_interval, seed))


# ---------------------------------------------------------------------------
# streaming evaluation (simulation, prediction, probing)


class HHPRunner:
    """Incremental view of the model conditioned on a growing history."""

    def __init__(self, model: HHP):
        self.model = model
        cfg = model.config
        self.cfg = cfg
        P = model.params
        self.P = P
        self.state = init_state(P, cfg.l) if uses_gru(cfg.ablation) else None
        self.xr = np.zeros(cfg.d)
        self.xi = np.zeros(cfg.d)
        self.t_last = 0.0
        self.n_seen = 0
        self._emit()

    def _emit(self):
        top = self.state[-1] if self.state is not None else None
        self.angles, self.decay_re, self.decay_im = emit_dynamics(self.P, self.cfg.ablation, top)
        self.factors = rotation_factors(self.angles, self.cfg.d, self.cfg.r)
        self._yr, self._yi = apply_factors(self.factors, self.xr, self.xi, adjoint=True)

    def latent(self, s):
        """Left-limit latent states at offsets ``s`` (>= 0) after the last event."""
        s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
        zr, zi = apply_diag_exp(self.decay_re, self.decay_im, s, self._yr, self._yi)
        return apply_factors(self.factors, zr, zi)

    def intensity(self, s) -> np.ndarray:
        xr, _ = self.latent(s)
        return np.asarray(readout_np(self.cfg.readout, pre_activation(self.cfg, self.P, xr)))

    def interval_compensator(self, dt: float, rng, n: int = 20) -> float:
        if dt <= 0:
            return 0.0
        s = rng.random(n) * dt
        return float(dt * self.intensity(s).sum(axis=1).mean())

    def observe(self, t: float, k: int):
        dt = t - self.t_last
        if dt <= 0:
            raise ValueError("events must be strictly increasing")
        xr, xi = self.latent([dt])
        self.xr, self.xi = apply_impulse(self.P, xr[0], xi[0], int(k))
        if self.state is not None:
            self.state = gru_step(self.P, self.state, embed_event(self.P, np.array(k), np.array(dt)))
        self.t_last = t
        self.n_seen += 1
        self._emit()


def check_model_data(model, ds: Dataset):
    check_dataset(ds)
    if ds.num_marks != model.K:
        raise ValueError(f"model has K={model.K} marks but data has {ds.num_marks}")
