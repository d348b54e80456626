"""Particle decomposition of the latent state and leave-out attributions.

Because the state recurrence is linear between readouts, the left-limit
state is a sum of per-event "particles": the impulse of event i pushed
through every interval's dynamics up to the query time. Removing particles
before the readout gives the DF-lambda / DF-Lambda influence measures.

Event indices are 0-based throughout. All queries at an event time use the
left limit, so an event never influences the intensity at its own time.
Dynamics are replayed from the trace recorded by ``evaluate_sequence``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .model import HHP, evaluate_sequence, readout_matrix, readout_np
from .unitary import apply_diag_exp, apply_factors, rotation_factors

DEFAULT_GRID = 50


@dataclass
class Particle:
    index: int
    latent_re: np.ndarray
    latent_im: np.ndarray
    projected: np.ndarray  # W Re(latent), shape (K,)


def record_trace(model: HHP, seq):
    # one MC point is enough: only the deterministic trace is used
    return evaluate_sequence(model, seq, 1, np.random.default_rng(0), likelihood=False).trace


def _interval_dynamics(model, trace, j):
    fac = rotation_factors(trace.angles[j], model.config.d, model.config.r)
    return fac, trace.decay_re[j], trace.decay_im[j]


def _propagate(model, trace, j, xr, xi, s):
    """Push rows of (xr, xi) through interval j for offsets s; returns (..., n, d)."""
    fac, dre, dim = _interval_dynamics(model, trace, j)
    yr, yi = apply_factors(fac, xr, xi, adjoint=True)
    s = np.asarray(s, dtype=np.float64)
    zr, zi = apply_diag_exp(dre, dim, s.reshape(s.shape + (1, 1)), yr, yi)
    return apply_factors(fac, zr, zi)


def _right_limit_particles(model, trace):
    """Yield (j, pr, pi): particles of events 0..j-1 right after knot j."""
    d = model.config.d
    alpha = np.asarray(model.params["alpha"])
    marks = np.asarray(trace.marks)
    pr, pi = np.zeros((0, d)), np.zeros((0, d))
    n_int = len(trace.knots)
    for j in range(n_int):
        if j > 0:
            dt = trace.knots[j] - trace.knots[j - 1]
            pr, pi = (a[0] for a in _propagate(model, trace, j - 1, pr, pi, [dt]))
            pr = np.vstack([pr, alpha[:, marks[j - 1]]])
            pi = np.vstack([pi, np.zeros(d)])
        yield j, pr, pi


def _locate(trace, t):
    if not t > 0:
        raise ValueError("query time must be > 0")
    # number of events strictly before t (left limit)
    return int(np.searchsorted(trace.knots[1:], t, side="left"))


def particles(model: HHP, seq, t: float, trace=None) -> list:
    trace = trace if trace is not None else record_trace(model, seq)
    m = _locate(trace, t)
    W = readout_matrix(model)
    for j, pr, pi in _right_limit_particles(model, trace):
        if j == m:
            lr, li = (a[0] for a in _propagate(model, trace, j, pr, pi, [t - trace.knots[j]]))
            return [Particle(i, lr[i], li[i], W @ lr[i]) for i in range(m)]
    raise AssertionError("unreachable")


def state_left_limit(model: HHP, seq, t: float, trace=None):
    """x_{t-} from the recurrence: last right limit propagated to t."""
    trace = trace if trace is not None else record_trace(model, seq)
    m = _locate(trace, t)
    xr, xi = _propagate(model, trace, m, trace.x_right_re[m][None], trace.x_right_im[m][None],
                        [t - trace.knots[m]])
    return xr[0, 0], xi[0, 0]


def _mask(n, A):
    A = np.asarray(sorted(set(int(a) for a in A)), dtype=np.int64)
    if A.size and (A[0] < 0 or A[-1] >= n):
        raise IndexError(f"event index out of range for {n} events before the query time")
    keep = np.ones(n, dtype=bool)
    keep[A] = False
    return keep


def _df_from_proj(model, proj, keep):
    """proj: (..., n, K) projected particles; returns lam - readout(reduced)."""
    mu = np.asarray(model.params["mu"])
    kind = model.config.readout
    lam = readout_np(kind, mu + proj.sum(axis=-2))
    reduced = readout_np(kind, mu + proj[..., keep, :].sum(axis=-2))
    return lam - reduced


def df_lambda(model: HHP, seq, t: float, A, trace=None) -> np.ndarray:
    """lambda_t - readout(mu + sum of projected particles not in A), at the left limit of t."""
    ps = particles(model, seq, t, trace)
    K = model.K
    proj = np.array([p.projected for p in ps]).reshape(len(ps), K)
    return _df_from_proj(model, proj, _mask(len(ps), A))


def _interval_grids(model, seq, grid, trace=None, t_end=None):
    """Yield (times, proj) per interval; proj has shape (G, n_events_so_far, K)."""
    if grid < 2:
        raise ValueError("grid_per_interval must be >= 2")
    trace = trace if trace is not None else record_trace(model, seq)
    t_end = seq.t_end if t_end is None else t_end
    W = readout_matrix(model)
    ends = np.append(trace.knots[1:], trace.t_end)
    for j, pr, pi in _right_limit_particles(model, trace):
        lo, hi = trace.knots[j], min(ends[j], t_end)
        if hi <= lo:
            break
        s = np.linspace(0.0, hi - lo, grid)
        zr, _ = _propagate(model, trace, j, pr, pi, s)
        yield lo + s, zr @ W.T


def _trapz(y, x):
    return np.trapezoid(y, x, axis=0) if hasattr(np, "trapezoid") else np.trapz(y, x, axis=0)


def df_Lambda(model: HHP, seq, A, t_end=None, grid_per_interval: int = DEFAULT_GRID, trace=None):
    """(signed, absolute) time integrals of DF-lambda for group A up to ``t_end``."""
    K = model.K
    signed, absolute = np.zeros(K), np.zeros(K)
    N = len(seq)
    keep_all = _mask(N, A)
    for times, proj in _interval_grids(model, seq, grid_per_interval, trace, t_end):
        n = proj.shape[1]
        df = _df_from_proj(model, proj, keep_all[:n])
        signed += _trapz(df, times)
        absolute += _trapz(np.abs(df), times)
    return signed, absolute


def singleton_df_Lambda(model: HHP, seq, grid_per_interval: int = DEFAULT_GRID, trace=None):
    """(signed, absolute) DF-Lambda at T for every singleton {i}; arrays of shape (N, K)."""
    N, K = len(seq), model.K
    mu = np.asarray(model.params["mu"])
    kind = model.config.readout
    signed, absolute = np.zeros((N, K)), np.zeros((N, K))
    for times, proj in _interval_grids(model, seq, grid_per_interval, trace):
        n = proj.shape[1]
        if n == 0:
            continue
        total = proj.sum(axis=1)                                   # (G, K)
        lam = readout_np(kind, mu + total)
        df = lam[:, None, :] - readout_np(kind, mu + total[:, None, :] - proj)  # (G, n, K)
        signed[:n] += _trapz(df, times)
        absolute[:n] += _trapz(np.abs(df), times)
    return signed, absolute


def lifetime_influence(model: HHP, seq, grid_per_interval: int = DEFAULT_GRID, trace=None) -> np.ndarray:
    """Sum over marks of the absolute DF-Lambda at T, per event."""
    _, absolute = singleton_df_Lambda(model, seq, grid_per_interval, trace)
    return absolute.sum(axis=1)


def coupling_matrix(model: HHP, seq, grid_per_interval: int = DEFAULT_GRID, trace=None,
                    signed: bool = False) -> np.ndarray:
    """|joint pair influence - sum of the two individual influences|.

    With ``signed=False`` influences are summed absolute DF-Lambda; with
    ``signed=True`` the signed integrals are used instead, which makes the
    matrix vanish exactly for a linear readout.
    """
    N, K = len(seq), model.K
    mu = np.asarray(model.params["mu"])
    kind = model.config.readout
    single = np.zeros(N)
    joint = np.zeros((N, N))
    for times, proj in _interval_grids(model, seq, grid_per_interval, trace):
        n = proj.shape[1]
        if n == 0:
            continue
        # events that have not happened yet contribute a zero particle; pairs
        # with one of them still remove the other one
        full = np.zeros((len(times), N, K))
        full[:, :n] = proj
        total = proj.sum(axis=1)
        lam = readout_np(kind, mu + total)
        df1 = lam[:, None, :] - readout_np(kind, mu + total[:, None, :] - full)
        pair = full[:, :, None, :] + full[:, None, :, :]
        df2 = lam[:, None, None, :] - readout_np(kind, mu + total[:, None, None, :] - pair)
        f = (lambda v: v) if signed else np.abs
        single += _trapz(f(df1), times).sum(axis=-1)
        joint += _trapz(f(df2), times).sum(axis=-1)
    C = np.abs(joint - single[:, None] - single[None, :])
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    return C


def retrospective_attribution(model: HHP, seq, i: int, trace=None) -> np.ndarray:
    """Entry j (< i): mark-k_i component of DF-lambda^{(j)} at the left limit of t_i."""
    N = len(seq)
    if not 0 <= i < N:
        raise IndexError(f"target event {i} out of range [0, {N})")
    if i == 0:
        return np.zeros(0)
    ps = particles(model, seq, float(seq.times[i]), trace)
    proj = np.array([p.projected for p in ps])
    k = int(seq.marks[i])
    mu = np.asarray(model.params["mu"])
    kind = model.config.readout
    total = proj.sum(axis=0)
    lam = readout_np(kind, mu + total)
    return (lam[None, :] - readout_np(kind, mu + total[None, :] - proj))[:, k]


def dflambda_traces(model: HHP, seq, grid_per_interval: int = DEFAULT_GRID, trace=None):
    """Grid times (non-decreasing) and DF-lambda^{(i)} per event and mark, shape (G, N, K).

    Entries for events that have not happened yet are 0. Each interval
    contributes its own grid including both ends, so knot times appear twice
    (right limit of the earlier stretch, then the new stretch).
    """
    N, K = len(seq), model.K
    mu = np.asarray(model.params["mu"])
    kind = model.config.readout
    ts, vals = [], []
    for times, proj in _interval_grids(model, seq, grid_per_interval, trace):
        n = proj.shape[1]
        out = np.zeros((len(times), N, K))
        if n:
            total = proj.sum(axis=1)
            lam = readout_np(kind, mu + total)
            out[:, :n] = lam[:, None, :] - readout_np(kind, mu + total[:, None, :] - proj)
        ts.append(times)
        vals.append(out)
    return np.concatenate(ts), np.concatenate(vals, axis=0)


@dataclass
class AttributionReport:
    grid: np.ndarray
    dflambda: np.ndarray            # (G, N, K)
    dfLambda_signed: np.ndarray     # (N, K)
    dfLambda_abs: np.ndarray        # (N, K)
    lifetime: np.ndarray            # (N,)
    coupling: np.ndarray            # (N, N)
    retrospective: list             # per target event, array of length target index
    marks: np.ndarray


def attribution_report(model: HHP, seq, grid_per_interval: int = DEFAULT_GRID) -> AttributionReport:
    trace = record_trace(model, seq)
    grid, traces = dflambda_traces(model, seq, grid_per_interval, trace)
    signed, absolute = singleton_df_Lambda(model, seq, grid_per_interval, trace)
    return AttributionReport(
        grid=grid, dflambda=traces, dfLambda_signed=signed, dfLambda_abs=absolute,
        lifetime=absolute.sum(axis=1),
        coupling=coupling_matrix(model, seq, grid_per_interval, trace),
        retrospective=[retrospective_attribution(model, seq, i, trace) for i in range(len(seq))],
        marks=np.asarray(seq.marks))


def write_report(report: AttributionReport, outdir, checkpoint_hash: str, settings: dict) -> list:
    os.makedirs(outdir, exist_ok=True)
    paths = {name: os.path.join(outdir, name) for name in
             ("dflambda.csv", "lifetime.csv", "coupling.csv", "retrospective.csv", "manifest.json")}
    with open(paths["dflambda.csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "source_event", "mark", "value"])
        G, N, K = report.dflambda.shape
        for g in range(G):
            for i in range(N):
                for k in range(K):
                    w.writerow([repr(float(report.grid[g])), i, k, repr(float(report.dflambda[g, i, k]))])
    with open(paths["lifetime.csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event", "mark_of_event", "influence"])
        for i, v in enumerate(report.lifetime):
            w.writerow([i, int(report.marks[i]), repr(float(v))])
    with open(paths["coupling.csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        N = report.coupling.shape[0]
        for i in range(N):
            for j in range(N):
                w.writerow([i, j, repr(float(report.coupling[i, j]))])
    with open(paths["retrospective.csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target_event", "source_event", "value"])
        for i, row in enumerate(report.retrospective):
            for j, v in enumerate(row):
                w.writerow([i, j, repr(float(v))])
    manifest = {"checkpoint_sha256": checkpoint_hash, "n_events": int(len(report.marks)),
                "grid_points": int(report.grid.size), **settings}
    with open(paths["manifest.json"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    return list(paths.values())
