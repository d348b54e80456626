import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperhawkes.baselines import LHPParams, hhp_from_lhp, lhp_intensity
from hyperhawkes.hypernet import emit_dynamics
from hyperhawkes.interpret import (attribution_report, coupling_matrix, df_Lambda, df_lambda,
                                   dflambda_traces, lifetime_influence, particles, record_trace,
                                   retrospective_attribution, singleton_df_Lambda, state_left_limit,
                                   write_report)
from hyperhawkes.model import readout_np
from hyperhawkes.unitary import materialize

from conftest import random_model, random_sequence

ABLATIONS = ["full", "not_stateful", "not_hyper", "not_latent"]


def query_time(rng, seq):
    return float(rng.uniform(seq.times[-1] * 0.5, seq.t_end))


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(ABLATIONS))
def test_particles_sum_to_state(seed, ablation):
    rng = np.random.default_rng(seed)
    m = random_model(seed % 13, K=3, d=3 if ablation == "not_latent" else 4, ablation=ablation)
    seq = random_sequence(rng, K=3, n=int(rng.integers(1, 15)))
    t = query_time(rng, seq)
    ps = particles(m, seq, t)
    xr, xi = state_left_limit(m, seq, t)
    assert np.max(np.abs(sum(p.latent_re for p in ps) - xr)) <= 1e-10
    assert np.max(np.abs(sum(p.latent_im for p in ps) - xi)) <= 1e-10
    # and the runner, which never splits the state, agrees
    r = m.runner()
    for tt, k in zip(seq.times, seq.marks):
        if tt < t:
            r.observe(tt, k)
    assert np.allclose(r.latent([t - r.t_last])[0][0], xr, atol=1e-12)


def test_particles_closed_form_constant_dynamics():
    m = random_model(2, K=2, d=4, ablation="not_hyper")
    P = m.params
    angles, dr, di = emit_dynamics(P, "not_hyper")
    U = materialize(angles, 4, m.config.r)
    seq = random_sequence(np.random.default_rng(0), K=2, n=6, t_end=10.0)
    t = 9.5
    for p in particles(m, seq, t):
        tau = t - seq.times[p.index]
        v = U @ (np.exp((dr + 1j * di) * tau) * (U.conj().T @ P["alpha"][:, seq.marks[p.index]]))
        assert np.allclose(p.latent_re + 1j * p.latent_im, v, atol=1e-12)
        assert np.allclose(p.projected, P["W"] @ v.real, atol=1e-12)


def test_particles_are_causal():
    m = random_model(1, K=3, d=4)
    seq = random_sequence(np.random.default_rng(3), K=3, n=8)
    t = float(seq.times[4])
    ps = particles(m, seq, t)
    assert [p.index for p in ps] == [0, 1, 2, 3]  # left limit: event 4 excluded


def test_df_lambda_identities(rng):
    m = random_model(5, K=3, d=4)
    seq = random_sequence(rng, K=3, n=10)
    t = query_time(rng, seq)
    n = len(particles(m, seq, t))
    assert np.array_equal(df_lambda(m, seq, t, []), np.zeros(3))
    r = m.runner()
    for tt, k in zip(seq.times, seq.marks):
        if tt < t:
            r.observe(tt, k)
    lam = r.intensity([t - r.t_last])[0]
    base = readout_np("softplus", m.params["mu"])
    assert np.allclose(df_lambda(m, seq, t, range(n)), lam - base, atol=1e-12)
    with pytest.raises(IndexError):
        df_lambda(m, seq, t, [n])


@given(st.integers(0, 10_000))
def test_df_lambda_additive_under_identity_readout(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed % 5, K=2, d=4, readout="identity")
    seq = random_sequence(rng, K=2, n=8)
    t = query_time(rng, seq)
    n = len(particles(m, seq, t))
    A = [i for i in range(n) if rng.random() < 0.5]
    total = sum((df_lambda(m, seq, t, [i]) for i in A), np.zeros(2))
    assert np.allclose(df_lambda(m, seq, t, A), total, atol=1e-12)


def test_df_lambda_matches_lhp_excitation():
    p = LHPParams([0.2, 0.3], [[0.5, 0.1], [0.2, 0.4]], [1.0, 2.0])
    m = hhp_from_lhp(p)
    seq = random_sequence(np.random.default_rng(7), K=2, n=6)
    t = seq.t_end - 0.01
    for i in range(6):
        expect = p.alpha[:, seq.marks[i]] * np.exp(-p.beta * (t - seq.times[i]))
        assert np.allclose(df_lambda(m, seq, t, [i]), expect, atol=1e-12)
    assert np.allclose(df_lambda(m, seq, t, range(6)), lhp_intensity(p, seq.times, seq.marks, t) - p.mu)


def test_df_Lambda_grid_refinement_and_bounds(rng):
    m = random_model(8, K=3, d=4)
    seq = random_sequence(rng, K=3, n=8)
    A = [1, 4]
    s1, a1 = df_Lambda(m, seq, A, grid_per_interval=200)
    s2, a2 = df_Lambda(m, seq, A, grid_per_interval=400)
    assert np.all(np.abs(a1 - a2) <= 0.01 * np.abs(a2) + 1e-12)
    assert np.all(np.abs(s2) <= a2 + 1e-12)
    assert np.array_equal(df_Lambda(m, seq, [])[1], np.zeros(3))


def test_df_Lambda_exact_for_lhp():
    p = LHPParams([0.2], [[0.6]], [1.5])
    m = hhp_from_lhp(p)
    seq = random_sequence(np.random.default_rng(1), K=1, n=5, t_end=20.0)
    signed, absolute = df_Lambda(m, seq, [2], grid_per_interval=2000)
    exact = 0.6 / 1.5 * (1 - np.exp(-1.5 * (20.0 - seq.times[2])))
    assert np.allclose(signed, exact, rtol=1e-5) and np.allclose(absolute, signed)


def test_singleton_matches_group_call(rng):
    m = random_model(9, K=2, d=4)
    seq = random_sequence(rng, K=2, n=6)
    trace = record_trace(m, seq)
    signed, absolute = singleton_df_Lambda(m, seq, trace=trace)
    for i in range(6):
        s, a = df_Lambda(m, seq, [i], trace=trace)
        assert np.allclose(signed[i], s, atol=1e-12) and np.allclose(absolute[i], a, atol=1e-12)
    life = lifetime_influence(m, seq, trace=trace)
    assert np.all(life >= 0) and np.allclose(life, absolute.sum(axis=1))


def test_late_event_has_small_lifetime():
    m = random_model(9, K=2, d=4)
    seq = random_sequence(np.random.default_rng(2), K=2, n=5, t_end=10.0)
    seq.times[-1] = seq.t_end - 1e-9
    assert lifetime_influence(m, seq)[-1] < 1e-6


def test_coupling_properties(rng):
    m = random_model(3, K=2, d=4)
    seq = random_sequence(rng, K=2, n=7)
    C = coupling_matrix(m, seq)
    assert C.shape == (7, 7) and np.allclose(C, C.T) and np.all(np.diag(C) == 0) and np.all(C >= 0)
    one = random_sequence(rng, K=2, n=1)
    assert np.array_equal(coupling_matrix(m, one), np.zeros((1, 1)))


def test_coupling_vanishes_for_linear_readout(rng):
    m = random_model(6, K=2, d=4, readout="identity")
    seq = random_sequence(rng, K=2, n=8)
    assert np.max(coupling_matrix(m, seq, signed=True)) <= 1e-10
    # sign-consistent particles: the absolute version vanishes too
    p = LHPParams([0.2, 0.3], [[0.5, 0.1], [0.2, 0.4]], [1.0, 2.0])
    assert np.max(coupling_matrix(hhp_from_lhp(p), seq)) <= 1e-10


def test_retrospective(rng):
    m = random_model(4, K=3, d=4)
    seq = random_sequence(rng, K=3, n=6)
    assert retrospective_attribution(m, seq, 0).shape == (0,)
    i = 4
    r = retrospective_attribution(m, seq, i)
    assert r.shape == (i,)
    t = float(seq.times[i])
    for j in range(i):
        assert np.isclose(r[j], df_lambda(m, seq, t, [j])[seq.marks[i]], atol=1e-12)
    with pytest.raises(IndexError):
        retrospective_attribution(m, seq, 6)


def test_traces_and_report(tmp_path, rng):
    m = random_model(4, K=2, d=4)
    seq = random_sequence(rng, K=2, n=4)
    grid, vals = dflambda_traces(m, seq, 10)
    assert np.all(np.diff(grid) >= 0) and vals.shape == (grid.size, 4, 2)
    before = grid < seq.times[2]
    assert np.all(vals[before, 2] == 0)
    rep = attribution_report(m, seq, 10)
    paths = write_report(rep, tmp_path / "out", "abc", {"grid_per_interval": 10})
    assert len(paths) == 5
    rows = list(csv.DictReader(open(tmp_path / "out" / "lifetime.csv")))
    assert [int(r["event"]) for r in rows] == [0, 1, 2, 3]
    assert np.allclose([float(r["influence"]) for r in rows], rep.lifetime)
    retro = list(csv.DictReader(open(tmp_path / "out" / "retrospective.csv")))
    assert len(retro) == 0 + 1 + 2 + 3
    man = json.load(open(tmp_path / "out" / "manifest.json"))
    assert man["checkpoint_sha256"] == "abc" and man["n_events"] == 4
