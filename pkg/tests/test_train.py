import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperhawkes.model import HHP, HHPConfig
from hyperhawkes.synth import TriggerMemoryConfig, gen_poisson, gen_trigger_memory
from hyperhawkes.train import Adam, TrainConfig, TrainingError, clip_by_global_norm, global_norm, train


def small_model(K=2, seed=0, rate=0.3, ablation="full"):
    return HHP.create(HHPConfig(K=K, d=4, h=4, l=1, r=1, ablation=ablation), seed=seed, base_rate=rate)


def test_adam_zero_gradient_is_noop():
    p = {"a": np.array([1.0, -2.0]), "b": np.array([[3.0]])}
    opt = Adam(0.1)
    for _ in range(3):
        q = opt.step(p, {k: np.zeros_like(v) for k, v in p.items()})
    assert all(np.array_equal(q[k], p[k]) for k in p)


def test_adam_first_step_size():
    # bias-corrected first step moves each coordinate by lr * sign(g)
    p = {"a": np.array([0.0, 0.0, 0.0])}
    q = Adam(0.01).step(p, {"a": np.array([5.0, -1e-3, 2.0])})
    assert np.allclose(q["a"], [-0.01, 0.01, -0.01], rtol=1e-4)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=8), st.floats(0.1, 10))
def test_clip_preserves_direction(vals, max_norm):
    g = {"x": np.array(vals), "y": np.array(vals[::-1]) * 0.5}
    c, norm = clip_by_global_norm(g, max_norm)
    assert np.isclose(norm, global_norm(g))
    assert global_norm(c) <= max_norm * (1 + 1e-12) or global_norm(c) <= norm
    if norm > 0:
        scale = global_norm(c) / norm
        for k in g:
            assert np.allclose(c[k], g[k] * scale)


def test_mu_only_fit_recovers_poisson_rate():
    ds = gen_poisson([0.4, 0.9], 50.0, 40, seed=0)
    m = small_model(rate=0.2, ablation="not_hyper")
    m.params["alpha"][:] = 0.0
    res = train(m, ds, ds, TrainConfig(lr=0.1, max_epochs=40, patience=40, batch_size=20, trainable=("mu",)))
    counts = np.bincount(np.concatenate([s.marks for s in ds]), minlength=2) / (40 * 50.0)
    rate = np.log1p(np.exp(res.model.params["mu"]))
    assert np.all(np.abs(rate / counts - 1) <= 0.05), (rate, counts)
    # frozen parameters did not move
    assert np.array_equal(res.model.params["W"], m.params["W"])


def test_training_is_deterministic(tmp_path):
    ds = gen_trigger_memory(TriggerMemoryConfig(n_sequences=12, horizon=30.0, seed=0))
    val = gen_trigger_memory(TriggerMemoryConfig(n_sequences=4, horizon=30.0, seed=1))
    model = small_model(K=3)
    cfg = TrainConfig(lr=1e-2, max_epochs=2, batch_size=4, seed=3)
    a = train(model, ds, val, cfg, history_path=tmp_path / "h.csv")
    b = train(model, ds, val, cfg)
    assert a.model.fingerprint() == b.model.fingerprint()
    assert [r.val_ll for r in a.history] == [r.val_ll for r in b.history]
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["epoch", "train_ll", "val_ll", "wallclock_s"] and len(rows) == 3


def test_loss_improves_early():
    ds = gen_trigger_memory(TriggerMemoryConfig(n_sequences=40, horizon=40.0, seed=0))
    model = small_model(K=3, rate=0.05)
    res = train(model, ds, ds, TrainConfig(lr=1e-2, max_epochs=5, patience=5, batch_size=8, mc_per_interval=50))
    vals = [r.val_ll for r in res.history]
    assert vals[-1] > vals[0]
    assert all(b >= a - 0.02 for a, b in zip(vals, vals[1:])), vals


def test_best_parameters_returned():
    ds = gen_poisson([0.4, 0.9], 30.0, 10, seed=0)
    m = small_model()
    res = train(m, ds, ds, TrainConfig(lr=1e-2, max_epochs=3))
    assert res.best_val_ll == max([r.val_ll for r in res.history] + [res.best_val_ll])


def test_non_finite_raises_with_diagnostics():
    ds = gen_poisson([0.4, 0.9], 30.0, 4, seed=0)
    m = small_model()
    m.params["mu"][:] = np.nan
    with pytest.raises(TrainingError, match="epoch 1, batch 0"):
        train(m, ds, ds, TrainConfig(max_epochs=1))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    ds = gen_poisson([0.4, 0.9], 10.0, 2, seed=0)
    with pytest.raises(ValueError):
        train(small_model(), ds, ds, TrainConfig(trainable=("nope",)))
    with pytest.raises(ValueError):
        train(small_model(K=3), ds, ds, TrainConfig())
