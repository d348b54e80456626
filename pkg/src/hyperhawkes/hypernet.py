"""GRU hypernetwork that turns the event history into per-interval dynamics.

Parameters live in a flat ``{name: array}`` dict so they can be handed to
the autodiff tape, the optimizer and the checkpoint writer unchanged. All
functions accept arrays or autodiff nodes and keep arbitrary leading batch
axes.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .unitary import n_angles

ABLATIONS = ("full", "not_stateful", "not_hyper", "not_latent")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_gru_params(rng: np.random.Generator, K: int, h: int, l: int) -> dict:
    if h < 2:
        raise ValueError("GRU width h must be >= 2 (one slot for log dt)")
    P = {"emb": rng.standard_normal((K, h - 1)) * 0.1}
    for j in range(l):
        P[f"gru{j}.Wx"] = _uniform(rng, (3 * h, h), h)
        P[f"gru{j}.bx"] = _uniform(rng, (3 * h,), h)
        P[f"gru{j}.Wz"] = _uniform(rng, (2 * h, h), h)
        P[f"gru{j}.Uc"] = _uniform(rng, (h, h), h)
        P[f"gru{j}.z0"] = np.zeros(h)
    return P


def init_head_params(rng: np.random.Generator, d: int, h: int, r: int, ablation: str) -> dict:
    m = n_angles(d, r)
    P = {}
    if ablation in ("full", "not_stateful"):
        P["headD.W"] = _uniform(rng, (d, h), h)
        P["headD.b"] = _uniform(rng, (d,), h)
    else:
        P["const_decay"] = np.zeros(d)
    if ablation == "full":
        P["headV.W"] = _uniform(rng, (m, h), h)
        P["headV.b"] = _uniform(rng, (m,), h)
    else:
        P["const_angles"] = rng.uniform(-0.1, 0.1, size=m)
    return P


def uses_gru(ablation: str) -> bool:
    return ablation in ("full", "not_stateful")


def init_state(P, l: int, batch_shape=()):
    """Learned initial state ``z_0`` for every layer, broadcast to ``batch_shape``."""
    out = []
    for j in range(l):
        z0 = P[f"gru{j}.z0"]
        h = ad.value(z0).shape[-1]
        out.append(ad.add(z0, np.zeros(tuple(batch_shape) + (h,))) if batch_shape else z0)
    return out


def embed_event(P, marks, dt):
    """[log dt, embedding(mark)] with shape (..., h)."""
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt <= 0):
        raise ValueError("inter-event time must be > 0")
    marks = np.asarray(marks)
    emb = ad.take(P["emb"], marks, axis=0)
    return ad.concat([np.log(dt)[..., None], emb], axis=-1)


def gru_layer(P, j: int, z, x):
    h = ad.value(P[f"gru{j}.Uc"]).shape[0]
    gx = ad.add(ad.matvec(P[f"gru{j}.Wx"], x), P[f"gru{j}.bx"])
    gz = ad.matvec(P[f"gru{j}.Wz"], z)
    reset = ad.sigmoid(ad.add(gx[..., :h], gz[..., :h]))
    update = ad.sigmoid(ad.add(gx[..., h:2 * h], gz[..., h:]))
    cand = ad.tanh(ad.add(gx[..., 2 * h:], ad.matvec(P[f"gru{j}.Uc"], ad.mul(reset, z))))
    # (1 - u) * cand + u * z
    return ad.add(cand, ad.mul(update, ad.sub(z, cand)))


def gru_step(P, state: list, x) -> list:
    new = []
    for j, z in enumerate(state):
        x = gru_layer(P, j, z, x)
        new.append(x)
    return new


def emit_dynamics(P, ablation: str, top=None):
    """Return (angles, decay_re, decay_im) for one interval.

    ``decay = -softplus(d_i) * u`` with ``Re(u) = exp(log_re_u) > 0``, so the
    real part is always strictly negative.
    """
    if ablation in ("full", "not_stateful"):
        logits = ad.add(ad.matvec(P["headD.W"], top), P["headD.b"])
    else:
        logits = P["const_decay"]
    if ablation == "full":
        angles = ad.add(ad.matvec(P["headV.W"], top), P["headV.b"])
    else:
        angles = P["const_angles"]
    rate = ad.softplus(logits)
    decay_re = ad.neg(ad.mul(rate, ad.exp(P["log_re_u"])))
    decay_im = ad.neg(ad.mul(rate, P["im_u"]))
    return angles, decay_re, decay_im
