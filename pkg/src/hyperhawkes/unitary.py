"""Complex diagonal exponentials and a rotation-block unitary operator.

A complex vector is a pair ``(re, im)`` of real arrays whose last axis has
length ``d``. All functions work both on numpy arrays and on autodiff nodes.

The unitary is a product of ``r`` blocks. Each block is an "even" layer of
2x2 complex Givens rotations on pairs (0,1)(2,3)... followed by an "odd"
layer on pairs (1,2)(3,4)...(d-1,0). A rotation with angles (theta, phi)
acts on a pair (a, b) as::

    [[cos t, -e^{i phi} sin t],
     [e^{-i phi} sin t, cos t]]

Every pair carries its own (theta, phi), so an even ``d`` consumes ``2 d``
angles per block. For odd ``d`` (only reachable through the d=K ablation)
each layer leaves one coordinate untouched and a block uses ``2 (d-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad


def n_angles(d: int, r: int) -> int:
    npairs = d // 2
    return r * 2 * npairs * 2


@lru_cache(maxsize=None)
def _layer_pairs(d: int):
    """Index arrays (a, b, inverse permutation) for the even and odd layers."""
    if d < 2:
        return ()
    layers = []
    even_a = np.arange(0, d - 1, 2)
    even_b = even_a + 1
    if d % 2 == 0:
        odd_a = np.arange(1, d, 2)
        odd_b = (odd_a + 1) % d
    else:
        odd_a = np.arange(1, d - 1, 2)
        odd_b = odd_a + 1
    for a, b in ((even_a, even_b), (odd_a, odd_b)):
        touched = np.concatenate([a, b])
        rest = np.setdiff1d(np.arange(d), touched)
        order = np.concatenate([a, b, rest])
        inv = np.argsort(order)
        layers.append((a, b, rest, inv))
    return tuple(layers)


@dataclass
class RotationFactors:
    """Per-layer (cos theta, cos phi sin theta, sin phi sin theta) coefficients."""

    d: int
    layers: list  # [(c, p, q)] in application order


def rotation_factors(angles, d: int, r: int) -> RotationFactors:
    """Precompute rotation coefficients from an angle array of shape (..., n_angles)."""
    m = n_angles(d, r)
    if ad.value(angles).shape[-1] != m:
        raise ad.ShapeError(f"expected {m} angles for d={d}, r={r}, got {ad.value(angles).shape[-1]}")
    npairs = d // 2
    layers = []
    if npairs == 0:
        return RotationFactors(d, layers)
    base = np.arange(2 * r)[:, None] * (2 * npairs) + 2 * np.arange(npairs)[None, :]
    theta = ad.take(angles, base, axis=-1)  # (..., 2r, npairs)
    phi = ad.take(angles, base + 1, axis=-1)
    s = ad.sin(theta)
    c = ad.cos(theta)
    p = ad.mul(ad.cos(phi), s)
    q = ad.mul(ad.sin(phi), s)
    for layer in range(2 * r):
        sel = (Ellipsis, layer, slice(None))
        layers.append((ad.getitem(c, sel), ad.getitem(p, sel), ad.getitem(q, sel)))
    return RotationFactors(d, layers)


def _rotate_layer(xr, xi, coeffs, pairs, adjoint):
    c, p, q = coeffs
    a_idx, b_idx, rest, inv = pairs
    ar, ai = ad.take(xr, a_idx), ad.take(xi, a_idx)
    br, bi = ad.take(xr, b_idx), ad.take(xi, b_idx)
    # e^{i phi} sin(t) * b  and  e^{-i phi} sin(t) * a
    eb_r = ad.sub(ad.mul(p, br), ad.mul(q, bi))
    eb_i = ad.add(ad.mul(p, bi), ad.mul(q, br))
    ea_r = ad.add(ad.mul(p, ar), ad.mul(q, ai))
    ea_i = ad.sub(ad.mul(p, ai), ad.mul(q, ar))
    car, cai = ad.mul(c, ar), ad.mul(c, ai)
    cbr, cbi = ad.mul(c, br), ad.mul(c, bi)
    if adjoint:
        na_r, na_i = ad.add(car, eb_r), ad.add(cai, eb_i)
        nb_r, nb_i = ad.sub(cbr, ea_r), ad.sub(cbi, ea_i)
    else:
        na_r, na_i = ad.sub(car, eb_r), ad.sub(cai, eb_i)
        nb_r, nb_i = ad.add(ea_r, cbr), ad.add(ea_i, cbi)
    parts_r, parts_i = [na_r, nb_r], [na_i, nb_i]
    if rest.size:
        parts_r.append(ad.take(xr, rest))
        parts_i.append(ad.take(xi, rest))
    yr = ad.take(ad.concat(parts_r, axis=-1), inv)
    yi = ad.take(ad.concat(parts_i, axis=-1), inv)
    return yr, yi


def apply_factors(factors: RotationFactors, xr, xi, adjoint: bool = False):
    """Apply V (or V* when ``adjoint``) given precomputed factors."""
    d = factors.d
    if ad.value(xr).shape[-1] != d:
        raise ad.ShapeError(f"vector width {ad.value(xr).shape[-1]} != d={d}")
    pairs = _layer_pairs(d)
    n = len(factors.layers)
    order = range(n - 1, -1, -1) if adjoint else range(n)
    for layer in order:
        xr, xi = _rotate_layer(xr, xi, factors.layers[layer], pairs[layer % 2], adjoint)
    return xr, xi


def apply_unitary(angles, xr, xi, d: int, r: int, adjoint: bool = False):
    return apply_factors(rotation_factors(angles, d, r), xr, xi, adjoint)


def apply_diag_exp(decay_re, decay_im, dt, xr, xi):
    """Coordinatewise ``exp(decay * dt) * x`` for complex ``decay`` and ``x``.

    ``dt`` broadcasts against the decay arrays (e.g. shape (..., S, 1) to
    evaluate several times at once).
    """
    dtv = np.asarray(ad.value(dt))
    if np.any(dtv < 0):
        raise ValueError("negative time step")
    mag = ad.exp(ad.mul(decay_re, dt))
    ang = ad.mul(decay_im, dt)
    er = ad.mul(mag, ad.cos(ang))
    ei = ad.mul(mag, ad.sin(ang))
    yr = ad.sub(ad.mul(er, xr), ad.mul(ei, xi))
    yi = ad.add(ad.mul(er, xi), ad.mul(ei, xr))
    return yr, yi


def materialize(angles, d: int, r: int, adjoint: bool = False) -> np.ndarray:
    """Dense complex matrix of the operator, built column by column."""
    angles = np.asarray(angles, dtype=np.float64)
    eye = np.eye(d)
    cr, ci = apply_unitary(angles, eye, np.zeros((d, d)), d, r, adjoint)
    # row j of the result is U e_j, i.e. column j of U
    return (cr + 1j * ci).T


def unitarity_residual_matrix(U: np.ndarray) -> float:
    U = np.asarray(U)
    return float(np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))))


def unitarity_residual(angles, d: int, r: int) -> float:
    """max |U U* - I| for the operator encoded by ``angles``."""
    return unitarity_residual_matrix(materialize(angles, d, r))
