import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyperhawkes import autodiff as ad
from hyperhawkes.unitary import (apply_diag_exp, apply_unitary, materialize, n_angles, unitarity_residual,
                                 unitarity_residual_matrix)


def dense_givens(angles, d, r):
    """Reference operator built from explicit 2x2 complex rotations."""
    U = np.eye(d, dtype=complex)
    npairs = d // 2
    it = iter(np.asarray(angles).reshape(2 * r, npairs, 2))
    for layer in range(2 * r):
        if layer % 2 == 0:
            pairs = [(a, a + 1) for a in range(0, d - 1, 2)]
        elif d % 2 == 0:
            pairs = [(a, (a + 1) % d) for a in range(1, d, 2)]
        else:
            pairs = [(a, a + 1) for a in range(1, d - 1, 2)]
        G = np.eye(d, dtype=complex)
        for (a, b), (th, ph) in zip(pairs, next(it)):
            G[a, a], G[a, b] = np.cos(th), -np.exp(1j * ph) * np.sin(th)
            G[b, a], G[b, b] = np.exp(-1j * ph) * np.sin(th), np.cos(th)
        U = G @ U
    return U


def cvec(rng, shape):
    return rng.normal(size=shape), rng.normal(size=shape)


@pytest.mark.parametrize("d,r", [(2, 1), (4, 2), (8, 2), (6, 3), (3, 2), (5, 1)])
def test_matches_dense_givens_product(d, r, rng):
    angles = rng.uniform(-np.pi, np.pi, n_angles(d, r))
    U = dense_givens(angles, d, r)
    assert np.max(np.abs(materialize(angles, d, r) - U)) <= 1e-12
    assert np.max(np.abs(materialize(angles, d, r, adjoint=True) - U.conj().T)) <= 1e-12
    xr, xi = cvec(rng, d)
    yr, yi = apply_unitary(angles, xr, xi, d, r)
    assert np.max(np.abs((yr + 1j * yi) - U @ (xr + 1j * xi))) <= 1e-12


def test_angle_count_matches_2dr():
    for d in (2, 4, 32, 64):
        for r in (1, 2, 8):
            assert n_angles(d, r) == 2 * d * r


def test_zero_angles_identity(rng):
    xr, xi = cvec(rng, 8)
    yr, yi = apply_unitary(np.zeros(n_angles(8, 2)), xr, xi, 8, 2)
    assert np.array_equal(yr, xr) and np.array_equal(yi, xi)
    assert unitarity_residual(np.zeros(n_angles(8, 2)), 8, 2) <= 1e-15


def test_negative_control_residual(rng):
    U = dense_givens(rng.uniform(-3, 3, n_angles(4, 2)), 4, 2)
    U[0, 1] += 0.01
    assert unitarity_residual_matrix(U) > 1e-6


def test_wrong_angle_count_raises():
    with pytest.raises(ad.ShapeError):
        apply_unitary(np.zeros(5), np.zeros(4), np.zeros(4), 4, 2)


@given(st.sampled_from([2, 3, 4, 6, 8, 16]), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_norm_preservation_and_adjoint_inverse(d, r, seed):
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-10, 10, n_angles(d, r))
    xr, xi = cvec(rng, (3, d))
    yr, yi = apply_unitary(angles, xr, xi, d, r)
    n0 = np.sqrt(np.sum(xr**2 + xi**2, axis=-1))
    n1 = np.sqrt(np.sum(yr**2 + yi**2, axis=-1))
    assert np.all(np.abs(n1 - n0) <= 1e-12 * n0)
    zr, zi = apply_unitary(angles, yr, yi, d, r, adjoint=True)
    assert np.max(np.abs(zr - xr)) <= 1e-12 and np.max(np.abs(zi - xi)) <= 1e-12


def test_diag_exp_examples(rng):
    xr, xi = cvec(rng, 4)
    dre, dim = -rng.uniform(0.1, 1, 4), rng.normal(size=4)
    yr, yi = apply_diag_exp(dre, dim, 0.0, xr, xi)
    assert np.array_equal(yr, xr) and np.array_equal(yi, xi)
    yr, yi = apply_diag_exp(np.array([-1.0]), np.array([0.0]), np.log(2.0), np.array([4.0]), np.array([0.0]))
    assert np.isclose(yr[0], 2.0, atol=1e-15) and yi[0] == 0.0
    with pytest.raises(ValueError):
        apply_diag_exp(dre, dim, -1e-3, xr, xi)


def test_diag_exp_matches_complex_exponential_and_semigroup(rng):
    d = 6
    dre, dim = -rng.uniform(0.01, 2, d), rng.normal(size=d)
    xr, xi = cvec(rng, d)
    dt = 3.7
    yr, yi = apply_diag_exp(dre, dim, dt, xr, xi)
    ref = np.exp((dre + 1j * dim) * dt) * (xr + 1j * xi)
    assert np.max(np.abs(yr + 1j * yi - ref)) <= 1e-12
    zr, zi = xr, xi
    for _ in range(64):
        zr, zi = apply_diag_exp(dre, dim, dt / 64, zr, zi)
    assert np.max(np.abs((zr + 1j * zi) - ref)) <= 1e-12


@given(st.integers(0, 2**31 - 1), st.floats(0, 50))
def test_diag_exp_contracts(seed, dt):
    rng = np.random.default_rng(seed)
    dre, dim = -rng.uniform(1e-3, 3, 5), rng.normal(size=5) * 3
    xr, xi = cvec(rng, 5)
    yr, yi = apply_diag_exp(dre, dim, dt, xr, xi)
    assert np.sum(yr**2 + yi**2) <= np.sum(xr**2 + xi**2) * (1 + 1e-12)


@pytest.mark.parametrize("d", [4, 5])
def test_unitary_and_diag_gradients(d, rng):
    r = 2
    params = {"ang": rng.uniform(-3, 3, n_angles(d, r)), "dre": -rng.uniform(0.1, 1, d), "dim": rng.normal(size=d)}
    xr, xi = cvec(rng, d)
    w1, w2 = rng.normal(size=d), rng.normal(size=d)

    def f(p):
        yr, yi = apply_unitary(p["ang"], xr, xi, d, r, adjoint=True)
        yr, yi = apply_diag_exp(p["dre"], p["dim"], 1.3, yr, yi)
        yr, yi = apply_unitary(p["ang"], yr, yi, d, r)
        return ad.add(ad.sum(ad.mul(yr, w1)), ad.sum(ad.mul(yi, w2)))

    res = ad.check_gradient(f, params, eps=1e-5)
    assert res.max_rel_error <= 1e-5
