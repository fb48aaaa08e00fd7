import numpy as np
import pytest

from vanloan import transfer as tf


def test_dft_examples():
    assert np.allclose(tf.dft_matrix(1), [[1]])
    assert np.allclose(tf.dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    W = tf.dft_matrix(64)
    assert np.abs(W.conj().T @ W - np.eye(64)).max() < 1e-13


def test_freq_grid():
    assert np.allclose(tf.freq_grid(4, 1.0), [0, 0.25, -0.5, -0.25])
    assert tf.freq_grid(10, 0.3)[0] == 0
    assert np.abs(tf.freq_grid(8, 0.5)).max() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        tf.freq_grid(5, 1.0)


def test_linear_transfer_examples(rng):
    assert np.abs(tf.linear_transfer(16, 0.1, 1.0, 0.0).matrix - np.eye(16)).max() < 1e-13
    assert np.abs(tf.linear_transfer(16, 0.1, 2.5, 0.0).matrix - 2.5 * np.eye(16)).max() < 1e-13
    N, dT, k = 32, 0.1, 3
    M = tf.linear_transfer(N, dT, 1.0, lambda nu: 2 * np.pi * nu * dT * k).matrix
    x = rng.normal(size=N) + 1j * rng.normal(size=N)
    assert np.abs(M @ x - np.roll(x, k)).max() < 1e-10


def test_linear_transfer_is_normal():
    M = tf.linear_transfer(24, 0.05, lambda nu: 1 / (1 + nu**2), lambda nu: 0.1 * nu).matrix
    assert np.abs(M @ M.conj().T - M.conj().T @ M).max() < 1e-12


def test_zero_pad():
    assert np.array_equal(tf.zero_pad(5, 0).matrix, np.eye(5))
    out = tf.zero_pad(4, 1).matrix @ np.array([2.0, 3.0])
    assert np.array_equal(out, [0, 2, 3, 0])
    assert np.all(tf.zero_pad(10, 3).matrix.sum(axis=0) == 1)
    with pytest.raises(ValueError):
        tf.zero_pad(4, 2)


def test_bandpass_lambda():
    d = 7.0
    assert tf.bandpass_lambda(0.0, d) == pytest.approx(1.0, abs=1e-8)
    assert tf.bandpass_lambda(d / 2, d) == pytest.approx(0.5, abs=1e-8)
    nu = np.linspace(-20, 20, 101)
    assert np.array_equal(tf.bandpass_lambda(nu, d), tf.bandpass_lambda(-nu, d))
    with pytest.raises(ValueError):
        tf.bandpass_lambda(0.0, 0.0)


def test_opt_transfer(rng):
    N, dT = 32, 0.1
    M = tf.opt_transfer(N, 0, dT, 100 / dT).matrix
    assert np.abs(M - np.eye(N)).max() < 1e-6
    assert tf.opt_transfer(360, 30, 0.0208e-6, 10e6).matrix.shape == (360, 300)
    dNu = 2.0
    tm = tf.opt_transfer(N, 4, dT, dNu)
    a = rng.normal(size=(2, tm.in_steps))
    b = tf.apply_two_channel(tm, a)
    W = tf.dft_matrix(N)
    padded = tf.zero_pad(N, 4).matrix @ (a[0] - 1j * a[1])
    lam = tf.bandpass_lambda(tf.freq_grid(N, dT), dNu)
    assert np.abs(tf.spectrum(b) - lam * (W @ padded)).max() < 1e-12


def test_apply_two_channel(rng):
    a = rng.normal(size=(2, 6))
    assert np.allclose(tf.apply_two_channel(tf.identity(6), a), a)
    rot = tf.identity(6).scaled(1j)
    assert np.allclose(tf.apply_two_channel(rot, a), np.vstack([a[1], -a[0]]))
    R = rng.normal(size=(6, 6))
    b = tf.apply_two_channel(tf.TransferMap(R), a)
    assert np.allclose(b, np.vstack([R @ a[0], R @ a[1]]))
    with pytest.raises(ValueError):
        tf.apply_two_channel(tf.identity(5), a)


def test_real_linearity(rng):
    tm = tf.linear_transfer(12, 0.1, lambda nu: 1 + 0 * nu, lambda nu: nu)
    a, b = rng.normal(size=(2, 2, 12))
    lhs = tf.apply_two_channel(tm, a + b)
    assert np.abs(lhs - tf.apply_two_channel(tm, a) - tf.apply_two_channel(tm, b)).max() < 1e-13


def test_jacobians(rng):
    J = tf.jacobian_entries(tf.identity(4))
    assert np.array_equal(J[0], np.eye(4)) and not J[1].any() and not J[2].any()
    tm = tf.linear_transfer(10, 0.1, lambda nu: np.exp(-nu**2 / 10), lambda nu: 0.3 * nu)
    a = rng.normal(size=(2, 10))
    J11, J12, J21, J22 = tf.jacobian_entries(tm)
    Jfull = np.block([[J11, J12], [J21, J22]])
    h = 1e-6
    fd = np.empty_like(Jfull)
    x0 = a.reshape(-1)
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = h
        fd[:, k] = (tf.apply_two_channel(tm, (x0 + e).reshape(2, -1)).reshape(-1)
                    - tf.apply_two_channel(tm, (x0 - e).reshape(2, -1)).reshape(-1)) / (2 * h)
    assert np.abs(Jfull - fd).max() < 1e-9


def test_composed_jacobian(rng):
    left = tf.linear_transfer(12, 0.1, lambda nu: 1 / (1 + nu**2), lambda nu: nu)
    right = tf.opt_transfer(12, 2, 0.1, 3.0)
    comp = tf.compose(left, right)
    assert np.array_equal(comp.matrix, left.matrix @ right.matrix)

    def real_form(tm):
        J = tf.jacobian_entries(tm)
        return np.block([[J[0], J[1]], [J[2], J[3]]])

    assert np.abs(real_form(comp) - real_form(left) @ real_form(right)).max() < 1e-12
    with pytest.raises(ValueError):
        tf.compose(right, left)


def test_pullback_is_transpose(rng):
    tm = tf.opt_transfer(16, 2, 0.1, 3.0)
    J = tf.jacobian_entries(tm)
    Jf = np.block([[J[0], J[1]], [J[2], J[3]]])
    g = rng.normal(size=(2, 16))
    assert np.abs(tf.pullback_two_channel(tm, g).reshape(-1) - Jf.T @ g.reshape(-1)).max() < 1e-13


def test_clamp_ends_zero_segments(rng):
    N, N0 = 60, 5
    tm = tf.clamp_ends(tf.opt_transfer(N, N0, 0.1, 2.0), N0)
    b = tf.apply_two_channel(tm, rng.normal(size=(2, N - 2 * N0)))
    assert not b[:, :N0].any() and not b[:, -N0:].any()
    assert np.abs(b[:, N0:-N0]).min() > 0
    # plain zero padding gives exact zeros
    z = tf.apply_two_channel(tf.zero_pad(N, N0), rng.normal(size=(2, N - 2 * N0)))
    assert not z[:, :N0].any() and not z[:, -N0:].any()


def test_gamma_scaling(rng):
    base = tf.linear_transfer(20, 0.1, lambda nu: 1 / (1 + nu**2), lambda nu: nu)
    a = rng.normal(size=(2, 20))
    b1 = tf.apply_two_channel(base.scaled(2 * np.pi * 1.0), a)
    b3 = tf.apply_two_channel(base.scaled(2 * np.pi * 3.0), a)
    assert np.abs(b3 - 3 * b1).max() < 1e-12


def test_load_curve(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# nu value\n-1 0\n0 1\n1 3\n")
    c = tf.load_curve(str(p))
    assert c(0.5) == pytest.approx(2.0)
    assert c(-5.0) == pytest.approx(0.0)
    assert c(7.0) == pytest.approx(3.0)
