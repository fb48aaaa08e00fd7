import numpy as np
import pytest

from vanloan import blockgen as bg
from vanloan import oracle
from vanloan.matcore import SX, expm
from vanloan.propagate import ControlSequence, propagate
from vanloan.verify import random_instance, random_matrix


def test_first_order_constant_integrand():
    fam = bg.GeneratorFamily(None, [np.zeros((2, 2))])
    ctrl = ControlSequence.uniform([[0.0, 0.0]], 2.0)
    assert np.allclose(oracle.nested_quadrature(fam, ctrl, [SX]), 2 * SX)


def test_second_order_identity(rng):
    fam, ctrl = random_instance(rng, 2)
    U = propagate(fam, ctrl).parts[0]
    got = oracle.nested_quadrature(fam, ctrl, [np.eye(2), np.eye(2)])
    assert np.abs(got - ctrl.T**2 / 2 * U).max() < 1e-12


def test_order_limit(rng):
    fam, ctrl = random_instance(rng, 2)
    with pytest.raises(ValueError):
        oracle.nested_quadrature(fam, ctrl, [np.eye(2)] * 4)
    with pytest.raises(ValueError):
        oracle.QuadratureConfig(1)


def test_self_convergence(rng):
    fam, ctrl = random_instance(rng, 2, N=2, T=3.0)
    ops = [random_matrix(rng, 2), random_matrix(rng, 2)]
    ref = oracle.nested_quadrature(fam, ctrl, ops, config=oracle.QuadratureConfig(16))
    e2 = np.abs(oracle.nested_quadrature(fam, ctrl, ops, config=oracle.QuadratureConfig(2)) - ref).max()
    e4 = np.abs(oracle.nested_quadrature(fam, ctrl, ops, config=oracle.QuadratureConfig(4)) - ref).max()
    assert e4 < e2 / 100


def test_ode_propagate(rng):
    G = np.array([[0, 1], [-1, 0]], complex) * 0.8j
    fam = bg.GeneratorFamily(G, [np.zeros((2, 2))])
    ctrl = ControlSequence.uniform([[0.0]], 1.5)
    assert np.abs(oracle.ode_propagate(fam, ctrl, 1e-11) - expm(1.5 * G)).max() < 1e-10
    fam, ctrl = random_instance(rng, 3, N=3)
    V = oracle.ode_propagate(fam, ctrl, 1e-11)
    assert np.abs(V - propagate(fam, ctrl).parts[0]).max() < 1e-9
    assert np.abs(V.conj().T @ V - np.eye(3)).max() < 1e-9


def test_finite_diff(rng):
    c = rng.normal(size=(2, 3))
    x = rng.normal(size=(2, 3))
    assert np.allclose(oracle.finite_diff(lambda a: float(np.sum(c * a)), x, 0.3), c, atol=1e-13)
    g = oracle.finite_diff(lambda a: float(np.sum(a**2)), x, 1e-3)
    assert np.abs(g - 2 * x).max() < 1e-10
    with pytest.raises(ValueError):
        oracle.finite_diff(lambda a: 0.0, x, 0.0)


def test_finite_diff_truncation_order():
    f = lambda a: float(np.sin(a).sum())
    x = np.array([[0.3]])
    errs = [abs(oracle.finite_diff(f, x, h)[0, 0] - np.cos(0.3)) for h in (1e-2, 5e-3)]
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_weighted_operator_sampler(rng):
    fam, ctrl = random_instance(rng, 2, channels=2)
    A = random_matrix(rng, 2)
    s = oracle.operator_sampler(bg.weighted(1, A), ctrl)
    t = ctrl.starts[2] + 1e-3
    assert np.allclose(s(t)[0], ctrl.amplitudes[1, 2] * A)
