import numpy as np
import pytest

from vanloan import blockgen as bg
from vanloan import objective as ob
from vanloan import oracle
from vanloan import problems as pr
from vanloan import transfer as tf
from vanloan.matcore import I2, SMINUS, SPLUS, SX, SZ
from vanloan.propagate import AugmentedBlock, ControlSequence, propagate
from vanloan.verify import random_objective


def test_dyson_normalization():
    T = 3.0
    assert ob.dyson_normalization(SZ, T) == pytest.approx(2 * T**2)
    assert ob.dyson_normalization(pr.dipolar_hamiltonian(), T) == pytest.approx(24 * T**2)
    assert ob.dyson_normalization(np.eye(3), T) == pytest.approx(3 * T**2)
    assert ob.dyson_normalization(SZ, T, "root") == pytest.approx(np.sqrt(2) * T)
    assert ob.dyson_normalization(SX, T, bmax=0.5) == pytest.approx(0.5 * T**2)
    with pytest.raises(ValueError):
        ob.dyson_normalization(SZ, 0.0)


def test_projection_term_value():
    c = 0.3 - 0.4j
    assert ob.projection_term_value(c * SPLUS, SZ, 2.0) == pytest.approx(0.0)
    assert ob.projection_term_value(np.zeros((2, 2)), SMINUS, 2.0) == 0.0
    # direct trace: Tr(s-^dag c s+) = c Tr(s+ s+) = 0, while Tr(s+^dag c s+) = c
    direct = abs(np.trace(SMINUS.conj().T @ (c * SPLUS))) ** 2 / 2.0
    assert ob.projection_term_value(c * SPLUS, SMINUS, 2.0) == pytest.approx(direct, abs=1e-15)
    assert ob.projection_term_value(c * SPLUS, SPLUS, 2.0) == pytest.approx(abs(c) ** 2 / 2.0)
    # a block with an s- component is detected by the s- projector
    assert ob.projection_term_value(c * SMINUS, SMINUS, 2.0) == pytest.approx(abs(c) ** 2 / 2.0)


def test_term_validation():
    with pytest.raises(ValueError):
        ob.ObjectiveTerm("bogus", "D", 1.0)
    with pytest.raises(ValueError):
        ob.ObjectiveTerm("fidelity_sq", "U", 1.0)
    with pytest.raises(ValueError):
        ob.ObjectiveTerm("dyson_norm_sq", "D", 1.0, normalization=0.0)


def test_spec_validation():
    lay = bg.build_f1(pr.single_spin(), bg.DysonSpec([SZ]))
    t = ob.ObjectiveTerm("dyson_norm_sq", "D", 0.5, 2.0)
    with pytest.raises(ValueError):
        ob.ObjectiveSpec([ob.EnsembleMember(lay)], [t], 1.0, 4)
    with pytest.raises(KeyError):
        ob.ObjectiveSpec([ob.EnsembleMember(lay)], [ob.ObjectiveTerm("dyson_norm_sq", "nope", 1.0)], 1.0, 4)
    with pytest.raises(ValueError):
        ob.ObjectiveSpec([ob.EnsembleMember(lay, 0.5)], [ob.ObjectiveTerm("dyson_norm_sq", "D", 1.0)], 1.0, 4)


def test_fidelity_of_achieved_propagator(rng):
    fam = pr.single_spin()
    lay = bg.build_f1(fam, bg.DysonSpec([SZ]))
    a = rng.uniform(-1, 1, (2, 6))
    U = propagate(lay, ControlSequence.uniform(a, 2.0)).extract("U")
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay)], [ob.ObjectiveTerm("fidelity_sq", "U", 1.0, target=U)], 2.0, 6)
    assert ob.evaluate(spec, a) == pytest.approx(1.0, abs=1e-14)


def test_dipolar_zero_controls():
    p = pr.dipolar()
    assert ob.evaluate(p.spec, np.zeros((2, 100))) == pytest.approx(0.0, abs=1e-14)


def test_exchange_against_oracle_blocks(rng):
    p = pr.exchange(T=4.0, N=12)
    a = rng.uniform(-pr.AMP, pr.AMP, (2, 12))
    ctrl = ControlSequence.uniform(a, 4.0)
    T = 4.0
    D = pr.dipolar_hamiltonian()
    dz = oracle.nested_quadrature(pr.single_spin(), ctrl, [SZ])
    dp = oracle.nested_quadrature(pr.single_spin(), ctrl, [SPLUS])
    dd = oracle.nested_quadrature(pr.two_spin(), ctrl, [D])
    U = oracle.ode_propagate(pr.single_spin(), ctrl, 1e-12)
    F2 = abs(np.trace(U)) ** 2 / (2 * np.real(np.trace(U.conj().T @ U)))
    want = (1 - np.linalg.norm(dz) ** 2 / (2 * T**2)
            + 1 - np.linalg.norm(dd) ** 2 / (24 * T**2)
            + 1 - abs(np.trace(SZ.conj().T @ dp)) ** 2 / T**2
            + 1 - abs(np.trace(SMINUS.conj().T @ dp)) ** 2 / T**2
            + F2) / 5
    assert ob.evaluate(p.spec, a) == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("method", [None, AugmentedBlock()])
def test_gradient_vs_finite_differences(rng, method):
    spec = random_objective(rng, method=method)
    a = rng.uniform(-1, 1, (spec.channels, spec.steps))
    g = ob.gradient(spec, a)
    fd = oracle.finite_diff(lambda x: ob.evaluate(spec, x), a, 1e-6)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6


def test_gradient_through_transfer_maps(rng):
    p = pr.broadband(gammas=[1.0e6, 1.5e6], N=40, N0=4, dT=0.05e-6, dNu=40e6)
    a = rng.uniform(-0.3, 0.3, (2, p.spec.steps))
    g = ob.gradient(p.spec, a)
    fd = oracle.finite_diff(lambda x: ob.evaluate(p.spec, x), a, 1e-6)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6


def test_dyson_sq_gradient_formula(rng):
    p = pr.dipolar(T=2.0, N=6)
    a = rng.uniform(-0.7, 0.7, (2, 6))
    g = ob.gradient(p.spec, a)
    fd = oracle.finite_diff(lambda x: ob.evaluate(p.spec, x), a, 1e-6)
    assert np.abs(g - fd).max() < 1e-6 * max(1.0, np.abs(fd).max())


def test_stationary_at_perfect_target(rng):
    lay = bg.build_f1(pr.single_spin(), bg.DysonSpec([SZ]))
    a = rng.uniform(-1, 1, (2, 5))
    U = propagate(lay, ControlSequence.uniform(a, 1.5)).extract("U")
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay)], [ob.ObjectiveTerm("fidelity_sq", "U", 1.0, target=U)], 1.5, 5)
    phi, g = ob.value_and_gradient(spec, a)
    assert phi == pytest.approx(1.0, abs=1e-14)
    assert np.linalg.norm(g) < 1e-8


def test_identity_transfer_degeneracy(rng):
    lay = bg.build_f1(pr.single_spin(), bg.DysonSpec([SZ]))
    terms = [ob.ObjectiveTerm("dyson_norm_sq", "D", 1.0, 2.0)]
    a = rng.uniform(-1, 1, (2, 8))
    plain = ob.ObjectiveSpec([ob.EnsembleMember(lay)], terms, 1.0, 8)
    ident = ob.ObjectiveSpec([ob.EnsembleMember(lay, transfer=tf.identity(8))], terms, 1.0, 8)
    assert np.array_equal(ob.gradient(plain, a), ob.gradient(ident, a))


def test_ensemble_linearity(rng):
    spec = random_objective(rng)
    a = rng.uniform(-1, 1, (spec.channels, spec.steps))
    parts = []
    for m in spec.members:
        single = ob.ObjectiveSpec([ob.EnsembleMember(m.layout, 1.0)], spec.terms, spec.T, spec.N)
        parts.append(m.weight * ob.evaluate(single, a))
    assert ob.evaluate(spec, a) == pytest.approx(sum(parts), abs=1e-13)


@pytest.mark.parametrize("name,kw", [
    ("dipolar", {"N": 20}), ("xy8like", {"N": 20}), ("exchange", {"N": 20}),
    ("oneoverf", {"N": 40, "N0": 5}), ("broadband", {"gammas": [1e6, 1.5e6], "N": 40, "N0": 4}),
])
def test_phi_in_unit_interval(rng, name, kw):
    p = pr.builtin(name, **kw)
    lo, hi = p.config.box(p.spec.channels)
    for _ in range(20):
        a = lo + (hi - lo) * rng.random((p.spec.channels, p.spec.steps))
        phi = ob.evaluate(p.spec, a)
        assert -1e-12 <= phi <= 1 + 1e-12


def test_perfect_synthetic_instance():
    # two full turns about x: U(T) = I and the toggling-frame sz averages out
    lay = bg.build_f1(pr.single_spin(), bg.DysonSpec([SZ]))
    T, N = 2 * np.pi, 64
    a = np.zeros((2, N))
    a[0] = 2.0
    terms = [ob.ObjectiveTerm("dyson_norm_sq", "D", 0.5, 2 * T**2),
             ob.ObjectiveTerm("fidelity_sq", "U", 0.5, target=I2)]
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay)], terms, T, N)
    met = ob.metrics(spec, a)[0]["terms"]
    assert met["D"] < 1e-14 and met["U"] == pytest.approx(1.0, abs=1e-14)
    assert ob.evaluate(spec, a) == pytest.approx(1.0, abs=1e-14)


def test_evaluate_waveform_matches(rng):
    p = pr.broadband(gammas=[1.0e6, 1.5e6], N=40, N0=4, dT=0.05e-6, dNu=40e6)
    a = rng.uniform(-0.3, 0.3, (2, p.spec.steps))
    w = p.spec.waveform(a)
    assert ob.evaluate_waveform(p.spec, w) == pytest.approx(ob.evaluate(p.spec, a), abs=1e-12)


def test_smoothing_gradient_and_exact_copy(rng):
    p = pr.broadband(gammas=[1.0e6, 1.5e6], N=40, N0=4, dT=0.05e-6, dNu=40e6, smoothing=0.05)
    a = rng.uniform(-0.3, 0.3, (2, p.spec.steps))
    g = ob.gradient(p.spec, a)
    fd = oracle.finite_diff(lambda x: ob.evaluate(p.spec, x), a, 1e-6)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6
    exact = ob.unsmoothed(p.spec)
    assert all(t.smoothing == 0 for t in exact.terms)
    plain = pr.broadband(gammas=[1.0e6, 1.5e6], N=40, N0=4, dT=0.05e-6, dNu=40e6, smoothing=0.0)
    assert ob.evaluate(exact, a) == pytest.approx(ob.evaluate(plain.spec, a), abs=1e-14)
    # smoothing only raises each cone term, by at most eps per unit weight
    assert 0 < ob.evaluate(p.spec, a) - ob.evaluate(exact, a) <= 0.05
    assert [m["terms"] for m in ob.metrics(p.spec, a)] == [m["terms"] for m in ob.metrics(exact, a)]


def test_smoothed_root_is_differentiable_at_zero():
    lay = bg.build_f1(pr.single_spin(), bg.DysonSpec([SZ]))
    T, N = 2 * np.pi, 16
    a = np.zeros((2, N))
    a[0] = 2.0                  # two full turns: D vanishes exactly
    for eps, bounded in ((0.0, False), (0.1, True)):
        term = ob.ObjectiveTerm("dyson_norm_root", "D", 1.0, ob.dyson_normalization(SZ, T, "root"), smoothing=eps)
        spec = ob.ObjectiveSpec([ob.EnsembleMember(lay)], [term], T, N)
        d = np.zeros_like(a)
        d[1, 0] = 1.0
        h = 1e-7
        right = (ob.evaluate(spec, a + h * d) - ob.evaluate(spec, a)) / h
        left = (ob.evaluate(spec, a) - ob.evaluate(spec, a - h * d)) / h
        # a cone has one-sided slopes of opposite sign; the smoothed term does not
        assert (abs(right - left) < 1e-4) == bounded


def test_negative_smoothing_rejected():
    with pytest.raises(ValueError, match="smoothing"):
        ob.ObjectiveTerm("dyson_norm_root", "D", 1.0, smoothing=-1.0)
