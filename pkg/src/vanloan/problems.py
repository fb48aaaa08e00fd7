"""Built-in example problems.

Each builder returns a :class:`Problem`: an objective, a search setup and
a ``report`` that turns a decision-variable matrix into named figures of
merit. The first three problems use dimensionless time; ``oneoverf`` and
``broadband`` use seconds and angular frequencies in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import blockgen as bg
from . import noisemodel as nm
from . import objective as ob
from . import transfer as tf
from .matcore import I2, SMINUS, SPLUS, SX, SY, SZ, expm, fidelity, hs_norm, kron
from .optimize import SearchConfig
from .propagate import ControlSequence, propagate

AMP = 1 / np.sqrt(2)


def dipolar_hamiltonian() -> np.ndarray:
    """``3 sz sz - sum_i si si`` on two spins."""
    return 3 * kron(SZ, SZ) - sum(kron(s, s) for s in (SX, SY, SZ))


def single_spin() -> bg.GeneratorFamily:
    return bg.GeneratorFamily(None, [-0.5j * SX, -0.5j * SY])


def two_spin() -> bg.GeneratorFamily:
    return bg.GeneratorFamily(None, [-0.5j * (kron(s, I2) + kron(I2, s)) for s in (SX, SY)])


def liouville(sigma) -> np.ndarray:
    """``-i (s/2 (x) I - I (x) s^T/2)``, the superoperator of ``-i [s/2, .]``."""
    return -1j * (kron(sigma / 2, I2) - kron(I2, sigma.T / 2))


@dataclass
class Problem:
    name: str
    spec: ob.ObjectiveSpec
    config: SearchConfig
    units: str = "dimensionless"
    info: dict = field(default_factory=dict)
    extra: object = None

    def controls(self, alpha) -> ControlSequence:
        """The generated waveform ``a(t)`` as a control sequence."""
        return ControlSequence.uniform(self.spec.waveform(alpha), self.spec.T)

    def report(self, alpha) -> dict:
        out = {"phi": ob.evaluate(self.spec, alpha), "members": ob.metrics(self.spec, alpha)}
        if self.extra is not None:
            out.update(self.extra(self, alpha))
        return out


def _box(bound, seeds=40):
    return SearchConfig(bounds=(-bound, bound), seeds=seeds)


def dipolar(T: float = 6.2, N: int = 100) -> Problem:
    """Two-spin dipolar decoupling: drive ``D_U(D)`` to zero."""
    D = dipolar_hamiltonian()
    lay = bg.build_f1(two_spin(), bg.DysonSpec([D]))
    norm = ob.dyson_normalization(D, T)  # 24 T^2
    terms = [ob.ObjectiveTerm("dyson_norm_sq", "D", 1.0, norm, label="dipolar")]
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay, 1.0, label="pair")], terms, T, N)
    return Problem("dipolar", spec, _box(AMP), info={"normalization": {"dipolar": "T ||D|| = sqrt(24) T"}})


def two_pulse(bound: float = AMP, steps_per_pulse: int = 50):
    """Two square pulses of 116 deg 14 min with orthogonal phases.

    The pulses run along the rotated axes ``(x + y)/sqrt 2`` and
    ``(x - y)/sqrt 2`` at full amplitude ``sqrt(2) * bound``, the same
    presentation basis used for the optimized pulses.
    """
    angle = np.deg2rad(116 + 14 / 60)
    rabi = np.sqrt(2) * bound
    tp = angle / rabi
    a = np.zeros((2, 2 * steps_per_pulse))
    a[:, :steps_per_pulse] = [[bound], [bound]]
    a[:, steps_per_pulse:] = [[bound], [-bound]]
    return ControlSequence.uniform(a, 2 * tp)


def two_pulse_dipolar_norm(bound: float = AMP, steps_per_pulse: int = 50, nodes: int = 24) -> dict:
    """First-order dipolar norm of the two-pulse sequence, Van Loan and quadrature.

    Both values are ``||D_U(D)|| / (T ||D||)`` with ``T`` the sequence length.
    """
    from . import oracle

    seq = two_pulse(bound, steps_per_pulse)
    D = dipolar_hamiltonian()
    lay = bg.build_f1(two_spin(), bg.DysonSpec([D]))
    res = propagate(lay, seq)
    vl = res.extract("D")
    ref = oracle.nested_quadrature(two_spin(), seq, [D], config=oracle.QuadratureConfig(nodes))
    scale = seq.T * hs_norm(D)
    return {"vanloan": hs_norm(vl) / scale, "oracle": hs_norm(ref) / scale,
            "difference": hs_norm(vl - ref) / scale, "T": seq.T}


def xy8like(T: float = 30.0, N: int = 200) -> Problem:
    """Universal decoupling robust to amplitude errors, implementing the identity."""
    ops = [SX, SY, SZ, bg.weighted(0, SX), bg.weighted(1, SY)]
    lay = bg.build_f1(single_spin(), bg.DysonSpec(ops))
    terms = []
    for k, lab in enumerate(("sx", "sy", "sz")):
        terms.append(ob.ObjectiveTerm("dyson_norm_sq", f"D[{k + 1}:{k + 1}]", 2 / 15,
                                      ob.dyson_normalization(SX, T), label=lab))
    for k, (lab, A) in enumerate((("ax_sx", SX), ("ay_sy", SY))):
        terms.append(ob.ObjectiveTerm("dyson_norm_sq", f"D[{k + 4}:{k + 4}]", 1 / 5,
                                      ob.dyson_normalization(A, T, bmax=AMP), label=lab))
    terms.append(ob.ObjectiveTerm("fidelity_sq", "U", 1 / 5, target=I2, label="identity"))
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay, 1.0, label="spin")], terms, T, N)
    return Problem("xy8like", spec, _box(AMP), extra=_infidelity("identity"),
                   info={"normalization": {"ax_sx": "b_max T ||sx|| with b_max = 1/sqrt 2"}})


def _infidelity(label):
    def extra(problem, alpha):
        f = ob.metrics(problem.spec, alpha)[0]["terms"][label]
        return {"infidelity": float(1 - f)}
    return extra


def exchange(T: float = 24.0, N: int = 200) -> Problem:
    """Remove ``sz`` and dipolar terms while keeping the exchange term proportional to ``s+``."""
    spin = bg.build_f1(single_spin(), bg.DysonSpec([SZ, SPLUS]))
    pair = bg.build_f1(two_spin(), bg.DysonSpec([dipolar_hamiltonian()]))
    lay = bg.direct_sum([spin, pair], ["spin", "pair"])
    terms = [
        ob.ObjectiveTerm("dyson_norm_sq", "spin/D[1:1]", 1 / 5, ob.dyson_normalization(SZ, T), label="sz"),
        ob.ObjectiveTerm("dyson_norm_sq", "pair/D", 1 / 5,
                         ob.dyson_normalization(dipolar_hamiltonian(), T), label="dipolar"),
        ob.ObjectiveTerm("projection_sq", "spin/D[2:2]", 1 / 5, T**2, projector=SZ, label="proj_sz"),
        ob.ObjectiveTerm("projection_sq", "spin/D[2:2]", 1 / 5, T**2, projector=SMINUS, label="proj_sminus"),
        ob.ObjectiveTerm("fidelity_sq", "spin/U", 1 / 5, target=I2, label="identity"),
    ]
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay, 1.0, label="spin+pair")], terms, T, N)
    return Problem("exchange", spec, _box(AMP), extra=_recoupling)


def _recoupling(problem, alpha):
    spec = problem.spec
    res = propagate(spec.members[0].layout, spec.member_controls(0, alpha))
    U = res.extract("spin/U")
    X = res.extract("spin/D[2:2]")
    inner = np.linalg.solve(U, X)
    # I = U^-1 D(s+) ~ c s+ with c = <s+, I> / <s+, s+>
    c = np.vdot(SPLUS, inner) / np.vdot(SPLUS, SPLUS)
    return {
        "recoupling_scale": float(abs(c) / spec.T),
        "recoupling_phase": float(np.angle(c)),
        "exchange_norm": float(hs_norm(X) / (spec.T * hs_norm(SPLUS))),
        "infidelity": float(1 - ob.metrics(spec, alpha)[0]["terms"]["identity"]),
    }


def y_gate_superoperator() -> np.ndarray:
    Y = expm(-1j * np.pi / 2 * SY)
    return kron(Y, Y.conj())


def oneoverf(T: float = 50e-9, N: int = 300, N0: int = 50, dNu: float = 400e6,
             coeffs=nm.PUBLISHED_COEFFS, rates=nm.PUBLISHED_RATES, rabi: float = 200e6) -> Problem:
    """Y gate robust to 1/f level-splitting noise, with an exponential-sum correlation model.

    The noise functional is ``|| sum_i c_i D_U(e^{d_i t} G_z, e^{-d_i t} G_z) ||``
    relative to ``sqrt 2`` times the double integral of the exact correlation.
    """
    Gz = liouville(SZ)
    fam = bg.GeneratorFamily(None, [liouville(SX), liouville(SY)])
    parts, combo = [], []
    for i, (c, d) in enumerate(zip(coeffs, rates)):
        parts.append(bg.build_expsum(fam, bg.DysonSpec([Gz, Gz], bg.ExpSum((d, -d)))))
        combo.append((f"e{i}/D", c))
    lay = bg.direct_sum(parts, [f"e{i}" for i in range(len(parts))])
    dT = T / N
    xi = tf.clamp_ends(tf.opt_transfer(N, N0, dT, dNu), N0)
    cc = nm.correlation_double_integral(T)
    terms = [
        ob.ObjectiveTerm("dyson_norm_sq", tuple(combo), 4 / 5, 2 * cc**2, label="noise"),
        ob.ObjectiveTerm("fidelity", "e0/U", 1 / 5, target=y_gate_superoperator(), label="y_gate"),
    ]
    spec = ob.ObjectiveSpec([ob.EnsembleMember(lay, 1.0, label="qubit")], terms, T, opt_transfer=xi)
    bound = AMP * 2 * np.pi * rabi
    return Problem("oneoverf", spec, _box(bound), units="SI (s, rad/s)",
                   info={"N": N, "N0": N0, "dNu": dNu, "double_integral": cc})


def data_file(name: str):
    return resources.files("vanloan").joinpath("data", name)


def synthetic_curves():
    """The shipped synthetic amplitude and phase transfer curves (callables of Hz)."""
    with resources.as_file(data_file("synthetic_lambda.txt")) as p:
        lam = tf.load_curve(p)
    with resources.as_file(data_file("synthetic_phi.txt")) as p:
        phi = tf.load_curve(p)
    return lam, phi


def broadband(gammas=None, N: int = 360, N0: int = 30, dT: float = 0.0208e-6, dNu: float = 10e6,
              lam=None, phi=None, smoothing: float = 0.01) -> Problem:
    """Ensemble pi/2 x-rotation that also decouples dipolar and ``sz`` terms.

    Member ``gamma`` (Rabi strength in Hz at unit amplitude) sees the
    waveform through ``2 pi gamma Xi(lambda, phi)``. All three metrics are
    norms, so the searched target smooths their cones by ``smoothing``; the
    report carries the exact value as ``phi_exact``.
    """
    gammas = np.linspace(0.9e6, 1.745e6, 5) if gammas is None else np.asarray(gammas, dtype=float)
    if lam is None or phi is None:
        dl, dp = synthetic_curves()
        lam = dl if lam is None else lam
        phi = dp if phi is None else phi
    T = N * dT
    base = tf.linear_transfer(N, dT, lam, phi)
    xi = tf.clamp_ends(tf.opt_transfer(N, N0, dT, dNu), N0)
    D = dipolar_hamiltonian()
    spin = bg.build_f1(single_spin(), bg.DysonSpec([SZ]))
    pair = bg.build_f1(two_spin(), bg.DysonSpec([D]))
    lay = bg.direct_sum([spin, pair], ["spin", "pair"])
    target = expm(-1j * np.pi / 2 * SX / 2)
    terms = [
        ob.ObjectiveTerm("infidelity", "spin/U", 5 / 9, target=target, label="psi_u", smoothing=smoothing),
        ob.ObjectiveTerm("dyson_norm_root", "pair/D", 3 / 9, ob.dyson_normalization(D, T, "root"), label="psi_d",
                         smoothing=smoothing),
        ob.ObjectiveTerm("dyson_norm_root", "spin/D", 1 / 9, ob.dyson_normalization(SZ, T, "root"), label="psi_sz",
                         smoothing=smoothing),
    ]
    w = 1 / len(gammas)
    members = [ob.EnsembleMember(lay, w, base.scaled(2 * np.pi * g, f"gamma={g:g}"), label=f"{g / 1e6:.4g}MHz")
               for g in gammas]
    spec = ob.ObjectiveSpec(members, terms, T, opt_transfer=xi)
    return Problem("broadband", spec, _box(AMP), units="SI (s, Hz)",
                   info={"N": N, "N0": N0, "dNu": dNu, "dT": dT, "gammas_Hz": gammas.tolist(),
                         "transfer_curves": "synthetic", "smoothing": smoothing},
                   extra=_ensemble_metrics)


def _ensemble_metrics(problem, alpha):
    mets = ob.metrics(problem.spec, alpha)
    out = {"phi_exact": ob.evaluate(ob.unsmoothed(problem.spec), alpha)}
    for key in ("psi_u", "psi_d", "psi_sz"):
        vals = [m["terms"][key] for m in mets]
        out[f"{key}_mean"] = float(np.mean(vals))
        out[f"{key}_max"] = float(np.max(vals))
    return out


def constant_baseline(problem: Problem, amplitudes=None) -> tuple:
    """Best constant decision vector ``(c, 0)`` by scanning ``c`` over the box.

    Returns ``(alpha, phi)``; used as the reference pulse for comparisons.
    """
    spec = ob.unsmoothed(problem.spec)
    lo, hi = problem.config.box(spec.channels)
    cs = np.linspace(lo[0, 0], hi[0, 0], 81) if amplitudes is None else np.asarray(amplitudes)
    best = None
    for c in cs:
        a = np.zeros((spec.channels, spec.steps))
        a[0] = c
        phi = ob.evaluate(spec, a)
        if best is None or phi > best[1]:
            best = (a, phi)
    return best


BUILTINS = {
    "dipolar": dipolar,
    "xy8like": xy8like,
    "exchange": exchange,
    "oneoverf": oneoverf,
    "broadband": broadband,
}


def builtin(name: str, **kw) -> Problem:
    try:
        make = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin problem {name!r}; choose from {sorted(BUILTINS)}") from None
    return make(**kw)
