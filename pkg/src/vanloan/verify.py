"""Oracle-backed verification suites.

Each suite returns a list of :class:`Check` records with the measured error
and the tolerance it was held to. Random instances are drawn from a fixed
generator so runs are reproducible.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import blockgen as bg
from . import objective as ob
from . import oracle
from . import symterms as st
from . import transfer as tf
from .blockgen import Part, VanLoanLayout
from .propagate import AugmentedBlock, CommutatorSeries, ControlSequence, propagate, propagate_with_gradients


@dataclass
class Check:
    suite: str
    name: str
    error: float
    tol: float
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.suite}:{self.name} error={self.error:.3e} tol={self.tol:.1e}"

    def as_dict(self) -> dict:
        return asdict(self)


def _check(suite, name, err, tol, t0=None):
    err = float(err)
    return Check(suite, name, err, tol, bool(err <= tol), 0.0 if t0 is None else time.time() - t0)


def anti_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a - a.conj().T) / 2
    return scale * h / np.linalg.norm(h, 2)


def random_matrix(rng, n):
    return (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2 * n)


def random_instance(rng, n, channels=2, N=4, T=None):
    """Random anti-Hermitian family and controls with ``||G|| dT <= 1``."""
    T = float(rng.uniform(1.0, 3.0)) if T is None else T
    dT = T / N
    amps = rng.uniform(-1, 1, (channels, N))
    # spectral norm of each step generator stays below 1/dT
    budget = 1.0 / dT / (1 + channels)
    fam = bg.GeneratorFamily(anti_hermitian(rng, n, budget),
                             [anti_hermitian(rng, n, budget) for _ in range(channels)])
    return fam, ControlSequence.uniform(amps, T)


# Van Loan layouts against direct quadrature ---------------------------------

def suite_vanloan_f1(tol=1e-8, instances=50, seed=0):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    worst = 0.0
    for k in range(instances):
        n = 2 + k % 2
        m = 1 + k % 3
        fam, ctrl = random_instance(rng, n)
        ops = []
        for i in range(m):
            A = random_matrix(rng, n)
            ops.append(bg.weighted(int(rng.integers(2)), A) if rng.random() < 0.3 else bg.constant(A))
        lay = bg.build_f1(fam, bg.DysonSpec(ops))
        res = propagate(lay, ctrl)
        for i in range(1, m + 1):
            for j in range(i, m + 1):
                ref = oracle.nested_quadrature(fam, ctrl, ops[i - 1:j])
                worst = max(worst, np.abs(res.extract(f"D[{i}:{j}]") - ref).max())
    return [_check("vanloan-f1", f"{instances} instances, all Dyson blocks", worst, tol, t0)]


def suite_vanloan_exp(tol=1e-8, instances=25, seed=1):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    worst = 0.0
    for k in range(instances):
        n = 2 + k % 2
        fam, ctrl = random_instance(rng, n)
        T = ctrl.T
        rates = [complex(*(rng.uniform(-1, 1, 2))) for _ in range(2)]
        rates = [d * rng.uniform(0, 5) / (abs(d) * T) for d in rates]
        ops = [random_matrix(rng, n) for _ in range(2)]
        lay = bg.build_expsum(fam, bg.DysonSpec(ops, bg.ExpSum(tuple(rates))))
        got = propagate(lay, ctrl).extract("D")
        ref = oracle.nested_quadrature(fam, ctrl, ops,
                                       weight=lambda t1, t2: np.exp(rates[0] * t1 + rates[1] * t2))
        worst = max(worst, np.abs(got - ref).max())
    return [_check("vanloan-exp", f"{instances} instances, top-right block", worst, tol, t0)]


def _poly_reference(fam, ctrl, A1, A2, s1, s2):
    basis = {}
    for i in range(s1 + 1):
        for j in range(s2 + 1):
            basis[(i, j)] = oracle.nested_quadrature(
                fam, ctrl, [A1, A2], weight=lambda t1, t2, i=i, j=j: t1**i * t2**j)
    return basis


def ode_residual_orders(layout, ctrl, t=None, hs=(1e-2, 5e-3)):
    """Central-difference residual ``||dV/dt - L V||`` at two step sizes.

    ``V(t)`` is propagated to ``t +- h`` inside one control segment; the
    residual of the coupled block system falls like ``h^2``.
    """
    part = layout.parts[0]
    starts = ctrl.starts
    seg = ctrl.steps // 2
    t = starts[seg] + 0.5 * ctrl.durations[seg] if t is None else t
    L = part.drift + np.einsum("k,kij->ij", ctrl.amplitudes[:, seg], np.stack(part.controls))

    def V_at(tt):
        # truncate the sequence at tt
        durs = np.clip(tt - starts, 0, ctrl.durations)
        return propagate(layout, ControlSequence(ctrl.amplitudes, durs)).parts[0]

    res = []
    for h in hs:
        dV = (V_at(t + h) - V_at(t - h)) / (2 * h)
        res.append(np.abs(dV - L @ V_at(t)).max())
    return res


def suite_vanloan_poly(tol=1e-8, seed=2, max_degree=3):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    out = []
    worst = 0.0
    for s1 in range(max_degree + 1):
        for s2 in range(max_degree + 1):
            n = 2
            fam, ctrl = random_instance(rng, n, T=1.5)
            A1, A2 = random_matrix(rng, n), random_matrix(rng, n)
            lay = bg.build_poly(fam, A1, A2, s1, s2)
            res = propagate(lay, ctrl)
            basis = _poly_reference(fam, ctrl, A1, A2, s1, s2)
            grid = st.poly_top_right(s1, s2)
            for (r, c), e in grid.items():
                vec = st.vector_rep(e, s1, s2)
                ref = sum(float(v) * basis[(k // (s2 + 1), k % (s2 + 1))] for k, v in enumerate(vec) if v)
                worst = max(worst, np.abs(res.extract(f"P[{r},{c}]") - ref).max())
    out.append(_check("vanloan-poly", "top-right grids, s1, s2 <= 3", worst, tol, t0))
    fam, ctrl = random_instance(rng, 2, T=1.5)
    lay = bg.build_poly(fam, random_matrix(rng, 2), random_matrix(rng, 2), 2, 2)
    r1, r2 = ode_residual_orders(lay, ctrl)
    ratio = r1 / r2
    # halving h should divide the residual by about 4
    out.append(_check("vanloan-poly", f"coupled-system residual order (ratio {ratio:.2f})", abs(ratio - 4), 0.5))
    return out


# Theorem 1 -----------------------------------------------------------------

def random_block_part(rng, n=2, nb=4, channels=2, T=1.5, N=4):
    """Random block-upper-triangular part with distinct diagonal blocks."""
    d = n * nb
    budget = N / T / (1 + channels) / 2
    drift = np.zeros((d, d), complex)
    controls = [np.zeros((d, d), complex) for _ in range(channels)]
    for i in range(nb):
        for j in range(i, nb):
            sl = (slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))
            if i == j:
                drift[sl] = anti_hermitian(rng, n, budget)
                for c in controls:
                    c[sl] = anti_hermitian(rng, n, budget)
            else:
                drift[sl] = random_matrix(rng, n)
                if rng.random() < 0.5:
                    controls[int(rng.integers(channels))][sl] = random_matrix(rng, n)
    part = Part(drift, tuple(controls), (n,) * nb, (0j,) * nb)
    ctrl = ControlSequence.uniform(rng.uniform(-1, 1, (channels, N)), T)
    return VanLoanLayout((part,), {}), ctrl


def suite_theorem1(tol=1e-8, instances=3, seed=3):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    w_exp = w_rec = w_sym = 0.0
    for _ in range(instances):
        lay, ctrl = random_block_part(rng)
        blocks = bg.theorem1_blocks(lay, ctrl)
        for v in blocks.values():
            w_exp = max(w_exp, np.abs(v["explicit"] - v["propagated"]).max())
            w_rec = max(w_rec, np.abs(v["recursive"] - v["propagated"]).max())
        w_sym = max(w_sym, _symbolic_vs_propagated(lay, ctrl, blocks))
    return [
        _check("theorem1", "explicit chain sum vs propagated", w_exp, tol, t0),
        _check("theorem1", "recursive formula vs propagated", w_rec, tol),
        _check("theorem1", "symbolic to_exponential vs propagated", w_sym, tol),
    ]


def _symbolic_vs_propagated(lay, ctrl, blocks):
    part = lay.parts[0]
    nb = len(part.sizes)
    gen = oracle.BlockGenerator(part, ctrl)
    diag = [f"U{i}" for i in range(nb)]
    off = [[f"B{s}{e}" for e in range(s + 1, nb)] for s in range(nb - 1)]
    C = st.to_exponential(diag, off)
    flows = {f"U{i}": gen.flows[i] for i in range(nb)}
    ops = {f"B{s}{e}": gen.B(s, e) for s in range(nb) for e in range(s + 1, nb)}
    worst = 0.0
    for s in range(nb):
        for j, e in enumerate(C[s]):
            val = st.evaluate(e, ctrl.T, flows, ops, gen.edges)
            worst = max(worst, np.abs(val - blocks[(s, s + j)]["propagated"]).max())
    return worst


# gradients -----------------------------------------------------------------

def random_objective(rng, channels=3, steps=8, members=2, method=None, T=2.0):
    n = 2
    mem = []
    for _ in range(members):
        budget = steps / T / (1 + channels)
        fam = bg.GeneratorFamily(anti_hermitian(rng, n, budget),
                                 [anti_hermitian(rng, n, budget) for _ in range(channels)])
        ops = [random_matrix(rng, n), bg.weighted(int(rng.integers(channels)), random_matrix(rng, n))]
        mem.append(ob.EnsembleMember(bg.build_f1(fam, bg.DysonSpec(ops)), 1 / members))
    target = np.linalg.qr(random_matrix(rng, n))[0]
    terms = [
        ob.ObjectiveTerm("dyson_norm_sq", "D[1:1]", 0.3, 4 * T**2),
        ob.ObjectiveTerm("dyson_norm_root", "D", 0.2, 4 * T**2),
        ob.ObjectiveTerm("projection_sq", "D[2:2]", 0.2, 4 * T**2, projector=random_matrix(rng, n)),
        ob.ObjectiveTerm("fidelity_sq", "U", 0.3, target=target),
    ]
    return ob.ObjectiveSpec(mem, terms, T, steps, method=method or CommutatorSeries())


def suite_gradients(tol=1e-6, seed=4, instances=3, h=1e-6):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    out = []
    for method in (CommutatorSeries(15), AugmentedBlock()):
        worst = 0.0
        for _ in range(instances):
            spec = random_objective(rng, method=method)
            a = rng.uniform(-1, 1, (spec.channels, spec.steps))
            _, g = ob.value_and_gradient(spec, a)
            fd = oracle.finite_diff(lambda x: ob.evaluate(spec, x), a, h)
            worst = max(worst, np.abs(g - fd).max() / np.abs(fd).max())
        out.append(_check("gradients", f"{type(method).__name__} vs central differences (relative)",
                          worst, tol, t0))
    # the two Upsilon evaluations on two-level steps with ||X||_HS <= 1
    worst = 0.0
    for _ in range(200):
        X = anti_hermitian(rng, 2) + 1j * rng.normal() * np.eye(2)
        X *= rng.uniform(0.1, 1.0) / np.linalg.norm(X)
        E = random_matrix(rng, 2)
        worst = max(worst, np.abs(
            _ups(X, E, CommutatorSeries(15)) - _ups(X, E, AugmentedBlock())).max())
    out.append(_check("gradients", "commutator series vs augmented block", worst, 1e-12))
    return out


def _ups(X, E, method):
    from .propagate import upsilon
    return upsilon(X[None], E[None], method)[0]


# transfer maps ---------------------------------------------------------------

def suite_transfer(seed=5):
    rng = np.random.default_rng(seed)
    out = []
    err = 0.0
    for N in (8, 30, 64, 360):
        W = tf.dft_matrix(N)
        err = max(err, np.abs(W.conj().T @ W - np.eye(N)).max())
    out.append(_check("transfer", "DFT unitarity", err, 1e-13))
    err = 0.0
    for N in (8, 30, 64, 360):
        err = max(err, np.abs(tf.linear_transfer(N, 0.1, 1.0, 0.0).matrix - np.eye(N)).max())
    out.append(_check("transfer", "identity curves give the identity map", err, 1e-13))
    err = 0.0
    maps = [
        tf.linear_transfer(16, 0.05, lambda nu: 1 / (1 + nu**2 / 25), lambda nu: 0.02 * nu),
        tf.opt_transfer(24, 3, 0.05, 8.0),
        tf.clamp_ends(tf.opt_transfer(24, 3, 0.05, 8.0), 3),
    ]
    for tm in maps:
        a = rng.normal(size=(2, tm.in_steps))
        J11, J12, J21, J22 = tf.jacobian_entries(tm)
        J = np.block([[J11, J12], [J21, J22]])
        f = lambda x: tf.apply_two_channel(tm, x.reshape(2, -1)).reshape(-1)
        h = 1e-6
        fd = np.empty_like(J)
        x0 = a.reshape(-1)
        for k in range(x0.size):
            e = np.zeros_like(x0)
            e[k] = h
            fd[:, k] = (f(x0 + e) - f(x0 - e)) / (2 * h)
        err = max(err, np.abs(J - fd).max())
        # pullback is the transpose action
        g = rng.normal(size=(2, tm.out_steps))
        err = max(err, np.abs(tf.pullback_two_channel(tm, g).reshape(-1) - J.T @ g.reshape(-1)).max())
    out.append(_check("transfer", "analytic Jacobians vs finite differences", err, 1e-9))
    return out


# symbolic engine -------------------------------------------------------------

GOLDEN_3X3 = (
    "{Ex[1, U], Int[1, {U, A, U}], Int[1, {U, A, U}, {U, B, U}]}\n"
    "{Ex[1, U], Int[1, {U, B, U}]}\n"
    "{Ex[1, U]}"
)


def random_symbolic(rng, frames=("U",), ops=("A", "B"), terms=3, depth=3):
    """Random expression with identity slots, scalar multiples, sums and zeros."""
    out = []
    for _ in range(terms):
        m = int(rng.integers(1, depth + 1))
        U = frames[int(rng.integers(len(frames)))]
        factors = []
        for _ in range(m):
            r = rng.random()
            p = int(rng.integers(0, 3))
            if r < 0.35:
                op = st.Sym(st.IDENTITY, p)
            elif r < 0.55:
                op = st.SM(int(rng.integers(1, 4)), st.Sym(ops[int(rng.integers(len(ops)))], p))
            elif r < 0.7:
                op = st.Sum([st.Sym(ops[0], p), st.Sym(st.IDENTITY, 0)])
            elif r < 0.75:
                op = st.Zero()
            else:
                op = st.Sym(ops[int(rng.integers(len(ops)))], p)
            factors.append(st.Factor(U, op, U))
        out.append((st.Int(int(rng.integers(0, 2)), tuple(factors)), Fraction(int(rng.integers(1, 4)))))
    return st.SymExpr(out)


def suite_symbolic(tol=1e-8, seed=6, samples=30):
    rng = np.random.default_rng(seed)
    t0 = time.time()
    out = []
    C = st.to_exponential(["U", "U", "U"], [["A", 0], ["B"]])
    text = st.pretty_table(C)
    out.append(_check("symbolic", "worked 3x3 example golden text", 0.0 if text == GOLDEN_3X3 else 1.0, 0.0, t0))
    fam, ctrl = random_instance(rng, 2, channels=1, N=3, T=1.2)
    edges = np.concatenate([ctrl.starts, [ctrl.T]])
    flows = {"U": oracle.Flow(oracle.system_generators(fam, ctrl), edges)}
    opsmap = {"A": oracle.operator_sampler(random_matrix(rng, 2), ctrl),
              "B": oracle.operator_sampler(bg.weighted(0, random_matrix(rng, 2)), ctrl)}
    idem = 0
    worst = 0.0
    for _ in range(samples):
        e = random_symbolic(rng)
        s = st.simplify(e)
        if st.simplify(s) != s:
            idem += 1
        raw = st.evaluate_raw(e, ctrl.T, flows, opsmap, edges)
        val = st.evaluate(s, ctrl.T, flows, opsmap, edges) if s else None
        raw = 0 if raw is None else raw
        val = 0 if val is None else val
        worst = max(worst, float(np.abs(np.asarray(raw) - np.asarray(val)).max()))
    out.append(_check("symbolic", f"simplify idempotent on {samples} expressions", idem, 0))
    out.append(_check("symbolic", "simplify preserves numeric value", worst, tol))
    return out


def suite_conjecture(max_degree=4):
    t0 = time.time()
    out = []
    bad = 0
    for s1 in range(max_degree + 1):
        for s2 in range(max_degree + 1):
            Q = st.conjecture_matrix(s1, s2)
            if st.rank(Q) != (s1 + 1) * (s2 + 1):
                bad += 1
    out.append(_check("conjecture", f"full rank for all s1, s2 <= {max_degree}", bad, 0, t0))
    Q = st.conjecture_matrix(1, 1)
    ref = [[0, 0, 1, 0], [1, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]]
    same = all(Fraction(a) == Fraction(b) for ra, rb in zip(Q, ref) for a, b in zip(ra, rb))
    out.append(_check("conjecture", "s1 = s2 = 1 matrix equals the published one", 0.0 if same else 1.0, 0))
    return out


SUITES = {
    "vanloan-f1": suite_vanloan_f1,
    "vanloan-exp": suite_vanloan_exp,
    "vanloan-poly": suite_vanloan_poly,
    "theorem1": suite_theorem1,
    "gradients": suite_gradients,
    "transfer": suite_transfer,
    "symbolic": suite_symbolic,
    "conjecture": suite_conjecture,
}


def run_suite(name: str, tol: float | None = None) -> list:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    if tol is not None and "tol" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
        return fn(tol=tol)
    return fn()
