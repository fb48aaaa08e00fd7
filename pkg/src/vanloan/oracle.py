"""Reference implementations that avoid the block-matrix machinery.

Nested time-ordered integrals are evaluated by Gauss-Legendre quadrature
on each piecewise-constant segment, restricted to the ordered simplex
``t_1 >= t_2 >= ...``. Propagators at quadrature nodes are exact: segment
prefix products times an in-segment exponential. ``ode_propagate`` uses an
adaptive Runge-Kutta integrator instead of exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.integrate import solve_ivp

from .matcore import expm


@dataclass(frozen=True)
class QuadratureConfig:
    nodes_per_step: int = 16

    def __post_init__(self):
        if self.nodes_per_step < 2:
            raise ValueError("need at least two nodes per step")


def _edges(controls) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(controls.durations)])


def nodes_below(edges: np.ndarray, uppers: np.ndarray, n: int):
    """Gauss nodes covering ``[0, u]`` for every upper limit ``u``.

    Returns ``(parent, t, w)``: ``parent[k]`` indexes ``uppers``. Every
    segment between consecutive ``edges`` is integrated separately so the
    integrand is smooth on each piece.
    """
    x, wx = np.polynomial.legendre.leggauss(n)
    uppers = np.asarray(uppers, dtype=float)
    par, ts, ws = [], [], []
    for k in range(len(edges) - 1):
        lo = edges[k]
        hi = np.minimum(edges[k + 1], uppers)
        live = np.nonzero(hi > lo)[0]
        if live.size == 0:
            continue
        h = (hi[live] - lo) / 2
        par.append(np.repeat(live, n))
        ts.append((lo + h[:, None] * (x[None] + 1)).reshape(-1))
        ws.append((h[:, None] * wx[None]).reshape(-1))
    if not par:
        return np.zeros(0, int), np.zeros(0), np.zeros(0)
    return np.concatenate(par), np.concatenate(ts), np.concatenate(ws)


class Flow:
    """``U(t)`` and ``U^{-1}(t)`` for a piecewise-constant generator."""

    def __init__(self, gens: np.ndarray, edges: np.ndarray):
        self.gens = np.asarray(gens, dtype=complex)
        self.edges = np.asarray(edges, dtype=float)
        dur = np.diff(self.edges)
        steps = expm(self.gens * dur[:, None, None])
        inv_steps = expm(-self.gens * dur[:, None, None])
        n = self.gens.shape[-1]
        M = len(dur)
        self.pre = np.empty((M, n, n), complex)
        self.pre_inv = np.empty((M, n, n), complex)
        acc = np.eye(n, dtype=complex)
        acc_inv = np.eye(n, dtype=complex)
        for j in range(M):
            self.pre[j] = acc
            self.pre_inv[j] = acc_inv
            acc = steps[j] @ acc
            acc_inv = acc_inv @ inv_steps[j]

    def _seg(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.gens) - 1)
        return t, seg, t - self.edges[seg]

    def at(self, t) -> np.ndarray:
        t, seg, tau = self._seg(t)
        return expm(self.gens[seg] * tau[:, None, None]) @ self.pre[seg]

    def inv(self, t) -> np.ndarray:
        t, seg, tau = self._seg(t)
        return self.pre_inv[seg] @ expm(-self.gens[seg] * tau[:, None, None])


class Piecewise:
    """A matrix-valued function constant on each control segment."""

    def __init__(self, values: np.ndarray, edges: np.ndarray):
        self.values = np.asarray(values, dtype=complex)
        self.edges = np.asarray(edges, dtype=float)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.values) - 1)
        return self.values[seg]


def system_generators(family, controls) -> np.ndarray:
    """Per-segment system generator ``G_0 + sum_i b_i G_i``."""
    ctrl = np.stack(family.controls)
    return family.drift[None] + np.einsum("ks,kij->sij", controls.amplitudes, ctrl)


def operator_sampler(op, controls):
    """Turn a matrix, a channel-weighted operator or a callable into ``A(t)``."""
    edges = _edges(controls)
    if callable(op):
        return op
    channel = getattr(op, "channel", None)
    mat = np.asarray(getattr(op, "matrix", op), dtype=complex)
    if channel is None:
        return Piecewise(np.broadcast_to(mat, (controls.steps,) + mat.shape), edges)
    amps = controls.amplitudes[channel]
    return Piecewise(amps[:, None, None] * mat[None], edges)


def nested_quadrature(family, controls, ops, weight=None, config: QuadratureConfig | None = None):
    """``U(T) int ... int f(t_1..t_m) A~_1(t_1) ... A~_m(t_m)`` over ``T >= t_1 >= ... >= t_m >= 0``.

    ``A~(t) = U^{-1}(t) A(t) U(t)`` with ``U`` generated by the family under
    the given controls. ``weight`` is a vectorized callable or ``None``.
    """
    m = len(ops)
    if not 1 <= m <= 3:
        raise ValueError("nested quadrature supports orders 1 to 3")
    cfg = config or QuadratureConfig()
    edges = _edges(controls)
    flow = Flow(system_generators(family, controls), edges)
    samplers = [operator_sampler(op, controls) for op in ops]

    levels = []
    uppers = np.array([controls.T])
    for _ in range(m):
        par, t, w = nodes_below(edges, uppers, cfg.nodes_per_step)
        levels.append((par, t, w))
        uppers = t

    # toggling-frame operator at every node of every level
    tilde = []
    for (par, t, w), A in zip(levels, samplers):
        tilde.append(flow.inv(t) @ A(t) @ flow.at(t))

    # walk leaf -> root to gather node index per level for each leaf
    idx = [None] * m
    idx[m - 1] = np.arange(len(levels[m - 1][1]))
    for k in range(m - 1, 0, -1):
        idx[k - 1] = levels[k][0][idx[k]]
    times = [levels[k][1][idx[k]] for k in range(m)]
    wts = np.prod([levels[k][2][idx[k]] for k in range(m)], axis=0)
    if weight is not None:
        wts = wts * np.asarray(weight(*times))
    prod = tilde[0][idx[0]]
    for k in range(1, m):
        prod = prod @ tilde[k][idx[k]]
    total = np.einsum("p,pij->ij", wts, prod)
    return flow.at([controls.T])[0] @ total


def chain_integral(t: float, edges, prefactor: int, factors, nodes: int = 16) -> np.ndarray:
    """Evaluate one nested-integral primitive at time ``t``.

    ``t^prefactor U_1(t) int dt_1 ... t_k^{p_k} U_k^{-1}(t_k) A_k(t_k) W_k(t_k) ...``
    where ``factors`` is a list of ``(U_flow, power, A_sampler, W_flow)``.
    The integrand factorizes level by level, so the sum is contracted from
    the innermost integral outwards.
    """
    levels = []
    uppers = np.array([float(t)])
    for _ in factors:
        par, ts, ws = nodes_below(edges, uppers, nodes)
        levels.append((par, ts, ws))
        uppers = ts
    inner = None
    for k in range(len(factors) - 1, -1, -1):
        Uf, p, A, Wf = factors[k]
        par, ts, ws = levels[k]
        mats = Uf.inv(ts) @ A(ts) @ Wf.at(ts) * (ws * ts**p)[:, None, None]
        if inner is not None:
            mats = mats @ inner
        nparent = len(levels[k - 1][1]) if k > 0 else 1
        acc = np.zeros((nparent,) + mats.shape[1:], complex)
        np.add.at(acc, par, mats)
        inner = acc
    U1 = factors[0][0]
    return float(t) ** prefactor * (U1.at([t])[0] @ inner[0])


class BlockGenerator:
    """Block view of one layout part under given controls, for Theorem 1 checks."""

    def __init__(self, part, controls):
        self.part = part
        self.edges = _edges(controls)
        ctrl = np.stack(part.controls)
        self.gens = part.drift[None] + np.einsum("ks,kij->sij", controls.amplitudes, ctrl)
        nb = len(part.sizes)
        self.nb = nb
        self.flows = []
        for i in range(nb):
            rs, cs = part.block_slice(i, i)
            self.flows.append(Flow(self.gens[:, rs, cs], self.edges))

    def B(self, i: int, j: int) -> Piecewise:
        rs, cs = self.part.block_slice(i, j)
        return Piecewise(self.gens[:, rs, cs], self.edges)

    def int_chain(self, chain, t: float, nodes: int = 16) -> np.ndarray:
        """``Int_(i_1..i_s)(t)`` for a strictly increasing index chain."""
        if len(chain) == 1:
            return self.flows[chain[0]].at([t])[0]
        factors = [(self.flows[a], 0, self.B(a, b), self.flows[b]) for a, b in zip(chain[:-1], chain[1:])]
        return chain_integral(t, self.edges, 0, factors, nodes)

    def explicit(self, s: int, e: int, t: float, nodes: int = 16) -> np.ndarray:
        """Sum of ``Int`` over every index chain from ``s`` to ``e``."""
        if s == e:
            return self.int_chain((s,), t, nodes)
        total = 0
        inner = range(s + 1, e)
        for r in range(0, e - s):
            for mid in combinations(inner, r):
                total = total + self.int_chain((s,) + mid + (e,), t, nodes)
        return total

    def _recursive(self, s: int, e: int, ts: np.ndarray, nodes: int) -> np.ndarray:
        if s == e:
            return self.flows[s].at(ts)
        par, t1, w1 = nodes_below(self.edges, ts, nodes)
        Uinv = self.flows[s].inv(t1)
        acc = None
        for i in range(1, e - s + 1):
            C = self._recursive(s + i, e, t1, nodes)
            integrand = Uinv @ self.B(s, s + i)(t1) @ C * w1[:, None, None]
            acc = integrand if acc is None else acc + integrand
        out = np.zeros((len(ts),) + acc.shape[1:], complex)
        np.add.at(out, par, acc)
        return self.flows[s].at(ts) @ out

    def recursive(self, s: int, e: int, t: float, nodes: int = 16) -> np.ndarray:
        """``C_{s,e}`` from the recursion over the first row of the block."""
        return self._recursive(s, e, np.array([float(t)]), nodes)[0]


def ode_propagate(family, controls, tol: float = 1e-10) -> np.ndarray:
    """Integrate ``dU/dt = G(t) U`` with an adaptive Runge-Kutta method."""
    gens = system_generators(family, controls)
    n = family.dim
    y = np.eye(n, dtype=complex).reshape(-1)
    edges = _edges(controls)
    for G, a, b in zip(gens, edges[:-1], edges[1:]):
        if b <= a:
            continue
        sol = solve_ivp(lambda t, v, G=G: (G @ v.reshape(n, n)).reshape(-1), (a, b), y,
                        method="DOP853", rtol=tol, atol=tol * 1e-2)
        if not sol.success:
            raise RuntimeError(f"ODE integration failed: {sol.message}")
        y = sol.y[:, -1]
    return y.reshape(n, n)


def finite_diff(fn, at, h: float = 1e-6) -> np.ndarray:
    """Central differences of a real function of the control amplitudes.

    ``at`` is either an array or a ``ControlSequence``; ``fn`` receives the
    same kind of object.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    seq = hasattr(at, "amplitudes")
    base = np.array(at.amplitudes if seq else at, dtype=float)
    grad = np.zeros_like(base)
    wrap = (lambda a: at.with_amplitudes(a)) if seq else (lambda a: a)
    for idx in np.ndindex(base.shape):
        up = base.copy()
        dn = base.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (fn(wrap(up)) - fn(wrap(dn))) / (2 * h)
    return grad
