"""Piecewise-constant propagation and exact control gradients."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.integrate import solve_ivp

from .blockgen import GeneratorFamily, Part, VanLoanLayout
from .matcore import expm


@dataclass(frozen=True)
class ControlSequence:
    """Real amplitudes (channels x steps) with per-step durations."""

    amplitudes: np.ndarray
    durations: np.ndarray

    def __init__(self, amplitudes, durations):
        a = np.array(amplitudes, dtype=float, ndmin=2)
        d = np.array(durations, dtype=float, ndmin=1)
        if a.shape[1] != d.shape[0]:
            raise ValueError(f"{a.shape[1]} amplitude columns for {d.shape[0]} durations")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite")
        if np.any(d < 0) or not np.all(np.isfinite(d)) or d.sum() <= 0:
            raise ValueError("durations must be nonnegative with a positive total")
        a.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "durations", d)

    @classmethod
    def uniform(cls, amplitudes, T: float) -> "ControlSequence":
        a = np.array(amplitudes, dtype=float, ndmin=2)
        return cls(a, np.full(a.shape[1], T / a.shape[1]))

    @property
    def channels(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def steps(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def T(self) -> float:
        return float(self.durations.sum())

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])

    def with_amplitudes(self, amplitudes) -> "ControlSequence":
        return ControlSequence(amplitudes, self.durations)


@dataclass
class PropagationResult:
    """Final propagator per part, and optionally ``dV/dbeta``.

    ``gradients[p]`` has shape ``(channels, steps, d, d)``.
    """

    parts: list
    gradients: list | None = None
    layout: VanLoanLayout | None = None

    def dense(self) -> np.ndarray:
        return self.layout.dense(self.parts)

    def extract(self, name: str) -> np.ndarray:
        return self.layout.extract(self.parts, name)


@dataclass(frozen=True)
class CommutatorSeries:
    """Truncated commutator expansion of the step derivative.

    ``terms`` counts the nested commutators kept after the leading ``E``.
    """

    terms: int = 15

    def __post_init__(self):
        if self.terms < 1:
            raise ValueError("commutator series needs at least one term")


@dataclass(frozen=True)
class AugmentedBlock:
    pass


def as_layout(obj) -> VanLoanLayout:
    """Accept a bare generator family as a one-block layout."""
    if isinstance(obj, VanLoanLayout):
        return obj
    if isinstance(obj, GeneratorFamily):
        part = Part(obj.drift, obj.controls, (obj.dim,), (0j,))
        return VanLoanLayout((part,), {"U": _entry0()})
    raise TypeError(f"cannot propagate a {type(obj).__name__}")


def _entry0():
    from .blockgen import Entry
    return Entry(0, 0, 0)


def step_generators(part: Part, controls: ControlSequence) -> np.ndarray:
    """``(L_0 + sum_i beta_ij L_i) dT_j`` stacked over steps."""
    ctrl = np.stack(part.controls)
    gens = part.drift[None] + np.einsum("ks,kij->sij", controls.amplitudes, ctrl)
    return gens * controls.durations[:, None, None]


def _step_exponentials(part: Part, controls: ControlSequence) -> tuple[np.ndarray, np.ndarray]:
    # identical (amplitude column, duration) pairs share one exponential
    key = np.vstack([controls.amplitudes, controls.durations[None]]).T
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    sub = ControlSequence(uniq[:, :-1].T, uniq[:, -1]) if uniq[:, -1].sum() > 0 else None
    if sub is None:
        gens = step_generators(part, controls)
        return gens, expm(gens)
    gens_u = step_generators(part, sub)
    exps_u = expm(gens_u)
    return gens_u[inverse], exps_u[inverse]


def _check(layout: VanLoanLayout, controls: ControlSequence):
    if controls.channels != layout.count:
        raise ValueError(f"layout has {layout.count} control channels, controls have {controls.channels}")


def propagate(layout, controls: ControlSequence) -> PropagationResult:
    """``V(T) = E_M ... E_1`` with ``E_j = expm(generator_j dT_j)``."""
    layout = as_layout(layout)
    _check(layout, controls)
    finals = []
    for part in layout.parts:
        _, exps = _step_exponentials(part, controls)
        V = np.eye(part.dim, dtype=complex)
        for E in exps:
            V = E @ V
        finals.append(V)
    return PropagationResult(finals, None, layout)


def _upsilon_series(gens, dirs, terms):
    # e^X * sum_{k<=terms} ad^k(E) / (k+1)!, ad(Y) = [Y, X]
    out = dirs.copy()
    term = dirs
    for k in range(1, terms + 1):
        term = term @ gens - gens @ term
        out = out + term / factorial(k + 1)
    return out


def _upsilon_augmented(gens, dirs):
    d = gens.shape[-1]
    big = np.zeros(gens.shape[:-2] + (2 * d, 2 * d), complex)
    big[..., :d, :d] = gens
    big[..., d:, d:] = gens
    big[..., :d, d:] = dirs
    return expm(big)[..., :d, d:]


def upsilon(gens: np.ndarray, dirs: np.ndarray, method=None) -> np.ndarray:
    """Derivative of ``expm(X)`` along ``E``, i.e. ``expm(X) int_0^1 e^{-Xu} E e^{Xu} du``.

    ``gens`` holds ``X`` and ``dirs`` holds ``E``; both may be stacked.
    """
    method = CommutatorSeries() if method is None else method
    if isinstance(method, AugmentedBlock):
        return _upsilon_augmented(gens, dirs)
    if isinstance(method, CommutatorSeries):
        return expm(gens) @ _upsilon_series(gens, dirs, method.terms)
    raise TypeError(f"unknown gradient method {method!r}")


def propagate_with_gradients(layout, controls: ControlSequence, method=None) -> PropagationResult:
    """Final propagator plus ``dV(T)/dbeta_rs = S_s Upsilon_rs P_s``.

    ``P_s`` is the product of the steps before ``s`` and ``S_s`` the product
    of the steps after it; both come from one forward and one backward sweep.
    """
    method = CommutatorSeries() if method is None else method
    layout = as_layout(layout)
    _check(layout, controls)
    finals, grads = [], []
    M = controls.steps
    for part in layout.parts:
        gens, exps = _step_exponentials(part, controls)
        d = part.dim
        prefix = np.empty((M, d, d), complex)
        suffix = np.empty((M, d, d), complex)
        acc = np.eye(d, dtype=complex)
        for s in range(M):
            prefix[s] = acc
            acc = exps[s] @ acc
        finals.append(acc)
        acc = np.eye(d, dtype=complex)
        for s in range(M - 1, -1, -1):
            suffix[s] = acc
            acc = acc @ exps[s]
        dirs = np.stack(part.controls)[:, None] * controls.durations[None, :, None, None]
        if isinstance(method, AugmentedBlock):
            ups = _upsilon_augmented(np.broadcast_to(gens, dirs.shape), dirs)
        elif isinstance(method, CommutatorSeries):
            ups = exps[None] @ _upsilon_series(gens[None], dirs, method.terms)
        else:
            raise TypeError(f"unknown gradient method {method!r}")
        grads.append(suffix[None] @ ups @ prefix[None])
    return PropagationResult(finals, grads, layout)


def flow(family: GeneratorFamily, controls: ControlSequence, times) -> np.ndarray:
    """``U(t)`` of the system generator at arbitrary times in ``[0, T]``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gens = step_generators(as_layout(family).parts[0], controls) / np.where(
        controls.durations > 0, controls.durations, 1.0)[:, None, None]
    starts = controls.starts
    exps = expm(gens * controls.durations[:, None, None])
    n = family.dim
    pre = np.empty((controls.steps, n, n), complex)
    acc = np.eye(n, dtype=complex)
    for j in range(controls.steps):
        pre[j] = acc
        acc = exps[j] @ acc
    seg = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, controls.steps - 1)
    tau = times - starts[seg]
    return expm(gens[seg] * tau[:, None, None]) @ pre[seg]


def toggling_decompose(family: GeneratorFamily, variation, controls: ControlSequence,
                       rtol: float = 1e-11, atol: float = 1e-12):
    """Split ``U_total`` of ``G + G_v`` into ``U(T) U_tog(T)``.

    ``variation(t)`` returns the generator variation at time ``t``.
    ``U_tog`` solves ``dU_tog/dt = U^{-1} G_v U U_tog`` with ``U_tog(0) = I``;
    each control step is integrated separately so step edges are breakpoints.
    """
    n = family.dim
    U_T = propagate(family, controls).parts[0]

    def rhs(t, y):
        U = flow(family, controls, [t])[0]
        Gv = np.asarray(variation(t), dtype=complex)
        Ut = np.linalg.solve(U, Gv @ U)
        return (Ut @ y.reshape(n, n)).reshape(-1)

    y = np.eye(n, dtype=complex).reshape(-1)
    edges = np.concatenate([controls.starts, [controls.T]])
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"toggling-frame integration failed: {sol.message}")
        y = sol.y[:, -1]
    return U_T, y.reshape(n, n)
