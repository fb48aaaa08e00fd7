"""Target functions built from propagated Van Loan blocks.

Every term turns a block ``X`` (or a linear combination of blocks) into a
score ``g`` in ``[0, 1]`` and the target is ``Phi = sum_k w_k g_k`` with
weights adding up to one; ensembles average ``Phi`` with member weights.
Fidelity-type terms score ``F^2``, ``F`` or ``1 - sqrt(1 - F^2)``; Dyson
and projection terms score ``1 - b`` with ``b`` the normalized (squared)
norm or squared overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import transfer as tf
from .matcore import hs_norm
from .propagate import (CommutatorSeries, ControlSequence, propagate,
                        propagate_with_gradients)

EPS = 1e-30

KINDS = ("fidelity_sq", "fidelity", "infidelity", "dyson_norm_sq", "dyson_norm_root", "projection_sq")


@dataclass(frozen=True)
class ObjectiveTerm:
    """One weighted contribution.

    ``block`` is an entry name or a sequence of ``(name, coefficient)``
    pairs whose combination is scored. ``smoothing`` (``eps``) replaces the
    cone ``m`` of the root-type kinds (``infidelity``, ``dyson_norm_root``)
    by ``sqrt(m^2 + eps^2) - eps`` so a gradient search does not stall where
    one ensemble member's metric reaches zero; reported metrics stay exact.
    """

    kind: str
    block: object
    weight: float
    normalization: float = 1.0
    target: np.ndarray | None = None
    projector: np.ndarray | None = None
    label: str | None = None
    smoothing: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.smoothing < 0:
            raise ValueError("smoothing must be nonnegative")
        if not self.normalization > 0:
            raise ValueError("normalization must be positive")
        if not 0 <= self.weight <= 1:
            raise ValueError("term weights must lie in [0, 1]")
        if self.kind.startswith("fidelity") or self.kind == "infidelity":
            if self.target is None:
                raise ValueError(f"{self.kind} term needs a target")
            object.__setattr__(self, "target", np.asarray(self.target, dtype=complex))
        if self.kind == "projection_sq":
            if self.projector is None:
                raise ValueError("projection term needs a projector")
            object.__setattr__(self, "projector", np.asarray(self.projector, dtype=complex))

    @property
    def combo(self) -> tuple:
        if isinstance(self.block, str):
            return ((self.block, 1.0),)
        return tuple((str(n), complex(c)) for n, c in self.block)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return self.block if isinstance(self.block, str) else "+".join(n for n, _ in self.combo)


@dataclass
class EnsembleMember:
    layout: object
    weight: float = 1.0
    transfer: tf.TransferMap | None = None
    terms: Sequence[ObjectiveTerm] | None = None
    label: str = ""


@dataclass
class ObjectiveSpec:
    """Ensemble target over piecewise-constant controls of total length ``T``.

    ``opt_transfer`` maps the decision variables to the generated waveform;
    each member's ``transfer`` maps the waveform to the amplitudes its
    system sees. Both default to the identity, in which case ``N`` gives
    the number of steps.
    """

    members: list
    terms: Sequence[ObjectiveTerm] | None
    T: float
    N: int | None = None
    opt_transfer: tf.TransferMap | None = None
    method: object = field(default_factory=CommutatorSeries)

    def __post_init__(self):
        if not self.members:
            raise ValueError("objective needs at least one ensemble member")
        total = sum(m.weight for m in self.members)
        if abs(total - 1) > 1e-9:
            raise ValueError(f"member weights add up to {total}, not 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        self._maps = []
        for m in self.members:
            terms = self.member_terms(m)
            wsum = sum(t.weight for t in terms)
            if abs(wsum - 1) > 1e-9:
                raise ValueError(f"term weights of member {m.label!r} add up to {wsum}, not 1")
            for t in terms:
                for name, _ in t.combo:
                    m.layout.entry(name)
            self._maps.append(self._compose(m))

    def member_terms(self, m: EnsembleMember):
        terms = m.terms if m.terms is not None else self.terms
        if not terms:
            raise ValueError("no objective terms")
        return list(terms)

    def _compose(self, m):
        maps = [x for x in (m.transfer, self.opt_transfer) if x is not None]
        if not maps:
            return None
        if m.layout.count != 2:
            raise ValueError("transfer maps act on two-channel controls")
        return tf.compose(*maps) if len(maps) == 2 else maps[0]

    @property
    def channels(self) -> int:
        return self.members[0].layout.count

    @property
    def steps(self) -> int:
        """Number of decision-variable columns."""
        if self.opt_transfer is not None:
            return self.opt_transfer.in_steps
        for mp in self._maps:
            if mp is not None:
                return mp.in_steps
        return self.N

    def member_controls(self, k: int, alpha) -> ControlSequence:
        alpha = np.asarray(getattr(alpha, "amplitudes", alpha), dtype=float)
        mp = self._maps[k]
        beta = alpha if mp is None else tf.apply_two_channel(mp, alpha)
        return ControlSequence.uniform(beta, self.T)

    def waveform(self, alpha) -> np.ndarray:
        """The generated waveform ``opt_transfer @ alpha`` (before member maps)."""
        alpha = np.asarray(getattr(alpha, "amplitudes", alpha), dtype=float)
        if self.opt_transfer is None:
            return alpha.copy()
        return tf.apply_two_channel(self.opt_transfer, alpha)


def dyson_normalization(A, T: float, style: str = "sq", bmax: float | None = None) -> float:
    """Largest possible norm of ``D_U(A)`` over time ``T``: ``T ||A||`` (times ``bmax``)."""
    if T <= 0:
        raise ValueError("T must be positive")
    val = T * hs_norm(A) * (1.0 if bmax is None else bmax)
    if style == "sq":
        return val**2
    if style == "root":
        return val
    raise ValueError(f"unknown style {style!r}")


def projection_term_value(block, projector, normalization: float) -> float:
    p = np.vdot(projector, block)
    return float(abs(p) ** 2 / normalization)


def term_score(term: ObjectiveTerm, X: np.ndarray):
    """Score ``g`` and its matrix gradient ``G`` (``dg = Re <G, dX>``), plus the raw metric.

    The metric is ``F`` for fidelity kinds, ``sqrt(1-F^2)`` for infidelity,
    ``||X|| / sqrt(normalization)`` for squared Dyson terms (the norm relative
    to its maximum), ``||X|| / normalization`` for root terms and
    ``|<P, X>| / sqrt(normalization)`` for projections.
    """
    k = term.kind
    N = term.normalization
    if k in ("fidelity_sq", "fidelity", "infidelity"):
        Tm = term.target
        if Tm.shape != X.shape:
            raise ValueError(f"target shape {Tm.shape} does not match block shape {X.shape}")
        o = np.vdot(Tm, X)
        nt = np.real(np.vdot(Tm, Tm))
        nx = max(np.real(np.vdot(X, X)), EPS)
        f2 = min(abs(o) ** 2 / (nt * nx), 1.0)
        G2 = 2 * o * Tm / (nt * nx) - 2 * abs(o) ** 2 * X / (nt * nx**2)
        if k == "fidelity_sq":
            return f2, G2, np.sqrt(f2)
        if k == "fidelity":
            f = np.sqrt(f2 + EPS)
            return np.sqrt(f2), G2 / (2 * f), np.sqrt(f2)
        e = term.smoothing
        m2 = max(1 - f2, 0)
        b = np.sqrt(m2 + e * e + EPS)
        return 1 - (np.sqrt(m2 + e * e) - e), G2 / (2 * b), np.sqrt(m2)
    if k == "dyson_norm_sq":
        n2 = np.real(np.vdot(X, X))
        return 1 - n2 / N, -2 * X / N, np.sqrt(n2 / N)
    if k == "dyson_norm_root":
        e = term.smoothing * N
        n2 = np.real(np.vdot(X, X))
        r = np.sqrt(n2 + e * e + EPS)
        return 1 - (np.sqrt(n2 + e * e) - e) / N, -X / (N * r), np.sqrt(n2) / N
    P = term.projector
    p = np.vdot(P, X)
    return 1 - abs(p) ** 2 / N, -2 * p * P / N, abs(p) / np.sqrt(N)


def _combo_block(layout, parts, term):
    X = None
    for name, c in term.combo:
        blk = c * layout.extract(parts, name)
        X = blk if X is None else X + blk
    return X


def _member_phi(spec, k, parts, want_grad):
    m = spec.members[k]
    lay = m.layout
    phi = 0.0
    grads = [np.zeros_like(p) for p in parts] if want_grad else None
    metrics = {}
    for term in spec.member_terms(m):
        X = _combo_block(lay, parts, term)
        g, G, metric = term_score(term, X)
        phi += term.weight * g
        metrics[term.name] = float(metric)
        if want_grad:
            for name, c in term.combo:
                e = lay.entry(name)
                rs, cs = lay.parts[e.part].block_slice(e.row, e.col)
                grads[e.part][rs, cs] += term.weight * np.conj(c) * G
    return phi, grads, metrics


def unsmoothed(spec: ObjectiveSpec) -> ObjectiveSpec:
    """Copy of ``spec`` with every term's smoothing set to zero (the exact target)."""
    def strip(terms):
        return None if terms is None else [replace(t, smoothing=0.0) for t in terms]

    if not any(t.smoothing for m in spec.members for t in spec.member_terms(m)):
        return spec
    members = [replace(m, terms=strip(m.terms)) for m in spec.members]
    return ObjectiveSpec(members, strip(spec.terms), spec.T, spec.N, spec.opt_transfer, spec.method)


def evaluate(spec: ObjectiveSpec, alpha) -> float:
    total = 0.0
    for k, m in enumerate(spec.members):
        res = propagate(m.layout, spec.member_controls(k, alpha))
        phi, _, _ = _member_phi(spec, k, res.parts, False)
        total += m.weight * phi
    return float(total)


def value_and_gradient(spec: ObjectiveSpec, alpha):
    """``Phi`` and ``dPhi/dalpha`` (same shape as the decision variables)."""
    alpha = np.asarray(getattr(alpha, "amplitudes", alpha), dtype=float)
    total = 0.0
    grad = np.zeros_like(alpha)
    for k, m in enumerate(spec.members):
        res = propagate_with_gradients(m.layout, spec.member_controls(k, alpha), spec.method)
        phi, Gs, _ = _member_phi(spec, k, res.parts, True)
        gb = 0.0
        for G, dV in zip(Gs, res.gradients):
            gb = gb + np.real(np.einsum("ij,rsij->rs", G.conj(), dV))
        mp = spec._maps[k]
        ga = gb if mp is None else tf.pullback_two_channel(mp, gb)
        total += m.weight * phi
        grad += m.weight * ga
    return float(total), grad


def gradient(spec: ObjectiveSpec, alpha) -> np.ndarray:
    return value_and_gradient(spec, alpha)[1]


def metrics(spec: ObjectiveSpec, alpha) -> list:
    """Per-member term metrics and ``Phi`` values, for reports."""
    out = []
    for k, m in enumerate(spec.members):
        res = propagate(m.layout, spec.member_controls(k, alpha))
        phi, _, met = _member_phi(spec, k, res.parts, False)
        out.append({"label": m.label, "weight": m.weight, "phi": float(phi), "terms": met})
    return out


def evaluate_waveform(spec: ObjectiveSpec, waveform) -> float:
    """``Phi`` for a generated waveform ``a(t)`` given directly (optimization map skipped)."""
    a = np.asarray(getattr(waveform, "amplitudes", waveform), dtype=float)
    total = 0.0
    for k, m in enumerate(spec.members):
        beta = a if m.transfer is None else tf.apply_two_channel(m.transfer, a)
        res = propagate(m.layout, ControlSequence.uniform(beta, spec.T))
        phi, _, _ = _member_phi(spec, k, res.parts, False)
        total += m.weight * phi
    return float(total)
