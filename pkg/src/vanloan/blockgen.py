"""Van Loan block generator layouts.

A layout lifts a system generator family ``G_0 + sum_i b_i(t) G_i`` to
block-upper-triangular generators whose time-ordered exponential carries
Dyson terms in named off-diagonal blocks. Three weight families are
supported: ``f = 1``, sums of exponentials and bivariate monomials (second
order only). Layouts can be stacked as direct sums; every summand is kept
as a separate *part* and propagated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matcore import as_matrix


@dataclass(frozen=True)
class GeneratorFamily:
    """Drift ``G_0`` plus control generators ``G_1..G_l``."""

    drift: np.ndarray
    controls: tuple

    def __init__(self, drift, controls):
        controls = tuple(as_matrix(c, square=True) for c in controls)
        if not controls:
            raise ValueError("a generator family needs at least one control term")
        n = controls[0].shape[0]
        drift = np.zeros((n, n), complex) if drift is None else as_matrix(drift, square=True)
        for c in controls:
            if c.shape != (n, n):
                raise ValueError("control generators must share one dimension")
        if drift.shape != (n, n):
            raise ValueError("drift dimension does not match the control generators")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", controls)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def count(self) -> int:
        return len(self.controls)


@dataclass(frozen=True)
class Operator:
    """Operator slot of a Dyson term.

    ``channel`` is ``None`` for a constant operator; otherwise the slot holds
    ``b_channel(t) * matrix`` (0-based channel index).
    """

    matrix: np.ndarray
    channel: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_matrix(self.matrix, square=True))


def constant(matrix) -> Operator:
    return Operator(matrix)


def weighted(channel: int, matrix) -> Operator:
    return Operator(matrix, channel)


def _as_operator(op) -> Operator:
    return op if isinstance(op, Operator) else Operator(op)


@dataclass(frozen=True)
class One:
    pass


@dataclass(frozen=True)
class ExpSum:
    rates: tuple


@dataclass(frozen=True)
class Poly:
    s1: int
    s2: int


@dataclass(frozen=True)
class DysonSpec:
    operators: tuple
    weight: object = One()

    def __init__(self, operators, weight=None):
        ops = tuple(_as_operator(o) for o in operators)
        if not ops:
            raise ValueError("a Dyson term needs at least one operator")
        weight = One() if weight is None else weight
        if isinstance(weight, Poly) and len(ops) != 2:
            raise ValueError("polynomial weights are only available at second order")
        if isinstance(weight, ExpSum) and len(weight.rates) != len(ops):
            raise ValueError("need one exponential rate per operator")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "weight", weight)


@dataclass(frozen=True)
class Part:
    """One block-upper-triangular generator family (a direct summand)."""

    drift: np.ndarray
    controls: tuple
    sizes: tuple
    shifts: tuple

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def offsets(self) -> tuple:
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.sizes)]))

    def block_slice(self, i: int, j: int):
        o = self.offsets
        return slice(o[i], o[i + 1]), slice(o[j], o[j + 1])


@dataclass(frozen=True)
class Entry:
    """Location of a named block.

    ``rate`` records a scalar pre-factor ``exp(rate * t)`` carried by the raw
    block on top of the named quantity (exponential-weight layouts only).
    """

    part: int
    row: int
    col: int
    rate: complex = 0.0


@dataclass(frozen=True)
class VanLoanLayout:
    parts: tuple
    entries: dict = field(hash=False)

    @property
    def count(self) -> int:
        """Number of control channels shared by all parts."""
        return len(self.parts[0].controls)

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    @property
    def block_count(self) -> int:
        return sum(len(p.sizes) for p in self.parts)

    def entry(self, name: str) -> Entry:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"layout has no block named {name!r}") from None

    def extract(self, propagated: Sequence[np.ndarray], name: str, strip: bool = False,
                t: float | None = None) -> np.ndarray:
        """Read a named block out of per-part propagators.

        With ``strip=True`` the recorded exponential pre-factor is divided
        out, which needs the time ``t`` the propagators belong to.
        """
        e = self.entry(name)
        rs, cs = self.parts[e.part].block_slice(e.row, e.col)
        blk = propagated[e.part][rs, cs]
        if strip and e.rate != 0:
            if t is None:
                raise ValueError("stripping a pre-factor needs the time t")
            blk = blk * np.exp(-e.rate * t)
        return blk

    def global_block(self, i: int, j: int) -> tuple:
        """Map 0-based global block coordinates to (part, row, col)."""
        start = 0
        for k, p in enumerate(self.parts):
            nb = len(p.sizes)
            if start <= i < start + nb:
                if not start <= j < start + nb:
                    raise ValueError("block lies outside a direct summand (always zero)")
                return k, i - start, j - start
            start += nb
        raise IndexError("block index out of range")

    def dense_drift(self) -> np.ndarray:
        return _block_diag([p.drift for p in self.parts])

    def dense_controls(self) -> list:
        return [_block_diag([p.controls[i] for p in self.parts]) for i in range(self.count)]

    def dense(self, propagated: Sequence[np.ndarray]) -> np.ndarray:
        return _block_diag(list(propagated))


def _block_diag(mats) -> np.ndarray:
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n), complex)
    o = 0
    for m in mats:
        k = m.shape[0]
        out[o:o + k, o:o + k] = m
        o += k
    return out


class _Builder:
    def __init__(self, family: GeneratorFamily, nblocks: int):
        n = family.dim
        self.family = family
        self.n = n
        self.nb = nblocks
        d = n * nblocks
        self.drift = np.zeros((d, d), complex)
        self.controls = [np.zeros((d, d), complex) for _ in family.controls]
        self.shifts = [0j] * nblocks
        for k in range(nblocks):
            self.put(self.drift, k, k, family.drift)
            for c, g in zip(self.controls, family.controls):
                self.put(c, k, k, g)

    def put(self, target, i, j, mat, scale=1.0):
        n = self.n
        target[i * n:(i + 1) * n, j * n:(j + 1) * n] += scale * mat

    def place(self, i, j, op, scale=1.0):
        if op.matrix.shape != (self.n, self.n):
            raise ValueError("operator dimension does not match the generator family")
        if op.channel is None:
            self.put(self.drift, i, j, op.matrix, scale)
        else:
            if not 0 <= op.channel < len(self.controls):
                raise ValueError(f"operator refers to missing control channel {op.channel}")
            self.put(self.controls[op.channel], i, j, op.matrix, scale)

    def shift(self, k, value):
        self.shifts[k] = complex(value)
        self.put(self.drift, k, k, np.eye(self.n), value)

    def part(self) -> Part:
        return Part(self.drift, tuple(self.controls), (self.n,) * self.nb, tuple(self.shifts))


def _f1_entries(m: int, rates=None) -> dict:
    cum = np.concatenate([[0], np.cumsum(rates)]) if rates is not None else np.zeros(m + 1)
    entries = {}
    for k in range(m + 1):
        entries[f"U[{k + 1}]"] = Entry(0, k, k, complex(cum[k]))
    for i in range(1, m + 1):
        for j in range(i, m + 1):
            entries[f"D[{i}:{j}]"] = Entry(0, i - 1, j, complex(cum[i - 1]))
    entries["U"] = entries["U[1]"]
    entries["D"] = entries[f"D[1:{m}]"]
    return entries


def build_f1(family: GeneratorFamily, spec: DysonSpec) -> VanLoanLayout:
    """(m+1)-block layout: ``G`` on the diagonal, ``A_1..A_m`` above it.

    Block ``(i, j+1)`` (1-based) holds ``D_U(A_i, ..., A_j)`` and is named
    ``"D[i:j]"``; ``"D"`` is the full top-right term.
    """
    if not isinstance(spec.weight, One):
        raise ValueError("build_f1 needs a unit scalar weight")
    m = len(spec.operators)
    b = _Builder(family, m + 1)
    for k, op in enumerate(spec.operators):
        b.place(k, k + 1, op)
    return VanLoanLayout((b.part(),), _f1_entries(m))


def build_expsum(family: GeneratorFamily, spec: DysonSpec) -> VanLoanLayout:
    """Layout for the weight ``exp(d_1 t_1 + ... + d_m t_m)``.

    Block ``k+1`` on the diagonal is shifted by ``(d_1+...+d_k) I``. The
    top-right block is exactly the weighted term; interior blocks carry an
    extra ``exp((d_1+...+d_{i-1}) t)`` recorded in ``Entry.rate``.
    """
    if not isinstance(spec.weight, ExpSum):
        raise ValueError("build_expsum needs exponential rates")
    rates = [complex(d) for d in spec.weight.rates]
    m = len(rates)
    if m == 0:
        raise ValueError("empty rate list")
    b = _Builder(family, m + 1)
    cum = 0j
    for k, op in enumerate(spec.operators):
        b.place(k, k + 1, op)
        cum += rates[k]
        b.shift(k + 1, cum)
    return VanLoanLayout((b.part(),), _f1_entries(m, rates))


def poly_index(s1: int, s2: int) -> dict:
    """Block index of every variable of the polynomial system.

    Keys are ``("x", j)``, ``("y", j)``, ``("z", j)``. The order is
    ``z_{s1}..z_0, y_{s1}..y_0, x_{s1+s2}..x_0`` which makes the generator
    block-upper-triangular.
    """
    idx = {}
    for j in range(s1 + 1):
        idx[("z", j)] = s1 - j
        idx[("y", j)] = (s1 + 1) + (s1 - j)
    for j in range(s1 + s2 + 1):
        idx[("x", j)] = 2 * (s1 + 1) + (s1 + s2 - j)
    return idx


def build_poly(family: GeneratorFamily, a1, a2, s1: int, s2: int) -> VanLoanLayout:
    """Layout whose top-right (s1+1)x(s2+1) grid spans the terms
    ``D_U(t^i A1, t^j A2)`` for ``i <= s1``, ``j <= s2``.

    The grid block at row ``r``, column ``c`` is named ``"P[r,c]"``.
    """
    if s1 < 0 or s2 < 0:
        raise ValueError("polynomial degrees must be nonnegative")
    a1 = _as_operator(a1)
    a2 = _as_operator(a2)
    nb = 3 * s1 + s2 + 3
    idx = poly_index(s1, s2)
    b = _Builder(family, nb)
    eye = np.eye(family.dim)
    for j in range(1, s1 + s2 + 1):
        b.put(b.drift, idx[("x", j)], idx[("x", j - 1)], eye, j)
    for j in range(s1 + 1):
        if j > 0:
            b.put(b.drift, idx[("y", j)], idx[("y", j - 1)], eye, j)
        b.place(idx[("y", j)], idx[("x", j + s2)], a2)
        b.place(idx[("z", j)], idx[("y", j)], a1)
    entries = {"U": Entry(0, nb - 1, nb - 1)}
    for r in range(s1 + 1):
        for c in range(s2 + 1):
            entries[f"P[{r},{c}]"] = Entry(0, r, nb - (s2 + 1) + c)
    for key, k in idx.items():
        # column of x_0 holds each variable's trajectory from x_0(0) = I
        entries[f"{key[0]}[{key[1]}]"] = Entry(0, k, nb - 1)
    return VanLoanLayout((b.part(),), entries)


def direct_sum(layouts: Sequence[VanLoanLayout], labels: Sequence[str] | None = None) -> VanLoanLayout:
    """Stack layouts block-diagonally.

    Entry names are prefixed ``"<label>/"``; labels default to ``s0, s1, ...``.
    A single layout is returned unchanged.
    """
    layouts = list(layouts)
    if not layouts:
        raise ValueError("direct_sum of nothing")
    if len(layouts) == 1:
        return layouts[0]
    counts = {lay.count for lay in layouts}
    if len(counts) != 1:
        raise ValueError(f"summands disagree on the control count: {sorted(counts)}")
    labels = list(labels) if labels is not None else [f"s{k}" for k in range(len(layouts))]
    if len(labels) != len(layouts) or len(set(labels)) != len(labels):
        raise ValueError("need one distinct label per summand")
    parts = []
    entries = {}
    for lab, lay in zip(labels, layouts):
        base = len(parts)
        parts.extend(lay.parts)
        for name, e in lay.entries.items():
            entries[f"{lab}/{name}"] = Entry(base + e.part, e.row, e.col, e.rate)
    return VanLoanLayout(tuple(parts), entries)


def pad_controls(family: GeneratorFamily, count: int) -> GeneratorFamily:
    """Append zero control generators so a subsystem matches ``count`` channels."""
    extra = count - family.count
    if extra < 0:
        raise ValueError("family already has more channels than requested")
    zero = np.zeros_like(family.drift)
    return GeneratorFamily(family.drift, list(family.controls) + [zero] * extra)


def theorem1_blocks(layout: VanLoanLayout, controls, part: int = 0, nodes: int = 16) -> dict:
    """All blocks ``C_{s,s+j}(T)`` of one part, three ways.

    Returns ``{(s, e): {"propagated", "explicit", "recursive"}}`` with 0-based
    block indices. The explicit sum over index chains and the recursive
    formula are both evaluated by quadrature (see ``oracle``).
    """
    from . import oracle
    from .propagate import propagate

    p = layout.parts[part]
    V = propagate(layout, controls).parts[part]
    gen = oracle.BlockGenerator(p, controls)
    T = controls.T
    out = {}
    nb = len(p.sizes)
    for s in range(nb):
        for e in range(s, nb):
            rs, cs = p.block_slice(s, e)
            out[(s, e)] = {
                "propagated": V[rs, cs],
                "explicit": gen.explicit(s, e, T, nodes),
                "recursive": gen.recursive(s, e, T, nodes),
            }
    return out
