"""Symbolic nested-integral terms and their rewrite rules.

Two primitives describe every entry of a time-ordered exponential of a
block-upper-triangular generator:

``Ex[t^m, U]``
    ``t^m U(t)``.
``Int[t^m, {U_1, t^{s_1} A_1, W_1}, ..., {U_n, t^{s_n} A_n, W_n}]``
    ``t^m U_1(t) int_0^t dt_1 ... int_0^{t_{n-1}} dt_n
    prod_k t_k^{s_k} U_k^{-1}(t_k) A_k(t_k) W_k(t_k)``.

Coefficients are exact ``Fraction`` values. Operator slots may hold zero,
scalar multiples and sums before simplification; ``simplify`` brings every
term to a normal form and performs the integrals of ``t^m I`` that appear
between matching frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

FORMAT_VERSION = 1
REWRITE_BUDGET = 10**6

IDENTITY = "I"


# operator expressions ------------------------------------------------------

@dataclass(frozen=True)
class Sym:
    """``t^power * name``; ``name == "I"`` is the identity."""

    name: str
    power: int = 0


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class SM:
    """Time-independent scalar multiple ``c * op``."""

    c: Fraction
    op: object

    def __init__(self, c, op):
        object.__setattr__(self, "c", Fraction(c))
        object.__setattr__(self, "op", as_op(op))


@dataclass(frozen=True)
class Sum:
    ops: tuple

    def __init__(self, ops):
        object.__setattr__(self, "ops", tuple(as_op(o) for o in ops))


def as_op(x):
    """Coerce user input: ``0``, a symbol name, ``(c, name)``, a list (sum)."""
    if isinstance(x, (Sym, Zero, SM, Sum)):
        return x
    if x is None or (isinstance(x, (int, Fraction)) and x == 0) or x == "0":
        return Zero()
    if isinstance(x, str):
        return Sym(x)
    if isinstance(x, tuple) and len(x) == 2:
        return SM(x[0], x[1])
    if isinstance(x, list):
        return Sum(x)
    raise TypeError(f"cannot read {x!r} as an operator")


def times_t(op, q: int):
    """Multiply an operator expression by ``t^q``."""
    if q == 0:
        return op
    if isinstance(op, Sym):
        return Sym(op.name, op.power + q)
    if isinstance(op, SM):
        return SM(op.c, times_t(op.op, q))
    if isinstance(op, Sum):
        return Sum([times_t(o, q) for o in op.ops])
    return op


# terms ------------------------------------------------------------------

@dataclass(frozen=True)
class Ex:
    power: int
    U: str


@dataclass(frozen=True)
class Factor:
    U: str
    op: object
    W: str


@dataclass(frozen=True)
class Int:
    power: int
    factors: tuple

    def __post_init__(self):
        if not self.factors:
            raise ValueError("Int needs at least one factor")


class SymExpr:
    """Formal linear combination of primitives with exact coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        acc: dict = {}
        for term, c in (terms.items() if isinstance(terms, dict) else (terms or [])):
            acc[term] = acc.get(term, Fraction(0)) + Fraction(c)
        self.terms = {t: c for t, c in acc.items() if c != 0}

    @classmethod
    def of(cls, term, c=1) -> "SymExpr":
        return cls([(term, c)])

    def __add__(self, other: "SymExpr") -> "SymExpr":
        return SymExpr(list(self.terms.items()) + list(other.terms.items()))

    def __sub__(self, other: "SymExpr") -> "SymExpr":
        return self + other.scale(-1)

    def scale(self, c) -> "SymExpr":
        return SymExpr([(t, v * Fraction(c)) for t, v in self.terms.items()])

    def __eq__(self, other) -> bool:
        return isinstance(other, SymExpr) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __repr__(self) -> str:
        return f"SymExpr({pretty(self)})"


# rewriting ----------------------------------------------------------------

def _rewrite_op(factors, k):
    """Normalize the operator of factor ``k``; ``None`` if already normal."""
    f = factors[k]
    op = f.op
    if isinstance(op, Zero):
        return []
    if isinstance(op, SM):
        return [(_replace(factors, k, Factor(f.U, op.op, f.W)), op.c)]
    if isinstance(op, Sum):
        return [(_replace(factors, k, Factor(f.U, o, f.W)), Fraction(1)) for o in op.ops]
    return None


def _replace(factors, k, new):
    return factors[:k] + (new,) + factors[k + 1:]


def _integrable(f: Factor) -> bool:
    return isinstance(f.op, Sym) and f.op.name == IDENTITY and f.U == f.W


def rewrite_once(term):
    """Apply one rule to ``term``; returns ``[(term, coeff), ...]`` or ``None``.

    Operator normalization (zero, scalar multiples, sums) goes first; then the
    innermost integrable ``t^m I`` slot is integrated out.
    """
    if isinstance(term, Ex):
        return None
    fs = term.factors
    for k in range(len(fs)):
        out = _rewrite_op(fs, k)
        if out is not None:
            return [(Int(term.power, nf), c) for nf, c in out]
    n = len(fs)
    for k in range(n - 1, -1, -1):
        f = fs[k]
        if not _integrable(f):
            continue
        m = f.op.power
        inv = Fraction(1, m + 1)
        if n == 1:
            return [(Ex(term.power + m + 1, f.U), inv)]
        if k == n - 1:
            prev = fs[k - 1]
            nf = fs[:k - 1] + (Factor(prev.U, times_t(prev.op, m + 1), prev.W),)
            return [(Int(term.power, nf), inv)]
        if k == 0:
            nxt = fs[1]
            if nxt.U != f.U:
                # the outer frame would change; leave the term alone
                continue
            rest = fs[1:]
            moved = (Factor(nxt.U, times_t(nxt.op, m + 1), nxt.W),) + fs[2:]
            return [(Int(term.power + m + 1, rest), inv), (Int(term.power, moved), -inv)]
        prev, nxt = fs[k - 1], fs[k + 1]
        a = fs[:k - 1] + (Factor(prev.U, times_t(prev.op, m + 1), prev.W), nxt) + fs[k + 2:]
        b = fs[:k - 1] + (prev, Factor(nxt.U, times_t(nxt.op, m + 1), nxt.W)) + fs[k + 2:]
        return [(Int(term.power, a), inv), (Int(term.power, b), -inv)]
    return None


def simplify(e: SymExpr, budget: int = REWRITE_BUDGET) -> SymExpr:
    """Rewrite every term to a fixed point of the rule set."""
    done: dict = {}
    stack = list(e.terms.items())
    steps = 0
    while stack:
        term, c = stack.pop()
        out = rewrite_once(term)
        if out is None:
            done[term] = done.get(term, Fraction(0)) + c
            continue
        steps += 1
        if steps > budget:
            raise RuntimeError("rewrite budget exhausted")
        for t2, c2 in out:
            stack.append((t2, c * c2))
    return SymExpr(done)


def recursive_rule(U: str, op, e: SymExpr) -> SymExpr:
    """``U(t) int_0^t U^{-1} op C(t_1)`` for ``C`` given symbolically.

    ``Ex[q, z] -> Int[1, {U, t^q op, z}]`` and
    ``Int[q, {U1, A1, W1}, ...] -> Int[1, {U, t^q op, U1}, {U1, A1, W1}, ...]``.
    """
    op = as_op(op)
    out = []
    for term, c in e.terms.items():
        if isinstance(term, Ex):
            out.append((Int(0, (Factor(U, times_t(op, term.power), term.U),)), c))
        else:
            head = Factor(U, times_t(op, term.power), term.factors[0].U)
            out.append((Int(0, (head,) + term.factors), c))
    return SymExpr(out)


def to_exponential(diagonals: Sequence[str], off_diagonals) -> list:
    """Symbolic time-ordered exponential of a block-upper-triangular generator.

    ``off_diagonals[s][k]`` is the block ``B_{s, s+k+1}``. Returns the upper
    triangle as ``C[s][j] = C_{s, s+j}``.
    """
    n = len(diagonals)
    if len(off_diagonals) != max(n - 1, 0) and not (n == 1 and len(off_diagonals) == 0):
        raise ValueError(f"need {n - 1} rows of off-diagonal blocks, got {len(off_diagonals)}")
    for s, row in enumerate(off_diagonals):
        if len(row) != n - 1 - s:
            raise ValueError(f"off-diagonal row {s} should have {n - 1 - s} entries")
    B = [[as_op(x) for x in row] for row in off_diagonals]
    C = [[SymExpr.of(Ex(0, diagonals[s]))] for s in range(n)]
    for j in range(1, n):
        for s in range(n - j):
            acc = SymExpr()
            for i in range(1, j + 1):
                op = B[s][i - 1]
                if isinstance(op, Zero):
                    continue
                acc = acc + recursive_rule(diagonals[s], op, C[s + i][j - i])
            C[s].append(simplify(acc))
    return C


# Dyson-term coordinates ------------------------------------------------------

def dyson(i: int, j: int, A1: str = "A1", A2: str = "A2", U: str = "U") -> SymExpr:
    """``D_U(t^i A1, t^j A2)``."""
    return SymExpr.of(Int(0, (Factor(U, Sym(A1, i), U), Factor(U, Sym(A2, j), U))))


def vector_rep(e: SymExpr, s1: int, s2: int, A1: str = "A1", A2: str = "A2") -> list:
    """Coordinates of ``e`` in the basis ``D_U(t^i A1, t^j A2)``, lexicographic."""
    vec = [Fraction(0)] * ((s1 + 1) * (s2 + 1))
    for term, c in e.terms.items():
        ok = (isinstance(term, Int) and term.power == 0 and len(term.factors) == 2
              and isinstance(term.factors[0].op, Sym) and isinstance(term.factors[1].op, Sym)
              and term.factors[0].op.name == A1 and term.factors[1].op.name == A2
              and term.factors[0].op.power <= s1 and term.factors[1].op.power <= s2)
        if not ok:
            raise ValueError(f"term outside the monomial Dyson basis: {pretty(SymExpr.of(term))}")
        i, j = term.factors[0].op.power, term.factors[1].op.power
        vec[(s2 + 1) * i + j] += c
    return vec


def poly_generator_table(s1: int, s2: int):
    """Symbolic diagonal and off-diagonal tables of the polynomial layout."""
    from .blockgen import poly_index

    idx = poly_index(s1, s2)
    nb = 3 * s1 + s2 + 3
    grid = [[Zero() for _ in range(nb)] for _ in range(nb)]
    for j in range(1, s1 + s2 + 1):
        grid[idx[("x", j)]][idx[("x", j - 1)]] = SM(j, IDENTITY)
    for j in range(s1 + 1):
        if j > 0:
            grid[idx[("y", j)]][idx[("y", j - 1)]] = SM(j, IDENTITY)
        grid[idx[("y", j)]][idx[("x", j + s2)]] = Sym("A2")
        grid[idx[("z", j)]][idx[("y", j)]] = Sym("A1")
    off = [[grid[s][e] for e in range(s + 1, nb)] for s in range(nb - 1)]
    return ["U"] * nb, off


def poly_top_right(s1: int, s2: int) -> dict:
    """Symbolic top-right grid ``{(r, c): SymExpr}`` of the polynomial exponential."""
    diag, off = poly_generator_table(s1, s2)
    C = to_exponential(diag, off)
    nb = len(diag)
    out = {}
    for r in range(s1 + 1):
        for c in range(s2 + 1):
            col = nb - (s2 + 1) + c
            out[(r, c)] = C[r][col - r]
    return out


def conjecture_matrix(s1: int, s2: int) -> list:
    """Exact matrix whose columns are the vectorized top-right blocks."""
    grid = poly_top_right(s1, s2)
    cols = [vector_rep(grid[(r, c)], s1, s2) for r in range(s1 + 1) for c in range(s2 + 1)]
    k = len(cols)
    return [[cols[j][i] for j in range(k)] for i in range(k)]


def rank(Q) -> int:
    """Exact rank by fraction Gaussian elimination."""
    M = [[Fraction(x) for x in row] for row in Q]
    rows = len(M)
    cols = len(M[0]) if rows else 0
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        for i in range(rows):
            if i != r and M[i][c] != 0:
                f = M[i][c] / M[r][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        r += 1
    return r


def solve(Q, rhs) -> list:
    """Exact solution of ``Q x = rhs``; raises if ``Q`` is singular."""
    n = len(Q)
    M = [[Fraction(x) for x in row] + [Fraction(b)] for row, b in zip(Q, rhs)]
    for c in range(n):
        piv = next((i for i in range(c, n) if M[i][c] != 0), None)
        if piv is None:
            raise ValueError("coefficient matrix is singular")
        M[c], M[piv] = M[piv], M[c]
        p = M[c][c]
        M[c] = [a / p for a in M[c]]
        for i in range(n):
            if i != c and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[c])]
    return [M[i][n] for i in range(n)]


def poly_block_decomposition(coeffs) -> list:
    """Express ``sum_ij c_ij D_U(t^i A1, t^j A2)`` through top-right blocks.

    ``coeffs`` is an (s1+1) x (s2+1) table. Returns a list of
    ``(name, (row, col), coefficient)`` with 1-based block coordinates and
    the layout entry name ``"P[r,c]"``; zero coefficients are dropped.
    """
    s1 = len(coeffs) - 1
    s2 = len(coeffs[0]) - 1
    Q = conjecture_matrix(s1, s2)
    r = [Fraction(coeffs[i][j]) for i in range(s1 + 1) for j in range(s2 + 1)]
    S = solve(Q, r)
    nb = 3 * s1 + s2 + 3
    out = []
    for k, val in enumerate(S):
        if val == 0:
            continue
        rr, cc = divmod(k, s2 + 1)
        out.append((f"P[{rr},{cc}]", (rr + 1, nb - s2 + cc), val))
    return out


# printing -----------------------------------------------------------------

def _mono(p: int) -> str:
    return "1" if p == 0 else ("t" if p == 1 else f"t^{p}")


def _op_text(op) -> str:
    if isinstance(op, Sym):
        return op.name if op.power == 0 else f"{_mono(op.power)} {op.name}"
    if isinstance(op, Zero):
        return "0"
    if isinstance(op, SM):
        return f"SM[{op.c}, {_op_text(op.op)}]"
    return "(" + " + ".join(_op_text(o) for o in op.ops) + ")"


def term_text(term) -> str:
    if isinstance(term, Ex):
        return f"Ex[{_mono(term.power)}, {term.U}]"
    fs = ", ".join(f"{{{f.U}, {_op_text(f.op)}, {f.W}}}" for f in term.factors)
    return f"Int[{_mono(term.power)}, {fs}]"


def _order(item):
    term, _ = item
    return term_text(term)


def pretty(e: SymExpr) -> str:
    """Human-readable nested-integral notation, terms sorted by text."""
    if not e.terms:
        return "0"
    parts = []
    for term, c in sorted(e.terms.items(), key=_order):
        txt = term_text(term)
        mag = abs(c)
        body = txt if mag == 1 else f"{mag} {txt}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(("+ " if c > 0 else "- ") + body)
    return " ".join(parts)


def pretty_table(C) -> str:
    return "\n".join("{" + ", ".join(pretty(e) for e in row) + "}" for row in C)


# numeric instantiation ----------------------------------------------------

def evaluate(e: SymExpr, t: float, flows: dict, operators: dict, edges, nodes: int = 16):
    """Numeric value of ``e`` at time ``t``.

    ``flows`` maps frame symbols to ``oracle.Flow`` objects and ``operators``
    maps operator symbols to samplers ``A(t)``; ``"I"`` needs no entry.
    """
    import numpy as np
    from .oracle import chain_integral

    total = None
    for term, c in e.terms.items():
        if isinstance(term, Ex):
            val = t**term.power * flows[term.U].at([t])[0]
        else:
            factors = []
            for f in term.factors:
                if not isinstance(f.op, Sym):
                    raise ValueError("evaluate needs simplified operator slots")
                if f.op.name == IDENTITY:
                    n = flows[f.U].gens.shape[-1]
                    A = (lambda ts, n=n: np.broadcast_to(np.eye(n, dtype=complex), (len(ts), n, n)))
                else:
                    A = operators[f.op.name]
                factors.append((flows[f.U], f.op.power, A, flows[f.W]))
            val = chain_integral(t, edges, term.power, factors, nodes)
        val = float(c) * val
        total = val if total is None else total + val
    return total


def evaluate_raw(e: SymExpr, t: float, flows: dict, operators: dict, edges, nodes: int = 16):
    """Like ``evaluate`` but accepts zero, scalar and sum operator slots."""
    expanded = []
    for term, c in e.terms.items():
        stack = [(term, Fraction(c))]
        while stack:
            tm, cc = stack.pop()
            if isinstance(tm, Ex):
                expanded.append((tm, cc))
                continue
            k = next((k for k, f in enumerate(tm.factors) if not isinstance(f.op, Sym)), None)
            if k is None:
                expanded.append((tm, cc))
                continue
            for nf, c2 in _rewrite_op(tm.factors, k):
                stack.append((Int(tm.power, nf), cc * c2))
    if not expanded:
        return None
    return evaluate(SymExpr(expanded), t, flows, operators, edges, nodes)
