"""Dense complex matrix kernel.

Everything here works on ``numpy`` arrays of dtype ``complex128``. The
matrix exponential is batched: a stack ``(..., n, n)`` is exponentiated in
one call, which is what the propagator uses for all time steps at once.
"""

from __future__ import annotations

from math import factorial

import numpy as np

# Pauli matrices and friends used throughout the examples
I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SPLUS = (SX + 1j * SY) / 2
SMINUS = (SX - 1j * SY) / 2


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Validate and convert to a finite complex 2-D array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch {a.shape} @ {b.shape}")
    return a @ b


def adjoint(a) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def trace_inner(a, b) -> complex:
    """Tr(a^dagger b) without forming the product."""
    return complex(np.vdot(a, b))


def hs_norm(a) -> float:
    a = as_matrix(a, square=True)
    return float(np.sqrt(np.real(np.vdot(a, a))))


def fidelity(u, v) -> float:
    """Phase-insensitive overlap |Tr(u^dagger v)| / (||u|| ||v||)."""
    u = as_matrix(u, square=True)
    v = as_matrix(v, square=True)
    if u.shape != v.shape:
        raise ValueError("fidelity needs equally shaped matrices")
    nu = np.real(np.vdot(u, u))
    nv = np.real(np.vdot(v, v))
    if nu == 0 or nv == 0:
        raise ValueError("fidelity undefined for a zero matrix")
    ov = np.vdot(u, v)
    val = float(np.sqrt((ov.real**2 + ov.imag**2) / (nu * nv)))
    return min(val, 1.0)


# Pade [8/8] coefficients, b_j = (16-j)! 8! / (16! j! (8-j)!)
_PADE_DEG = 8
_PADE = [
    factorial(2 * _PADE_DEG - j) * factorial(_PADE_DEG)
    / (factorial(2 * _PADE_DEG) * factorial(j) * factorial(_PADE_DEG - j))
    for j in range(_PADE_DEG + 1)
]


def expm(a) -> np.ndarray:
    """Matrix exponential of one matrix or a stack of them.

    Scaling and squaring: the argument is divided by 2^s so that its
    1-norm is at most 0.5, a diagonal Pade [8/8] approximant is applied
    and the result squared s times.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {a.shape}")
    n = a.shape[-1]
    batch = a.shape[:-2]
    flat = a.reshape((-1, n, n))
    norms = np.abs(flat).sum(axis=-2).max(axis=-1) if flat.size else np.zeros(0)
    with np.errstate(divide="ignore"):
        s = np.where(norms > 0.5, np.ceil(np.log2(np.maximum(norms, 1e-300) / 0.5)), 0)
    s = s.astype(int)
    scaled = flat / (2.0 ** s)[:, None, None]

    eye = np.broadcast_to(np.eye(n, dtype=complex), scaled.shape)
    a2 = scaled @ scaled
    a4 = a2 @ a2
    a6 = a4 @ a2
    a8 = a4 @ a4
    b = _PADE
    odd = scaled @ (b[1] * eye + b[3] * a2 + b[5] * a4 + b[7] * a6)
    even = b[0] * eye + b[2] * a2 + b[4] * a4 + b[6] * a6 + b[8] * a8
    out = np.linalg.solve(even - odd, even + odd)

    smax = int(s.max()) if s.size else 0
    for k in range(smax):
        idx = s > k
        out[idx] = out[idx] @ out[idx]
    return out.reshape(batch + (n, n))


class BlockMatrix:
    """A square matrix viewed as a grid of square blocks.

    Block sizes may differ along the diagonal (direct sums of layouts with
    different system dimensions), so the partition is given by a tuple of
    sizes rather than one block dimension.
    """

    def __init__(self, matrix, sizes):
        self.matrix = as_matrix(matrix, square=True)
        self.sizes = tuple(int(s) for s in sizes)
        if sum(self.sizes) != self.matrix.shape[0]:
            raise ValueError("block sizes do not add up to the matrix dimension")
        self.offsets = tuple(np.concatenate([[0], np.cumsum(self.sizes)]).astype(int))

    @classmethod
    def uniform(cls, matrix, block_dim: int) -> "BlockMatrix":
        m = as_matrix(matrix, square=True)
        if m.shape[0] % block_dim:
            raise ValueError("matrix dimension is not a multiple of the block size")
        return cls(m, [block_dim] * (m.shape[0] // block_dim))

    @classmethod
    def from_blocks(cls, grid) -> "BlockMatrix":
        """Assemble from a square grid; ``None`` entries are zero blocks."""
        k = len(grid)
        sizes = []
        for i in range(k):
            blk = grid[i][i]
            if blk is None:
                raise ValueError("diagonal blocks must be present")
            sizes.append(np.asarray(blk).shape[0])
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        m = np.zeros((offs[-1], offs[-1]), dtype=complex)
        for i in range(k):
            for j in range(k):
                blk = grid[i][j]
                if blk is None:
                    continue
                blk = as_matrix(blk)
                if blk.shape != (sizes[i], sizes[j]):
                    raise ValueError(f"block ({i},{j}) has shape {blk.shape}")
                m[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = blk
        return cls(m, sizes)

    @property
    def count(self) -> int:
        return len(self.sizes)

    def block(self, i: int, j: int) -> np.ndarray:
        o = self.offsets
        return self.matrix[o[i]:o[i + 1], o[j]:o[j + 1]]

    def blocks(self):
        return [[self.block(i, j) for j in range(self.count)] for i in range(self.count)]

    def flatten(self) -> np.ndarray:
        return self.matrix
