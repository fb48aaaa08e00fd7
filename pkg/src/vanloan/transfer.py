"""Linear transfer maps for two-channel controls.

Two real channels ``(a_1, a_2)`` are carried as the complex sequence
``a_1 - i a_2``. A transfer map is a complex matrix acting on that sequence;
the real-linear action and its Jacobian follow from real and imaginary
parts of the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TransferMap:
    matrix: np.ndarray
    label: str = "linear"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex, ndmin=2)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def in_steps(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_steps(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other: "TransferMap") -> "TransferMap":
        return compose(self, other)

    def scaled(self, c: float, label: str | None = None) -> "TransferMap":
        return TransferMap(c * self.matrix, label or self.label)


def identity(N: int) -> TransferMap:
    return TransferMap(np.eye(N, dtype=complex), "identity")


def compose(left: TransferMap, right: TransferMap) -> TransferMap:
    """``left`` applied after ``right``."""
    if left.in_steps != right.out_steps:
        raise ValueError(f"cannot compose {left.matrix.shape} after {right.matrix.shape}")
    return TransferMap(left.matrix @ right.matrix, "composed")


def dft_matrix(N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be positive")
    k = np.arange(N)
    return np.exp(2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)


def freq_grid(N: int, dT: float) -> np.ndarray:
    """Frequencies of the DFT bins in the ordering of ``dft_matrix``."""
    if N < 2 or N % 2:
        raise ValueError("frequency grid needs an even number of steps")
    j = np.arange(N)
    return (2 * (j % (N // 2)) - j) / (N * dT)


def _curve(c, nu):
    if callable(c):
        return np.asarray(c(nu), dtype=float)
    return np.full_like(nu, float(c))


def linear_transfer(N: int, dT: float, lam, phi) -> TransferMap:
    """``W^{-1} diag(lam(nu) e^{i phi(nu)}) W`` on the DFT grid.

    ``lam`` and ``phi`` are callables of frequency or constants.
    """
    nu = freq_grid(N, dT)
    W = dft_matrix(N)
    d = _curve(lam, nu) * np.exp(1j * _curve(phi, nu))
    return TransferMap(W.conj().T @ (d[:, None] * W), "linear")


def zero_pad(N: int, N0: int) -> TransferMap:
    if N0 < 0 or N <= 2 * N0:
        raise ValueError(f"cannot pad {N0} zero steps on each side of {N} steps")
    m = np.zeros((N, N - 2 * N0), dtype=complex)
    m[N0:N - N0] = np.eye(N - 2 * N0)
    return TransferMap(m, "zero-pad")


def bandpass_lambda(nu, dNu: float, steepness: float = 20.0):
    if dNu <= 0:
        raise ValueError("bandwidth must be positive")
    k = steepness / dNu
    nu = np.asarray(nu, dtype=float)
    return 0.25 * (1 + np.tanh(k * (nu + dNu / 2))) * (1 - np.tanh(k * (nu - dNu / 2)))


def bandpass(N: int, dT: float, dNu: float, steepness: float = 20.0) -> TransferMap:
    tm = linear_transfer(N, dT, lambda nu: bandpass_lambda(nu, dNu, steepness), 0.0)
    return TransferMap(tm.matrix, "bandpass")


def opt_transfer(N: int, N0: int, dT: float, dNu: float, steepness: float = 20.0) -> TransferMap:
    """Zero padding followed by the smooth bandpass."""
    return TransferMap(bandpass(N, dT, dNu, steepness).matrix @ zero_pad(N, N0).matrix, "composed")


def clamp_ends(tm: TransferMap, N0: int, rcond: float = 1e-13) -> TransferMap:
    """Restrict ``tm`` to the inputs it maps to sequences with zero end segments.

    The returned map is ``tm`` composed with the orthogonal projector onto
    the null space of the first and last ``N0`` output rows (``rcond`` sets
    the numerical rank cut). Those rows vanish in exact arithmetic and are
    stored as exact zeros, so every output is exactly zero there.
    """
    if N0 == 0:
        return tm
    ends = np.r_[0:N0, tm.out_steps - N0:tm.out_steps]
    _, s, vh = np.linalg.svd(tm.matrix[ends], full_matrices=True)
    r = int(np.sum(s > rcond * s[0])) if s.size else 0
    K = vh[r:].conj().T
    M = tm.matrix @ (K @ K.conj().T)
    M[ends] = 0
    return TransferMap(M, "composed")


def apply_two_channel(tm: TransferMap, alpha: np.ndarray) -> np.ndarray:
    """``beta_1 = Re[M(a_1 - i a_2)]``, ``beta_2 = -Im[M(a_1 - i a_2)]``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (2, tm.in_steps):
        raise ValueError(f"expected amplitudes of shape (2, {tm.in_steps}), got {alpha.shape}")
    z = tm.matrix @ (alpha[0] - 1j * alpha[1])
    return np.vstack([z.real, -z.imag])


def pullback_two_channel(tm: TransferMap, grad_beta: np.ndarray) -> np.ndarray:
    """Transpose action: gradient with respect to beta to gradient w.r.t. alpha."""
    g = np.asarray(grad_beta, dtype=float)
    h = tm.matrix.conj().T @ (g[0] - 1j * g[1])
    return np.vstack([h.real, -h.imag])


def jacobian_entries(tm: TransferMap):
    """``(d b1/d a1, d b1/d a2, d b2/d a1, d b2/d a2)``, entry ``(s, t)`` = d out_s / d in_t."""
    R, Im = tm.matrix.real, tm.matrix.imag
    return R.copy(), Im.copy(), -Im, R.copy()


def spectrum(alpha: np.ndarray) -> np.ndarray:
    """DFT coefficients of the complex representation (``dft_matrix`` convention)."""
    alpha = np.asarray(alpha, dtype=float)
    z = alpha[0] - 1j * alpha[1]
    return dft_matrix(len(z)) @ z


def load_curve(path):
    """Two-column sample file (frequency in Hz, value) as an interpolating callable.

    Linear interpolation between samples, constant beyond the ends.
    """
    data = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    f, v = data[:, 0], data[:, 1]
    if np.any(np.diff(f) <= 0):
        raise ValueError(f"{path}: frequencies must be strictly ascending")
    return lambda nu: np.interp(nu, f, v)
