"""1/f noise: spectral density, correlation function and exponential-sum fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import least_squares

EULER_GAMMA = 0.57721566490153286061

LAMBDA1 = 2 * np.pi
LAMBDA2 = 2 * np.pi * 1e10

# seven-term fit of the 1/f correlation (coefficients, rates in Hz)
PUBLISHED_COEFFS = (7.49448, 0.947027, -0.490555, -0.163987, 29.83, -0.102058, 0.00035238)
PUBLISHED_RATES = (-1.11796e8, -3.37122e7, -4.69721e6, -3.77087e6, -577865.0, 122339.0, 2.05605e7)


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_k (-x)^k / (k k!)
    s, term, k = 0.0, 1.0, 0
    while True:
        k += 1
        term *= -x / k
        add = term / k
        s += add
        if abs(add) < 1e-17 * max(abs(s), 1e-300):
            break
    return -EULER_GAMMA - np.log(x) - s


def _e1_contfrac(x: float) -> float:
    # modified Lentz on E1(x) = e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * np.exp(-x)


def expint_e1(x):
    """E1(x) = -Ei(-x) for x > 0: series below 1, continued fraction above."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("E1 needs positive arguments")
    flat = x.reshape(-1)
    out = np.empty_like(flat)
    for i, v in enumerate(flat):
        if v > 745:
            out[i] = 0.0
        elif v <= 1.0:
            out[i] = _e1_series(v)
        else:
            out[i] = _e1_contfrac(v)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def ei_negative(x):
    """Ei(-x) for x > 0."""
    return -expint_e1(x)


def _check_cutoffs(L1, L2):
    if not 0 < L1 < L2:
        raise ValueError("need 0 < L1 < L2")


def psd_oneoverf(nu, L1: float = LAMBDA1, L2: float = LAMBDA2):
    """``(2 / (pi nu)) (arctan(nu/L1) - arctan(nu/L2))``, even in nu."""
    _check_cutoffs(L1, L2)
    nu = np.abs(np.asarray(nu, dtype=float))
    safe = np.where(nu > 0, nu, 1.0)
    val = 2 / (np.pi * safe) * (np.arctan(safe / L1) - np.arctan(safe / L2))
    return np.where(nu > 0, val, 2 * (1 / L1 - 1 / L2) / np.pi)


def correlation(tau, L1: float = LAMBDA1, L2: float = LAMBDA2):
    """``-2 [Ei(-L1 |tau|) - Ei(-L2 |tau|)]``."""
    _check_cutoffs(L1, L2)
    tau = np.abs(np.asarray(tau, dtype=float))
    if np.any(tau == 0):
        raise ValueError("the correlation function diverges at tau = 0")
    return 2 * (expint_e1(L1 * tau) - expint_e1(L2 * tau))


def correlation_double_integral(T: float, L1: float = LAMBDA1, L2: float = LAMBDA2) -> float:
    """``int_0^T dt_1 int_0^{t_1} dt_2 <e(t_1) e(t_2)>``.

    The correlation depends on ``t_1 - t_2`` only, so the triangle reduces to
    ``int_0^T (T - tau) C(tau) dtau``; the log singularity at 0 is integrable.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    f = lambda tau: (T - tau) * float(correlation(tau, L1, L2)) if tau > 0 else 0.0
    breaks = [b for b in (1 / L2, 10 / L2, 100 / L2) if b < T]
    val, _ = quad(f, 0, T, points=breaks or None, limit=500, epsabs=0, epsrel=1e-12)
    return val


@dataclass
class ExpSumFit:
    coeffs: np.ndarray
    rates: np.ndarray
    window: tuple
    residual: float
    taus: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)

    def __call__(self, tau):
        return expsum_eval(self, tau)


def expsum_eval(fit, tau):
    c = np.asarray(fit.coeffs)
    d = np.asarray(fit.rates)
    tau = np.asarray(tau, dtype=float)
    return np.real(np.exp(np.multiply.outer(tau, d)) @ c)


def relative_rms(model, values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(((model - values) / values) ** 2)))


def make_fit(coeffs, rates, taus, values) -> ExpSumFit:
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    fit = ExpSumFit(np.asarray(coeffs, float), np.asarray(rates, float), (taus[0], taus[-1]), 0.0, taus, values)
    fit.residual = relative_rms(expsum_eval(fit, taus), values)
    return fit


def _linear_stage(E, v, w):
    A = E * w[:, None]
    b = v * w
    c, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    return c, rank


def fit_expsum(taus, values, n_terms: int, seed_rates=None, fixed_rates: bool = False) -> ExpSumFit:
    """Least-squares fit ``sum_i c_i exp(d_i tau)`` by variable projection.

    For given rates the coefficients solve a linear least-squares problem;
    the rates are refined by a nonlinear solver on the projected residual.
    Residuals are weighted by ``1/value`` so the fit minimizes relative
    error. ``seed_rates`` is a list of starting rate vectors; the best
    result is returned.
    """
    taus = np.asarray(taus, dtype=float)
    v = np.asarray(values, dtype=float)
    if taus.size == 0 or np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("sample times must be positive and strictly ascending")
    w = 1 / np.abs(v)
    scale = taus[-1]
    s = taus / scale
    if seed_rates is None:
        seed_rates = default_seed_rates(n_terms, taus)
    seed_rates = [np.asarray(r, dtype=float) for r in np.atleast_2d(seed_rates)]

    def coeffs_for(x):
        E = np.exp(np.outer(s, x))
        c, rank = _linear_stage(E, v, w)
        if rank < min(len(x), len(s)):
            dup = [i for i in range(len(x)) for j in range(i) if np.isclose(x[i], x[j])]
            raise np.linalg.LinAlgError(f"rank-deficient exponential basis (duplicate rates at {dup})")
        return E, c

    def resid(x):
        if np.max(x) > 50:
            # growth this fast cannot fit a decaying correlation
            return np.full(len(s), 1e6 * (1 + np.max(x)))
        E, c = coeffs_for(x)
        return (E @ c - v) * w

    best = None
    for r0 in seed_rates:
        if len(r0) != n_terms:
            raise ValueError("seed rate vectors must have n_terms entries")
        x0 = r0 * scale
        coeffs_for(x0)
        if fixed_rates or len(s) <= n_terms:
            x = x0
        else:
            try:
                x = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                  max_nfev=4000 * n_terms).x
            except np.linalg.LinAlgError:
                continue
        try:
            _, c = coeffs_for(x)
        except np.linalg.LinAlgError:
            continue
        fit = make_fit(c, x / scale, taus, v)
        if best is None or fit.residual < best.residual:
            best = fit
    if best is None:
        raise np.linalg.LinAlgError("every seed produced a rank-deficient exponential basis")
    return best


def default_seed_rates(n_terms: int, taus) -> list:
    """A few log-spaced decay-rate patterns spanning the sample window."""
    taus = np.asarray(taus, dtype=float)
    lo, hi = 1 / taus[-1], 1 / taus[0]
    seeds = []
    for stretch in (1.0, 0.5, 2.0):
        r = np.geomspace(lo * stretch, hi * stretch, n_terms)
        seeds.append(-r)
    mixed = -np.geomspace(lo, hi, n_terms)
    mixed[:n_terms // 3] *= -0.5
    seeds.append(np.sort(mixed))
    return seeds


def published_fit(taus=None) -> ExpSumFit:
    """The published seven-term coefficients, scored on ``taus`` against the exact correlation."""
    taus = default_fit_grid(400e-9) if taus is None else np.asarray(taus, dtype=float)
    return make_fit(PUBLISHED_COEFFS, PUBLISHED_RATES, taus, correlation(taus))


def default_fit_grid(T: float, count: int = 200, lo: float | None = None) -> np.ndarray:
    lo = T / 1000 if lo is None else lo
    return np.geomspace(lo, T, count)


def load_samples(path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (tau, value)")
    return data[:, 0], data[:, 1]
