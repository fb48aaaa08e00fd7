"""Multi-start bounded conjugate-gradient ascent."""

from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import objective as obj


@dataclass
class SearchConfig:
    """Search protocol settings.

    ``bounds`` is ``(lo, hi)``: scalars or one value per channel.
    Phase one runs until ``phase1_threshold`` or ``max_evals_phase1``
    evaluations; seeds that reach the threshold are polished until the
    target stagnates or ``max_evals_polish`` more evaluations are spent.
    Budgets are checked between iterations, so the last line search can
    overshoot them by a few evaluations.
    """

    bounds: tuple = (-1.0, 1.0)
    seeds: int = 40
    max_evals_phase1: int = 1000
    phase1_threshold: float = 0.9999
    polish: bool = True
    max_evals_polish: int = 20000
    rng_seed: int = 0
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    first_step: float = 0.1
    stagnation_tol: float = 1e-15
    stagnation_window: int = 5
    stop_after_success: int | None = None
    progress: bool = True
    progress_every: int = 25

    def __post_init__(self):
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
            raise ValueError("bounds must be finite with hi > lo")
        if not 0 < self.phase1_threshold < 1:
            raise ValueError("phase-one threshold must lie in (0, 1)")

    def box(self, channels: int):
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float).reshape(-1, 1)
                                  if np.ndim(b) else np.asarray(b, dtype=float), (channels, 1)).copy()
                  for b in self.bounds)
        return lo, hi


@dataclass
class SearchResult:
    best_alpha: np.ndarray
    best_phi: float
    history: list
    termination: str
    evals: int = 0
    seed_index: int = 0
    seeds: list = field(default_factory=list)


class SearchError(RuntimeError):
    def __init__(self, msg, alpha=None):
        super().__init__(msg)
        self.alpha = alpha


def random_seeds(config: SearchConfig, channels: int, steps: int) -> list:
    """Independent uniform draws on the amplitude box."""
    rng = np.random.default_rng(config.rng_seed)
    lo, hi = config.box(channels)
    return [lo + (hi - lo) * rng.random((channels, steps)) for _ in range(config.seeds)]


def _as_fun(target):
    if isinstance(target, obj.ObjectiveSpec):
        return lambda a: obj.value_and_gradient(target, a)
    if hasattr(target, "value_and_gradient"):
        return target.value_and_gradient
    return target


class _Sines:
    """alpha = lo + (hi - lo) sin^2(theta)."""

    def __init__(self, lo, hi):
        self.lo, self.w = lo, hi - lo

    def alpha(self, th):
        return self.lo + self.w * np.sin(th) ** 2

    def theta(self, a):
        r = np.clip((a - self.lo) / self.w, 0.0, 1.0)
        return np.arcsin(np.sqrt(r))

    def pull(self, th, g):
        return g * self.w * np.sin(2 * th)


def maximize(target, seed, config: SearchConfig, index: int = 0) -> SearchResult:
    """Conjugate-gradient ascent from one seed inside the amplitude box."""
    fun = _as_fun(target)
    seed = np.asarray(getattr(seed, "amplitudes", seed), dtype=float)
    lo, hi = config.box(seed.shape[0])
    tr = _Sines(lo, hi)
    evals = 0

    def f(th):
        nonlocal evals
        a = tr.alpha(th)
        phi, g = fun(a)
        evals += 1
        if not np.isfinite(phi) or not np.all(np.isfinite(g)):
            raise SearchError(f"non-finite target or gradient at evaluation {evals}", a)
        return phi, tr.pull(th, g)

    th = tr.theta(np.clip(seed, lo, hi))
    phi, g = f(th)
    best_th, best_phi = th.copy(), phi
    history = [phi]
    if phi >= 1.0:
        return SearchResult(tr.alpha(th), phi, history, "threshold", evals, index)

    d = g.copy()
    step = None
    reached = phi >= config.phase1_threshold
    termination = None
    it = 0
    while True:
        budget = config.max_evals_phase1 + (config.max_evals_polish if reached else 0)
        if not reached and evals >= config.max_evals_phase1:
            termination = "evalBudget"
            break
        if reached and (not config.polish):
            termination = "threshold"
            break
        if reached and evals >= budget:
            termination = "threshold"
            break
        slope = float(np.vdot(g, d))
        if slope <= 0:
            d = g.copy()
            slope = float(np.vdot(g, g))
        if slope == 0:
            termination = "machinePrecision"
            break
        dmax = np.abs(d).max()
        s = config.first_step / dmax if step is None else step
        s = min(s, 10 * config.first_step / dmax)
        # Armijo backtracking with quadratic interpolation, one doubling pass
        accepted = None
        for trial in range(config.max_backtracks):
            th_new = th + s * d
            phi_new, g_new = f(th_new)
            if phi_new >= phi + config.armijo * s * slope:
                accepted = (s, th_new, phi_new, g_new)
                break
            denom = 2 * (phi_new - phi - slope * s)
            s_q = -slope * s * s / denom if denom < 0 else config.shrink * s
            s = float(np.clip(s_q, 0.1 * s, config.shrink * s))
        if accepted is not None and trial == 0:
            # first trial accepted: try a longer step while it keeps paying off
            for _ in range(4):
                s2 = 2 * accepted[0]
                th2 = th + s2 * d
                phi2, g2 = f(th2)
                if phi2 > accepted[2] and phi2 >= phi + config.armijo * s2 * slope:
                    accepted = (s2, th2, phi2, g2)
                else:
                    break
        if accepted is None:
            termination = "machinePrecision"
            break
        s, th_new, phi_new, g_new = accepted
        # Polak-Ribiere with nonnegativity clamp; periodic restart
        beta = max(0.0, float(np.vdot(g_new, g_new - g)) / max(float(np.vdot(g, g)), 1e-300))
        it += 1
        if it % d.size == 0:
            beta = 0.0
        prev_slope = slope
        th, phi, g = th_new, phi_new, g_new
        d = g + beta * d
        new_slope = float(np.vdot(g, d))
        step = s * prev_slope / new_slope if new_slope > 0 else s
        if phi > best_phi:
            best_phi, best_th = phi, th.copy()
        history.append(best_phi)
        if config.progress and it % config.progress_every == 0:
            print(f"seed={index} iter={it} phi={best_phi:.16g} evals={evals}", file=sys.stderr, flush=True)
        if best_phi >= 1.0:
            termination = "threshold"
            break
        if not reached and best_phi >= config.phase1_threshold:
            reached = True
        w = config.stagnation_window
        if len(history) > w and abs(history[-1] - history[-1 - w]) <= config.stagnation_tol * abs(history[-1]):
            termination = "machinePrecision"
            break
    if config.progress:
        print(f"seed={index} iter={it} phi={best_phi:.16g} evals={evals}", file=sys.stderr, flush=True)
    return SearchResult(tr.alpha(best_th), float(best_phi), history, termination, evals, index)


def _run_one(args):
    target, seed, config, i = args
    try:
        return maximize(target, seed, config, i)
    except SearchError as exc:
        return exc


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("VANLOAN_THREADS", "1")))
    except ValueError:
        return 1


def multi_start(target, config: SearchConfig, steps: int | None = None, channels: int | None = None,
                seeds=None) -> SearchResult:
    """Run ``maximize`` from every seed and keep the best (ties: lowest index).

    With ``stop_after_success`` set, seeds after the one that brings the
    count of phase-one successes to that number are skipped. Worker
    processes are used when ``VANLOAN_THREADS`` > 1; the selection is the
    same as in a serial run.
    """
    if seeds is None:
        if isinstance(target, obj.ObjectiveSpec):
            steps = target.steps if steps is None else steps
            channels = target.channels if channels is None else channels
        if steps is None or channels is None:
            raise ValueError("need step and channel counts to draw seeds")
        seeds = random_seeds(config, channels, steps)
    jobs = [(target, s, config, i) for i, s in enumerate(seeds)]
    nw = _workers()
    results = []
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(nw) as pool:
            futures = [pool.submit(_run_one, j) for j in jobs]
            for fut in futures:
                results.append(fut.result())
                if _enough(results, config):
                    for rest in futures[len(results):]:
                        rest.cancel()
                    break
    else:
        for j in jobs:
            results.append(_run_one(j))
            if _enough(results, config):
                break
    good = [r for r in results if isinstance(r, SearchResult)]
    if not good:
        raise SearchError("every seed failed: " + "; ".join(str(r) for r in results))
    best = good[0]
    for r in good[1:]:
        if r.best_phi > best.best_phi:
            best = r
    summary = [
        {"seed": i, "phi": r.best_phi, "termination": r.termination, "evals": r.evals}
        if isinstance(r, SearchResult) else {"seed": i, "error": str(r)}
        for i, r in enumerate(results)
    ]
    return SearchResult(best.best_alpha, best.best_phi, best.history, best.termination,
                        best.evals, best.seed_index, summary)


def _enough(results, config) -> bool:
    if config.stop_after_success is None:
        return False
    hits = sum(1 for r in results if isinstance(r, SearchResult) and r.best_phi >= config.phase1_threshold)
    return hits >= config.stop_after_success
