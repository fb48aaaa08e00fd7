import numpy as np
import pytest

from vanloan import objective as ob
from vanloan import oracle
from vanloan import optimize as op
from vanloan import problems as pr


class Quadratic:
    def __init__(self, star, c=4.0):
        self.star, self.c = star, c

    def value_and_gradient(self, a):
        d = a - self.star
        return 1 - np.sum(d**2) / self.c, -2 * d / self.c


def cfg(**kw):
    base = dict(bounds=(-1.0, 1.0), seeds=3, progress=False)
    base.update(kw)
    return op.SearchConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        op.SearchConfig(bounds=(1.0, -1.0))
    with pytest.raises(ValueError):
        op.SearchConfig(bounds=(-np.inf, 1.0))
    with pytest.raises(ValueError):
        op.SearchConfig(phase1_threshold=1.0)


def test_random_seeds():
    c = cfg(rng_seed=7, seeds=4, bounds=([-1.0, 0.0], [1.0, 0.5]))
    s1 = op.random_seeds(c, 2, 10)
    s2 = op.random_seeds(c, 2, 10)
    assert all(np.array_equal(a, b) for a, b in zip(s1, s2))
    for s in s1:
        assert np.all(s[0] >= -1) and np.all(s[0] <= 1)
        assert np.all(s[1] >= 0) and np.all(s[1] <= 0.5)


def test_random_seed_statistics():
    c = cfg(rng_seed=3, seeds=1, bounds=(-2.0, 4.0))
    x = op.random_seeds(c, 1, 10**5)[0]
    sigma = 6 / np.sqrt(12) / np.sqrt(x.size)
    assert abs(x.mean() - 1.0) < 3 * sigma


def test_quadratic_converges():
    rng = np.random.default_rng(0)
    star = rng.uniform(-0.8, 0.8, (2, 6))
    q = Quadratic(star)
    res = op.maximize(q, np.zeros((2, 6)), cfg())
    assert res.best_phi > 1 - 1e-12
    assert res.evals < 200
    assert np.abs(res.best_alpha - star).max() < 1e-5


def test_immediate_threshold():
    star = np.full((1, 3), 0.2)
    res = op.maximize(Quadratic(star), star, cfg())
    assert res.termination == "threshold" and res.evals == 1


def test_history_monotone_and_in_bounds():
    rng = np.random.default_rng(1)
    star = rng.uniform(-3, 3, (2, 5))  # optimum outside the box
    c = cfg(max_evals_phase1=300)
    res = op.maximize(Quadratic(star, 100.0), np.zeros((2, 5)), c)
    assert np.all(np.diff(res.history) >= 0)
    assert np.all(res.best_alpha >= -1) and np.all(res.best_alpha <= 1)


def test_nonfinite_raises():
    def bad(a):
        return np.nan, np.zeros_like(a)

    with pytest.raises(op.SearchError) as ei:
        op.maximize(bad, np.zeros((1, 2)), cfg())
    assert ei.value.alpha is not None


def test_multi_start_single_seed_matches_maximize():
    star = np.full((1, 4), 0.3)
    q = Quadratic(star)
    seed = np.full((1, 4), -0.5)
    a = op.maximize(q, seed, cfg())
    b = op.multi_start(q, cfg(), seeds=[seed])
    assert b.best_phi == a.best_phi and np.array_equal(a.best_alpha, b.best_alpha)
    assert len(b.seeds) == 1


def test_multi_start_deterministic():
    p = pr.dipolar(T=3.0, N=10)
    c = cfg(seeds=2, max_evals_phase1=40, polish=False, bounds=(-pr.AMP, pr.AMP), rng_seed=5)
    r1 = op.multi_start(p.spec, c)
    r2 = op.multi_start(p.spec, c)
    assert np.array_equal(r1.best_alpha, r2.best_alpha)
    assert r1.seeds == r2.seeds


def test_multi_start_all_fail():
    def bad(a):
        return np.inf, np.zeros_like(a)

    with pytest.raises(op.SearchError):
        op.multi_start(bad, cfg(), steps=3, channels=1)


def test_best_phi_recomputes():
    p = pr.dipolar(T=3.0, N=10)
    c = cfg(seeds=1, max_evals_phase1=60, polish=False, bounds=(-pr.AMP, pr.AMP))
    r = op.multi_start(p.spec, c)
    assert abs(ob.evaluate(p.spec, r.best_alpha) - r.best_phi) < 1e-12


def test_finite_difference_gradients_reach_same_phi():
    p = pr.dipolar(T=2.0, N=4)
    c = cfg(max_evals_phase1=400, polish=False, bounds=(-pr.AMP, pr.AMP))
    seed = np.full((2, 4), 0.1)
    exact = op.maximize(p.spec, seed, c)

    def fd(a):
        return ob.evaluate(p.spec, a), oracle.finite_diff(lambda x: ob.evaluate(p.spec, x), a, 1e-7)

    approx = op.maximize(fd, seed, c)
    assert abs(exact.best_phi - approx.best_phi) < 1e-6


def test_progress_lines(capsys):
    star = np.full((1, 3), 0.4)
    op.maximize(Quadratic(star), np.zeros((1, 3)), cfg(progress=True, progress_every=1))
    err = capsys.readouterr().err.strip().splitlines()
    assert err and all(line.startswith("seed=0 iter=") and " phi=" in line and " evals=" in line for line in err)


def test_parallel_matches_serial(monkeypatch):
    p = pr.dipolar(T=3.0, N=8)
    c = cfg(seeds=3, max_evals_phase1=30, polish=False, bounds=(-pr.AMP, pr.AMP))
    serial = op.multi_start(p.spec, c)
    monkeypatch.setenv("VANLOAN_THREADS", "2")
    par = op.multi_start(p.spec, c)
    assert np.array_equal(serial.best_alpha, par.best_alpha)
    assert serial.seed_index == par.seed_index
