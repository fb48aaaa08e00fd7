"""Command-line front end: ``run``, ``verify`` and ``fit-corr``.

Exit codes: 0 on success, 1 when the search (or a verification check)
fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import noisemodel as nm
from . import objective as ob
from . import transfer as tf
from . import verify as vf
from .config import ConfigError, load
from .optimize import SearchError, multi_start

EXIT_OK, EXIT_SEARCH, EXIT_CONFIG = 0, 1, 2


def emit_basis_rotated(waveform):
    """Presentation basis: ``(a_x, a_y) -> ((a_x + a_y)/sqrt 2, (a_x - a_y)/sqrt 2)``."""
    a = np.asarray(getattr(waveform, "amplitudes", waveform), dtype=float)
    if a.ndim != 2 or a.shape[0] != 2:
        raise ValueError("basis rotation needs exactly two channels")
    out = np.vstack([a[0] + a[1], a[0] - a[1]]) / np.sqrt(2)
    if hasattr(waveform, "with_amplitudes"):
        return waveform.with_amplitudes(out)
    return out


def write_waveform(path, amplitudes, T):
    a = np.asarray(amplitudes, dtype=float)
    N = a.shape[1]
    dt = float(T) / N
    cols = ["index", "t_start", "duration"] + [f"a_{k + 1}" for k in range(a.shape[0])]
    with open(path, "w") as fh:
        fh.write("# " + ", ".join(cols) + "\n")
        for j in range(N):
            vals = [f"{j}", f"{j * dt!r}", f"{dt!r}"] + [repr(float(x)) for x in a[:, j]]
            fh.write(", ".join(vals) + "\n")


def read_waveform(path):
    """Amplitudes (channels x steps) and total time of a waveform file."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return data[:, 3:].T.copy(), float(data[:, 2].sum())


def write_spectrum(path, amplitudes, dT):
    a = np.asarray(amplitudes, dtype=float)
    nu = tf.freq_grid(a.shape[1], dT)
    c = tf.spectrum(a)
    with open(path, "w") as fh:
        fh.write("# nu_Hz, re, im\n")
        for f, z in zip(nu, c):
            fh.write(f"{float(f)!r}, {float(z.real)!r}, {float(z.imag)!r}\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def run(config_path, out=None, seeds=None, rng=None, quiet=False) -> int:
    try:
        setup = load(config_path)
        search = setup.search
        if seeds is not None:
            search.seeds = seeds
        if rng is not None:
            search.rng_seed = rng
        if quiet:
            search.progress = False
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    prob = setup.problem
    spec = prob.spec
    out_dir = out or (setup.out_dir if os.path.isabs(setup.out_dir) else os.path.join(setup.base_dir, setup.out_dir))
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    report = {
        "problem": prob.name,
        "units": prob.units,
        "code_version": __version__,
        "python": platform.python_version(),
        "config": setup.echo,
        "search": {k: v for k, v in vars(search).items()},
        "notes": prob.info,
    }
    try:
        res = multi_start(spec, search)
    except SearchError as exc:
        report.update(termination="error", error=str(exc), wall_time_s=time.time() - t0)
        _dump(os.path.join(out_dir, "report.json"), report)
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    wave = spec.waveform(res.best_alpha)
    write_waveform(os.path.join(out_dir, "waveform.txt"), wave, spec.T)
    write_waveform(os.path.join(out_dir, "decision.txt"), res.best_alpha, spec.T)
    if wave.shape[0] == 2:
        write_waveform(os.path.join(out_dir, "waveform_rotated.txt"), emit_basis_rotated(wave), spec.T)
        if wave.shape[1] % 2 == 0:
            write_spectrum(os.path.join(out_dir, "spectrum.txt"), wave, spec.T / wave.shape[1])
    np.savetxt(os.path.join(out_dir, "history.txt"), np.asarray(res.history), header="best phi per iteration",
               fmt="%.17g")
    success = res.best_phi >= search.phase1_threshold
    report.update(
        best_phi=res.best_phi,
        termination=res.termination,
        success=bool(success),
        best_seed=res.seed_index,
        seeds=res.seeds,
        metrics=prob.report(res.best_alpha),
        wall_time_s=time.time() - t0,
    )
    _dump(os.path.join(out_dir, "report.json"), report)
    print(f"best phi={res.best_phi:.16g} termination={res.termination} -> {out_dir}")
    return EXIT_OK if success else EXIT_SEARCH


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def verify(suite, tol=None) -> int:
    try:
        checks = vf.run_suite(suite, tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in checks:
        print(json.dumps(c.as_dict()))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SEARCH


def fit_corr(path, terms) -> int:
    try:
        taus, vals = nm.load_samples(path)
        fit = nm.fit_expsum(taus, vals, terms)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except np.linalg.LinAlgError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    print(json.dumps({"coefficients": _jsonable(fit.coeffs), "rates": _jsonable(fit.rates),
                      "window": list(fit.window), "relative_rms": fit.residual}, indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vanloan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="multi-start search for a configured problem")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seeds", type=int, help="number of random seeds")
    r.add_argument("--rng", type=int, help="seed of the random-number generator")
    r.add_argument("--quiet", action="store_true", help="no progress lines")
    v = sub.add_parser("verify", help="run an oracle-backed verification suite")
    v.add_argument("suite", help=", ".join(sorted(vf.SUITES)))
    v.add_argument("--tol", type=float)
    f = sub.add_parser("fit-corr", help="fit a sum of exponentials to correlation samples")
    f.add_argument("samples", help="two columns: tau (s), value")
    f.add_argument("--terms", type=int, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.seeds, args.rng, args.quiet)
    if args.command == "verify":
        return verify(args.suite, args.tol)
    return fit_corr(args.samples, args.terms)


if __name__ == "__main__":
    sys.exit(main())
