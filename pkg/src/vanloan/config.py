"""Problem configuration files (YAML).

A config names either a builtin example (with keyword overrides) or a
custom problem assembled from matrices, layouts, terms and an ensemble
table. Errors raise :class:`ConfigError` naming the offending field.

Builtin form::

    problem: dipolar
    params: {T: 6.2, N: 100}
    search: {seeds: 40, rng_seed: 0}

Custom form::

    problem: custom
    pulse: {T: 10.0, N: 50}
    subsystems:
      - label: spin
        drift: null
        controls: [{builtin: pauli-x, scale: [0, -0.5]}, {builtin: pauli-y, scale: [0, -0.5]}]
        layout: {kind: f1, operators: [pauli-z]}
    terms:
      - {kind: dyson_norm_sq, block: spin/D, weight: 1.0, normalization: {dyson: pauli-z}}
    search: {bounds: [-1, 1]}
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from . import blockgen as bg
from . import objective as ob
from . import problems as pr
from . import transfer as tf
from .matcore import I2, SMINUS, SPLUS, SX, SY, SZ
from .optimize import SearchConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"config field '{field_name}': {msg}")
        self.field = field_name


NAMED = {
    "pauli-x": SX,
    "pauli-y": SY,
    "pauli-z": SZ,
    "identity": I2,
    "raising": SPLUS,
    "lowering": SMINUS,
    "dipolar-2spin": pr.dipolar_hamiltonian(),
}


@dataclass
class RunSetup:
    problem: pr.Problem
    search: SearchConfig
    out_dir: str
    echo: dict = field(default_factory=dict)
    base_dir: str = "."


def _scalar(x, where):
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(where, f"expected a number or [re, im], got {x!r}")


def parse_matrix(spec, where: str) -> np.ndarray:
    """A named builtin, ``{builtin, scale}``, ``{re, im}`` or a nested real list."""
    if isinstance(spec, str):
        if spec not in NAMED:
            raise ConfigError(where, f"unknown matrix name {spec!r}; known: {sorted(NAMED)}")
        return NAMED[spec].copy()
    if isinstance(spec, dict):
        if "builtin" in spec:
            m = parse_matrix(spec["builtin"], where)
            return m * _scalar(spec.get("scale", 1.0), where + ".scale")
        if "re" in spec:
            re = np.asarray(spec["re"], dtype=float)
            im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != im.shape or re.ndim != 2 or re.shape[0] != re.shape[1]:
                raise ConfigError(where, "re/im must be square arrays of one shape")
            return re + 1j * im
        raise ConfigError(where, "matrix mapping needs 'builtin' or 're'/'im'")
    if isinstance(spec, list):
        try:
            m = np.asarray(spec, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(where, "matrix rows must be numbers") from None
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(where, "matrix must be square")
        return m.astype(complex)
    raise ConfigError(where, f"cannot read a matrix from {spec!r}")


def _operator(spec, where):
    if isinstance(spec, dict) and "matrix" in spec:
        m = parse_matrix(spec["matrix"], where + ".matrix")
        ch = spec.get("channel")
        return bg.Operator(m, None if ch is None else int(ch))
    return bg.Operator(parse_matrix(spec, where))


def _layout(sub, where):
    try:
        controls = [parse_matrix(c, f"{where}.controls[{k}]") for k, c in enumerate(sub["controls"])]
    except KeyError:
        raise ConfigError(where + ".controls", "missing") from None
    drift = sub.get("drift")
    drift = None if drift is None else parse_matrix(drift, where + ".drift")
    try:
        fam = bg.GeneratorFamily(drift, controls)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None
    lay = sub.get("layout")
    if not isinstance(lay, dict):
        raise ConfigError(where + ".layout", "missing layout mapping")
    kind = lay.get("kind", "f1")
    try:
        if kind == "poly":
            return bg.build_poly(fam, _operator(lay["a1"], where + ".layout.a1"),
                                 _operator(lay["a2"], where + ".layout.a2"), int(lay["s1"]), int(lay["s2"]))
        ops = [_operator(o, f"{where}.layout.operators[{k}]") for k, o in enumerate(lay.get("operators", []))]
        if kind == "f1":
            return bg.build_f1(fam, bg.DysonSpec(ops))
        if kind == "expsum":
            rates = tuple(_scalar(r, where + ".layout.rates") for r in lay["rates"])
            return bg.build_expsum(fam, bg.DysonSpec(ops, bg.ExpSum(rates)))
    except KeyError as exc:
        raise ConfigError(f"{where}.layout.{exc.args[0]}", "missing") from None
    except ValueError as exc:
        raise ConfigError(where + ".layout", str(exc)) from None
    raise ConfigError(where + ".layout.kind", f"unknown layout kind {kind!r}")


def _normalization(spec, T, where):
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, dict) and "dyson" in spec:
        A = parse_matrix(spec["dyson"], where + ".dyson")
        bmax = spec.get("bmax")
        return ob.dyson_normalization(A, T, spec.get("style", "sq"), None if bmax is None else float(bmax))
    raise ConfigError(where, "normalization must be a number or {dyson: matrix, style, bmax}")


def _renormalize(ws, where):
    total = float(sum(ws))
    if total <= 0:
        raise ConfigError(where, "weights must add up to a positive number")
    if abs(total - 1) > 1e-9:
        warnings.warn(f"{where}: weights add up to {total:g}; rescaled to 1", stacklevel=3)
    return [w / total for w in ws]


def _terms(items, T, where):
    if not items:
        raise ConfigError(where, "need at least one term")
    ws = _renormalize([float(t.get("weight", 1.0)) for t in items], where)
    out = []
    for k, (t, w) in enumerate(zip(items, ws)):
        here = f"{where}[{k}]"
        try:
            block = t["block"]
            if isinstance(block, list):
                block = tuple((b["name"], _scalar(b.get("coefficient", 1.0), here + ".block")) for b in block)
            out.append(ob.ObjectiveTerm(
                kind=t["kind"], block=block, weight=w,
                normalization=_normalization(t.get("normalization", 1.0), T, here + ".normalization"),
                target=None if t.get("target") is None else parse_matrix(t["target"], here + ".target"),
                projector=None if t.get("projector") is None else parse_matrix(t["projector"], here + ".projector"),
                label=t.get("label")))
        except KeyError as exc:
            raise ConfigError(f"{here}.{exc.args[0]}", "missing") from None
        except ValueError as exc:
            raise ConfigError(here, str(exc)) from None
    return out


def _path(p, base, where):
    full = p if os.path.isabs(p) else os.path.join(base, p)
    if not os.path.exists(full):
        raise ConfigError(where, f"file not found: {full}")
    return full


def _custom(cfg, base):
    pulse = cfg.get("pulse") or {}
    try:
        N = int(pulse["N"])
        T = float(pulse["T"]) if "T" in pulse else N * float(pulse["dT"])
    except KeyError as exc:
        raise ConfigError(f"pulse.{exc.args[0]}", "missing") from None
    if T <= 0 or N < 1:
        raise ConfigError("pulse", "need T > 0 and N >= 1")
    subs = cfg.get("subsystems")
    if not subs:
        raise ConfigError("subsystems", "need at least one subsystem")
    layouts = [_layout(s, f"subsystems[{k}]") for k, s in enumerate(subs)]
    labels = [s.get("label", f"s{k}") for k, s in enumerate(subs)]
    try:
        layout = bg.direct_sum(layouts, labels)
    except ValueError as exc:
        raise ConfigError("subsystems", str(exc)) from None
    if len(layouts) == 1:
        # a lone subsystem answers to both plain and labelled block names
        ent = dict(layout.entries)
        ent.update({f"{labels[0]}/{k}": v for k, v in layout.entries.items()})
        layout = bg.VanLoanLayout(layout.parts, ent)
    terms = _terms(cfg.get("terms"), T, "terms")
    dT = T / N
    N0 = int(pulse.get("N0", 0))
    opt = None
    if "dNu" in pulse:
        try:
            opt = tf.opt_transfer(N, N0, dT, float(pulse["dNu"]), float(pulse.get("steepness", 20.0)))
        except ValueError as exc:
            raise ConfigError("pulse", str(exc)) from None
        opt = tf.clamp_ends(opt, N0)
    elif N0:
        opt = tf.zero_pad(N, N0)
    ens = cfg.get("ensemble") or [{"label": "system", "weight": 1.0}]
    ws = _renormalize([float(e.get("weight", 1.0)) for e in ens], "ensemble")
    members = []
    for k, (e, w) in enumerate(zip(ens, ws)):
        here = f"ensemble[{k}]"
        tm = None
        if "lambda" in e or "phi" in e:
            lam = tf.load_curve(_path(e["lambda"], base, here + ".lambda")) if "lambda" in e else 1.0
            phi = tf.load_curve(_path(e["phi"], base, here + ".phi")) if "phi" in e else 0.0
            try:
                tm = tf.linear_transfer(N, dT, lam, phi)
            except ValueError as exc:
                raise ConfigError(here, str(exc)) from None
        if "scale" in e:
            s = float(e["scale"])
            tm = tf.identity(N).scaled(s) if tm is None else tm.scaled(s)
        members.append(ob.EnsembleMember(layout, w, tm, label=str(e.get("label", k))))
    try:
        spec = ob.ObjectiveSpec(members, terms, T, N, opt_transfer=opt)
    except (ValueError, KeyError) as exc:
        raise ConfigError("terms", str(exc.args[0])) from None
    return pr.Problem("custom", spec, SearchConfig())


def _search(base: SearchConfig, over: dict) -> SearchConfig:
    names = {f.name for f in fields(SearchConfig)}
    kw = {f.name: getattr(base, f.name) for f in fields(SearchConfig)}
    for k, v in (over or {}).items():
        if k not in names:
            raise ConfigError(f"search.{k}", f"unknown setting; known: {sorted(names)}")
        kw[k] = tuple(v) if k == "bounds" else v
    try:
        return SearchConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("search", str(exc)) from None


def load(path: str) -> RunSetup:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return from_dict(cfg, os.path.dirname(os.path.abspath(path)))


def from_dict(cfg, base_dir: str = ".") -> RunSetup:
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a mapping")
    kind = cfg.get("problem")
    if kind is None:
        raise ConfigError("problem", "missing (builtin name or 'custom')")
    if kind == "custom":
        problem = _custom(cfg, base_dir)
    else:
        params = cfg.get("params") or {}
        try:
            problem = pr.builtin(kind, **params)
        except TypeError as exc:
            raise ConfigError("params", str(exc)) from None
        except ValueError as exc:
            raise ConfigError("problem", str(exc)) from None
    search = _search(problem.config, cfg.get("search"))
    out = (cfg.get("output") or {}).get("dir", "out")
    return RunSetup(problem, search, out, cfg, base_dir)
