import json
import os

import numpy as np
import pytest
import yaml

from vanloan import cli
from vanloan import noisemodel as nm
from vanloan import objective as ob
from vanloan import transfer as tf
from vanloan.config import load

TINY = {
    "problem": "custom",
    "pulse": {"T": 8.0, "N": 16},
    "subsystems": [{
        "label": "spin",
        "drift": None,
        "controls": [{"builtin": "pauli-x", "scale": [0, -0.5]}, {"builtin": "pauli-y", "scale": [0, -0.5]}],
        "layout": {"kind": "f1", "operators": ["pauli-z"]},
    }],
    "terms": [
        {"kind": "dyson_norm_sq", "block": "spin/D", "weight": 0.5,
         "normalization": {"dyson": "pauli-z"}, "label": "sz"},
        {"kind": "fidelity_sq", "block": "spin/U", "weight": 0.5, "target": "pauli-x", "label": "x_gate"},
    ],
    "search": {"bounds": [-1, 1], "seeds": 6, "rng_seed": 0, "stop_after_success": 1,
               "max_evals_polish": 200, "progress": False},
    "output": {"dir": "out"},
}


def _write(tmp_path, cfg, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    path = _write(d, TINY)
    code = cli.main(["run", path, "--quiet", "--out", str(d / "a")])
    return d, path, code


def test_run_succeeds_and_writes_artifacts(tiny_run):
    d, _, code = tiny_run
    assert code == cli.EXIT_OK
    out = d / "a"
    for name in ("waveform.txt", "decision.txt", "waveform_rotated.txt", "spectrum.txt", "history.txt",
                 "report.json"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["success"] and rep["best_phi"] >= 0.9999
    for key in ("problem", "units", "code_version", "python", "config", "search", "metrics", "wall_time_s",
                "termination", "seeds", "best_seed"):
        assert key in rep
    assert rep["config"]["pulse"] == {"T": 8.0, "N": 16}
    hist = np.loadtxt(out / "history.txt")
    assert np.all(np.diff(hist) >= 0)


def test_waveform_file_round_trip(tiny_run):
    d, path, _ = tiny_run
    spec = load(path).problem.spec
    a, T = cli.read_waveform(str(d / "a" / "waveform.txt"))
    assert a.shape == (2, 16) and T == pytest.approx(8.0, abs=1e-12)
    rep = json.loads((d / "a" / "report.json").read_text())
    assert abs(ob.evaluate_waveform(spec, a) - rep["best_phi"]) < 1e-10
    header = (d / "a" / "waveform.txt").read_text().splitlines()[0]
    assert header == "# index, t_start, duration, a_1, a_2"


def test_rotated_file_matches_rotation(tiny_run):
    d, _, _ = tiny_run
    a, _ = cli.read_waveform(str(d / "a" / "waveform.txt"))
    r, _ = cli.read_waveform(str(d / "a" / "waveform_rotated.txt"))
    assert np.allclose(r, np.array([[1, 1], [1, -1]]) / np.sqrt(2) @ a, atol=1e-15)


def test_repeat_run_is_byte_identical(tiny_run):
    d, path, _ = tiny_run
    assert cli.main(["run", path, "--quiet", "--out", str(d / "b")]) == cli.EXIT_OK
    for name in ("waveform.txt", "decision.txt", "history.txt"):
        assert (d / "a" / name).read_bytes() == (d / "b" / name).read_bytes()


def test_run_exit_codes(tmp_path, capsys):
    # search that cannot reach the threshold in its budget
    cfg = json.loads(json.dumps(TINY))
    cfg["search"].update(seeds=1, max_evals_phase1=3, polish=False)
    assert cli.main(["run", _write(tmp_path, cfg), "--quiet", "--out", str(tmp_path / "o")]) == cli.EXIT_SEARCH
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["success"] is False
    # configuration error names the field
    cfg["terms"][0].pop("block")
    assert cli.main(["run", _write(tmp_path, cfg, "bad.yaml"), "--quiet"]) == cli.EXIT_CONFIG
    assert "terms[0].block" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG


def test_cli_overrides_seed_count(tmp_path):
    cfg = json.loads(json.dumps(TINY))
    cfg["search"].update(max_evals_phase1=3, polish=False, stop_after_success=None)
    cli.main(["run", _write(tmp_path, cfg), "--quiet", "--seeds", "2", "--rng", "7", "--out", str(tmp_path / "o")])
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert len(rep["seeds"]) == 2 and rep["search"]["rng_seed"] == 7


def test_emit_basis_rotated():
    R = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    a = np.random.default_rng(3).uniform(-1, 1, (2, 9))
    assert np.allclose(cli.emit_basis_rotated(a), R @ a, atol=1e-15)
    assert np.allclose(cli.emit_basis_rotated(np.array([[1.0], [0.0]])).ravel(), [1 / np.sqrt(2)] * 2)
    assert np.allclose(cli.emit_basis_rotated(cli.emit_basis_rotated(a)), a, atol=1e-15)
    assert np.all(cli.emit_basis_rotated(np.zeros((2, 4))) == 0)
    with pytest.raises(ValueError, match="two channels"):
        cli.emit_basis_rotated(np.zeros((3, 4)))


def test_spectrum_file(tmp_path):
    a = np.random.default_rng(4).uniform(-1, 1, (2, 8))
    cli.write_spectrum(str(tmp_path / "s.txt"), a, 0.5)
    data = np.loadtxt(tmp_path / "s.txt", delimiter=",")
    assert np.array_equal(data[:, 0], tf.freq_grid(8, 0.5))
    assert np.array_equal(data[:, 1] + 1j * data[:, 2], tf.spectrum(a))


def test_verify_prints_json_lines(capsys):
    assert cli.main(["verify", "conjecture"]) == cli.EXIT_OK
    lines = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    assert lines and all(r["passed"] and r["suite"] == "conjecture" for r in lines)
    assert cli.main(["verify", "nope"]) == cli.EXIT_CONFIG
    assert "unknown suite" in capsys.readouterr().err


def test_fit_corr(tmp_path, capsys):
    taus = np.linspace(1e-9, 5e-6, 200)
    np.savetxt(tmp_path / "s.txt", np.c_[taus, nm.correlation(taus)])
    assert cli.main(["fit-corr", str(tmp_path / "s.txt"), "--terms", "3"]) == cli.EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert len(res["coefficients"]) == len(res["rates"]) == 3
    assert res["relative_rms"] < 0.05
    assert cli.main(["fit-corr", str(tmp_path / "none.txt"), "--terms", "3"]) == cli.EXIT_CONFIG


def test_fit_corr_requires_terms(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit-corr", str(tmp_path / "s.txt")])
    assert exc.value.code == 2


def test_shipped_custom_example_runs(tmp_path):
    here = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "custom_sz.yaml")
    assert cli.main(["run", here, "--quiet", "--out", str(tmp_path)]) == cli.EXIT_OK
