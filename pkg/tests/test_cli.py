import json

import numpy as np
import pytest

from sparse_ppf import io as sio
from sparse_ppf.cli import main
from sparse_ppf.model import SpikeTrain, StimulusSequence


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().err


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


STUDY1 = """
mode = "study1"
ensemble = 2
cv_pilots = 1
cv_grid = [0.1, 1.0]
record_every = 50
workers = 1

[scenario]
M = 11
K = 1000
sigma_sq = 0.5
"""


def test_study1_outputs_and_manifest(tmp_path, capsys):
    cfg = write(tmp_path, STUDY1)
    out = tmp_path / "o1"
    code, err = run_cli(["--config", cfg, "--out", out, "--seed", 4, "--gnuplot"], capsys)
    assert code == 0, err
    names = {p.name for p in out.iterdir()}
    assert {"learning_curves.csv", "steady_state.csv", "cv_scores.csv", "manifest.json", "plot.gp"} <= names
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 4 and man["mode"] == "study1"
    assert set(man["outputs"]) == names - {"manifest.json"}
    schema, cols, rows = sio.read_table(out / "steady_state.csv")
    assert schema == "sparse_ppf/steady_state/v1"
    assert [r[0] for r in rows] == ["ppf1", "ppf0", "ssppf", "sdppf"]
    assert {float(r[3]) for r in rows[:2]} <= {0.1, 1.0}


def test_outputs_are_reproducible(tmp_path, capsys):
    cfg = write(tmp_path, STUDY1)
    a, b = tmp_path / "a", tmp_path / "b"
    for o in (a, b):
        assert run_cli(["--config", cfg, "--out", o, "--filters", "ppf1,sdppf"], capsys)[0] == 0
    ma = json.loads((a / "manifest.json").read_text())["outputs"]
    mb = json.loads((b / "manifest.json").read_text())["outputs"]
    assert ma == mb


def test_study2_small(tmp_path, capsys):
    cfg = write(tmp_path, 'mode = "study2"\nrecord_every = 50\nstride_ci = 100\n[scenario]\nK = 3000\n')
    out = tmp_path / "o2"
    code, err = run_cli(["--config", cfg, "--out", out], capsys)
    assert code == 0, err
    _, cols, rows = sio.read_table(out / "confidence.csv")
    assert tuple(cols) == sio.INTERVAL_COLUMNS and len(rows) == 2 * 30
    _, cols, rows = sio.read_table(out / "ks.csv")
    assert {r[0] for r in rows} == {"ppf1", "ppf0", "ssppf", "sdppf"}
    assert (out / "acf.csv").exists() and (out / "trajectories.csv").exists() and (out / "rates.csv").exists()


def test_strf_small(tmp_path, capsys):
    cfg = write(tmp_path, """mode = "strf"
[strf]
I = 10
J = 8
grid_rows = 2
grid_cols = 2
seconds = 5.0
beta = 0.999
gamma = 1.0
atoms = [[0, 1, 0.5]]
trace_points = [[2, 3]]
snapshot_times = [2.5]
""")
    out = tmp_path / "o3"
    code, err = run_cli(["--config", cfg, "--out", out], capsys)
    assert code == 0, err
    assert (out / "strf_snapshot_2.500s.csv").exists() and (out / "strf_traces.csv").exists()
    _, cols, rows = sio.read_table(out / "strf_snapshot_final.csv")
    assert len(cols) == 8 and len(rows) == 10
    assert "correlation" in json.loads((out / "manifest.json").read_text())["summary"]


def test_custom_mode(tmp_path, capsys):
    rng = np.random.default_rng(0)
    s = rng.normal(size=2003)
    lam = 1 / (1 + np.exp(2 - 3 * s[3:]))
    sio.write_spikes(tmp_path / "sp.txt", SpikeTrain((rng.random(2000) < lam).astype(int)))
    sio.write_stimulus(tmp_path / "st.txt", StimulusSequence(s, pad=3))
    cfg = write(tmp_path, f"""mode = "custom"
filters = ["ppf1"]
[custom]
spikes = "{tmp_path / 'sp.txt'}"
stimulus = "{tmp_path / 'st.txt'}"
M = 5
[filter.ppf1]
beta = 0.99
gamma = 0.1
""")
    out = tmp_path / "o4"
    code, err = run_cli(["--config", cfg, "--out", out], capsys)
    assert code == 0, err
    _, _, rows = sio.read_table(out / "estimates.csv")
    assert {r[1] for r in rows} == {f"ppf1_w{m}" for m in range(5)}


@pytest.mark.parametrize("argv", [["--mode", "nope"], ["--bogus"], ["--seed", "x"], ["--cv-grid", "a,b"],
                                  ["--filters", "kalman"], ["--ensemble", "0"], ["--config", "/no/such.toml"]])
def test_usage_errors_exit_2_with_json(argv, capsys, tmp_path):
    code, err = run_cli(argv + ["--out", tmp_path], capsys)
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit_code"] == 2 and payload["message"]


def test_missing_input_file_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, 'mode = "custom"\n[custom]\nspikes = "/no/a"\nstimulus = "/no/b"\nM = 3\n')
    assert run_cli(["--config", cfg, "--out", tmp_path / "o"], capsys)[0] == 2


def test_numerical_failure_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, STUDY1 + "\n[filter.ssppf]\nq = 0.5\nbeta = 0.5\n")
    code, err = run_cli(["--config", cfg, "--out", tmp_path / "o", "--filters", "ssppf"], capsys)
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "numerical"
