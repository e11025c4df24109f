import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from jointca.cli import RandomnessUsed, forbid_randomness, main

DATA = __import__("pathlib").Path(__file__).parent / "data"


def call(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_table1_verb():
    code, text = call("table1", "--r1", "60", "--r2", "70")
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["ue_id", "r_carrier_1", "r_carrier_2", "total", "p_1", "p_2", "iterations", "converged"]
    assert len(rows) == 13
    assert all(r[-1] == "true" for r in rows[1:])


def test_run_verb_with_trace(tmp_path):
    trace = tmp_path / "t.csv"
    code, text = call("run", str(DATA / "table1_r100.json"), "--trace", str(trace), "--seedless")
    assert code == 0
    assert trace.read_text().startswith("iteration,ue_id,carrier_id,bid,price,rate\n")


def test_flags_override_settings(tmp_path):
    code, text = call("table1", "--r1", "30", "--r2", "70", "--decay", "off", "--max-iters", "7", "--delta", "1e-6")
    assert code == 3  # not converged
    rows = list(csv.reader(io.StringIO(text)))
    assert {r[6] for r in rows[1:]} == {"7"}
    assert {r[7] for r in rows[1:]} == {"false"}


def test_regime_verb():
    code, text = call("regime", str(DATA / "table1_r100.json"))
    assert code == 0
    assert text.strip().splitlines()[-1] == "classification,Borderline"


def test_sweep_verb(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"base": {"builtin": "table1", "R1": 30, "R2": 70}, "values": [30, 40]}))
    code, text = call("sweep", str(spec))
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][0] == "R_swept" and len(rows) == 25


def test_sweep_verb_to_directory(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"base": {"builtin": "table1"}, "values": [100]}))
    code, _ = call("sweep", str(spec), "--output", str(tmp_path / "o"))
    assert code == 0
    assert len((tmp_path / "o" / "sweep.csv").read_text().splitlines()) == 13


def test_bad_scenario_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"carriers": [], "users": []}')
    code, _ = call("run", str(p))
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_bad_decay_flag(capsys):
    code, _ = call("table1", "--r1", "30", "--r2", "70", "--decay", "exp:1")
    assert code == 2


def test_forbid_randomness_traps_and_restores():
    with forbid_randomness():
        with pytest.raises(RandomnessUsed):
            np.random.default_rng()
    np.random.default_rng(0)  # restored


def test_backend_flag():
    code, text = call("--backend")
    assert code == 0 and text.strip() in {"numba", "python"}


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "jointca.cli", "table1", "--r1", "100", "--r2", "70"],
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.count("\n") == 13
