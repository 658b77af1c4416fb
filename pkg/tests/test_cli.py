import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ionlab.cli import EXIT_FIT, EXIT_OK, EXIT_PHYSICS, EXIT_USAGE, MANIFEST_SUFFIX, main
from ionlab.experiment import CSV_COLUMNS


def report(path):
    with open(path) as fh:
        return {r["quantity"]: (float(r["value"]), float(r["stderr"])) for r in csv.DictReader(fh)}


def run(tmp_path, name, *extra, out=None):
    out = str(tmp_path / (out or name.replace(".seq", ".csv")))
    assert main(["run", name, "--seed", "1", "--out", out, *extra]) == EXIT_OK
    return out


# --- modes ---------------------------------------------------------------------------

def test_modes_two_ion_spherical(capsys, tmp_path):
    out = tmp_path / "modes.csv"
    assert main(["modes", "--ions", "2", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "breathing(y)" in text and "rocking" in text
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["kind", "label", "value", "unit"]
    lines = [float(r[2]) for r in rows[1:] if r[0] == "sideband"]
    wy, wz = 2.07e6, 4.51e6
    for target in (math.sqrt(3) * wy, math.sqrt(wz ** 2 - wy ** 2)):
        assert min(abs(v - target) for v in lines) < 1e-6 * target


def test_modes_single_ion(capsys, tmp_path):
    out = tmp_path / "one.csv"
    assert main(["modes", "--ions", "1", "--out", str(out)]) == EXIT_OK
    first = [ln for ln in capsys.readouterr().out.splitlines() if "order 1" in ln]
    assert len(first) == 3
    assert sorted(float(ln.split()[0]) for ln in first) == pytest.approx([2.07, 2.16, 4.51])


def test_modes_three_ion_spacing(tmp_path):
    cfg = tmp_path / "axial.cfg"
    cfg.write_text("trap x=5MHz, y=5MHz, z=0.7MHz\nion ca40\nions 3\n")
    out = tmp_path / "three.csv"
    assert main(["modes", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    spacings = [float(r[2]) for r in csv.reader(open(out)) if r[0] == "spacing"]
    assert spacings == pytest.approx([6.1e-6, 6.1e-6], rel=0.02)


def test_modes_unstable_crystal_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "weak.cfg"
    cfg.write_text("trap x=0.5MHz, y=0.5MHz, z=1MHz\nion ca40\nions 3\n")
    assert main(["modes", "--config", str(cfg)]) == EXIT_PHYSICS
    assert "unstable" in capsys.readouterr().err


# --- run / replay ------------------------------------------------------------------------

def test_run_writes_csv_and_manifest(tmp_path):
    out = run(tmp_path, "fock0_flop.seq")
    with open(out) as fh:
        assert fh.readline().strip() == ",".join(CSV_COLUMNS)
    manifest = json.load(open(out + MANIFEST_SUFFIX))
    assert manifest["subcommand"] == "run" and manifest["seed"] == 1
    assert manifest["resolved_config"]["trap_hz"] == pytest.approx([2.16e6, 2.07e6, 4.51e6])
    assert manifest["version"]


def test_run_twice_and_replay_are_byte_identical(tmp_path):
    a = run(tmp_path, "cooling_blue.seq", out="a.csv")
    b = run(tmp_path, "cooling_blue.seq", out="b.csv")
    assert open(a, "rb").read() == open(b, "rb").read()
    replayed = tmp_path / "replayed.csv"
    assert main(["replay", a + MANIFEST_SUFFIX, "--out", str(replayed)]) == EXIT_OK
    assert replayed.read_bytes() == open(a, "rb").read()


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    monkeypatch.setenv("IONLAB_THREADS", "1")
    one = run(tmp_path, "ramsey.seq", out="one.csv")
    monkeypatch.setenv("IONLAB_THREADS", "4")
    four = run(tmp_path, "ramsey.seq", out="four.csv")
    assert open(one, "rb").read() == open(four, "rb").read()


def test_seed_changes_output(tmp_path):
    a = run(tmp_path, "cooling_blue.seq", out="a.csv")
    b = str(tmp_path / "b.csv")
    assert main(["run", "cooling_blue.seq", "--seed", "2", "--out", b]) == EXIT_OK
    assert open(a).read() != open(b).read()


def test_oracle_and_shot_overrides(tmp_path):
    out = run(tmp_path, "fock0_flop.seq", "--oracle", out="oracle.csv")
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["p_est"] == r["p_true"] and int(r["shots"]) == 0 for r in rows)
    out = run(tmp_path, "fock0_flop.seq", "--shots", "7", out="seven.csv")
    with open(out) as fh:
        assert {int(r["shots"]) for r in csv.DictReader(fh)} == {7}


def test_ramsey_run_matches_oracle_within_shot_noise(tmp_path):
    noisy = np.genfromtxt(run(tmp_path, "ramsey.seq"), delimiter=",", names=True, dtype=None,
                          encoding=None)
    p = np.clip(noisy["p_true"], 1e-3, 1 - 1e-3)
    z = (noisy["p_est"] - noisy["p_true"]) / np.sqrt(p * (1 - p) / noisy["shots"])
    assert np.mean(z ** 2) == pytest.approx(1.0, abs=0.35)


def test_gnuplot_script(tmp_path):
    script = tmp_path / "plot.gp"
    run(tmp_path, "fock0_flop.seq", "--oracle", "--gnuplot-script", str(script))
    assert "plot" in script.read_text() and "set datafile separator ','" in script.read_text()


# --- exit codes -----------------------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.seq"
    bad.write_text("init ground\nfrobnicate\nmeasure shots=1\n")
    assert main(["run", str(bad)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err
    assert main(["run", "no_such_file.seq"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    physics = tmp_path / "physics.seq"
    physics.write_text("trap x=0.5MHz, y=0.5MHz, z=1MHz\nion ca40\nions 3\n"
                       "init ground\npulse bsb(z) pi\nmeasure shots=1\n")
    assert main(["run", str(physics)]) == EXIT_PHYSICS
    flat = tmp_path / "flat.csv"
    flat.write_text(",".join(CSV_COLUMNS) + "\n"
                    + "".join(f"duration,{i},0,0,0,100,{i}\n" for i in range(2)))
    assert main(["fit", "lorentzian", str(flat)]) == EXIT_FIT


def test_schema_mismatch_names_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("param,value,p_est\nduration,0,0\n")
    assert main(["fit", "lorentzian", str(bad)]) == EXIT_USAGE
    assert "p_true" in capsys.readouterr().err


def test_fit_argument_validation(tmp_path):
    out = run(tmp_path, "fock0_flop.seq", "--oracle")
    assert main(["fit", "thermometry", out]) == EXIT_USAGE
    assert main(["fit", "flop", out]) == EXIT_USAGE
    assert main(["fit", "ramsey", out]) == EXIT_USAGE


# --- fits on the bundled corpus ----------------------------------------------------------------

def test_fit_thermometry_on_cooled_scans(tmp_path, capsys):
    red, blue = run(tmp_path, "cooling_red.seq"), run(tmp_path, "cooling_blue.seq")
    out = tmp_path / "therm.csv"
    assert main(["fit", "thermometry", red, blue, "--out", str(out)]) == EXIT_OK
    rows = report(out)
    assert rows["p0_ci_low"][0] <= 0.999 <= rows["p0_ci_high"][0]
    assert rows["thermal_consistent"][0] == 1.0
    assert "p0=" in capsys.readouterr().out


@pytest.mark.parametrize("name, dominant, floor", [("fock0_flop.seq", 0, 0.99),
                                                    ("fock1_flop.seq", 1, 0.8)])
def test_fit_flop_on_corpus(tmp_path, name, dominant, floor):
    data = run(tmp_path, name)
    out = tmp_path / "flop.csv"
    assert main(["fit", "flop", data, "--sequence", name, "--out", str(out)]) == EXIT_OK
    rows = report(out)
    assert rows["dominant_n"][0] == dominant
    assert rows[f"p{dominant}"][0] >= floor


def test_fit_ramsey_on_corpus(tmp_path):
    data = run(tmp_path, "ramsey.seq")
    out = tmp_path / "ramsey_fit.csv"
    assert main(["fit", "ramsey", data, "--sequence", "ramsey.seq", "--out", str(out)]) == EXIT_OK
    rows = report(out)
    assert rows["area_error"][0] == pytest.approx(0.1, abs=0.02)
    assert rows["decay_constant_rate"][0] == pytest.approx(2000.0, rel=0.1)
    out_ang = tmp_path / "ramsey_ang.csv"
    assert main(["fit", "ramsey", data, "--sequence", "ramsey.seq", "--convention", "angular",
                 "--out", str(out_ang)]) == EXIT_OK
    ang = report(out_ang)["decay_constant_angular"][0]
    assert ang == pytest.approx(rows["decay_rate"][0] / (2 * math.pi))


def test_fit_heating_on_corpus(tmp_path):
    red, blue = run(tmp_path, "heating_red.seq"), run(tmp_path, "heating_blue.seq")
    out = tmp_path / "heat.csv"
    assert main(["fit", "heating", red, blue, "--out", str(out)]) == EXIT_OK
    assert report(out)["heating_rate"][0] == pytest.approx(1 / 0.190, rel=0.1)


def test_fit_report_to_stdout(tmp_path, capsys):
    data = run(tmp_path, "cooling_blue.seq")
    capsys.readouterr()
    assert main(["fit", "lorentzian", data]) == EXIT_OK
    captured = capsys.readouterr()
    assert captured.out.splitlines()[0] == "quantity,value,stderr"
    assert "center=" in captured.err


# --- gate speed -------------------------------------------------------------------------

def summary_t_min(text):
    line = [ln for ln in text.splitlines() if ln.startswith("t_min=")][-1]
    t_part, ops_part = line.split(", ")
    return float(t_part.split("=")[1]), int(ops_part.split("=")[1].split()[0])


def test_gatespeed(tmp_path, capsys):
    out = tmp_path / "gate.csv"
    grid = "2,100,16"
    assert main(["gatespeed", "--grid", grid, "--coherence-time", "1ms", "--out", str(out)]) == EXIT_OK
    t99, ops = summary_t_min(capsys.readouterr().out)
    assert 5e-6 <= t99 <= 30e-6
    assert 10 <= ops < 100
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t_s", "infidelity", "envelope", "detuning_hz"]
    assert len(rows) == 17
    assert main(["gatespeed", "--grid", grid, "--fidelity", "0.5"]) == EXIT_OK
    t50, _ = summary_t_min(capsys.readouterr().out)
    assert t50 < t99


def test_gatespeed_unreachable_and_bad_grid(capsys):
    assert main(["gatespeed", "--grid", "2,4,3", "--fidelity", "0.999999"]) == EXIT_PHYSICS
    assert "t_min=inf" in capsys.readouterr().out
    assert main(["gatespeed", "--grid", "nonsense"]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ionlab.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.startswith("ionlab ")
