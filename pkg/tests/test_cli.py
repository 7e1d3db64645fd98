import csv
import io
import json
import math
import random

import pytest

from groomsim.cli import main, write_summaries_csv
from groomsim.ledger import build_ledger, parse_event_log, user_summaries, write_event_log

from oracles import random_log


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write(path, text):
    path.write_text(text)
    return str(path)


SMALL_SIM = """\
# small run used across the analysis tests
alpha = 1.34
beta = 0.24
r0 = 0.5
steps = 60
groomers = 40
seed = 7
"""


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    cfg = write(root / "sim.txt", SMALL_SIM)
    assert main(["simulate", cfg, "--out", str(root / "out")]) == 0
    return root / "out"


def test_simulate_twitter_preset(tmp_path):
    assert main(["simulate", "--preset", "twitter", "--seed", "1", "--out", str(tmp_path)]) == 0
    steps = {int(r["step"]) for r in read_csv(tmp_path / "spend.csv")}
    assert steps == set(range(1, 999))
    assert max(int(r["day"]) for r in read_csv(tmp_path / "trace.csv")) == 998


def test_simulate_byte_identical(tmp_path, sim_dir):
    cfg = write(tmp_path / "sim.txt", SMALL_SIM)
    assert main(["simulate", cfg, "--out", str(tmp_path / "a"), "--threads", "3"]) == 0
    for name in ("trace.csv", "spend.csv", "config.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_missing_beta(tmp_path, capsys):
    cfg = write(tmp_path / "sim.txt", SMALL_SIM.replace("beta = 0.24\n", ""))
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "beta" in capsys.readouterr().err


def test_simulate_bad_value(tmp_path, capsys):
    cfg = write(tmp_path / "sim.txt", SMALL_SIM.replace("steps = 60", "steps = zero"))
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "steps" in capsys.readouterr().err


def test_manifest_lists_outputs(sim_dir):
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert manifest["outputs"] == ["config.txt", "spend.csv", "trace.csv"]
    assert manifest["seed"] == 7
    assert all((sim_dir / name).exists() for name in manifest["outputs"])


def test_analyze_piped_trace(tmp_path, sim_dir, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO((sim_dir / "trace.csv").read_text()))
    out = tmp_path / "an"
    assert main(["analyze", "-", "--strength", "volume", "--analyses", "regression", "--out", str(out)]) == 0
    rows = read_csv(out / "regression.csv")
    assert list(rows[0]) == ["coef", "estimate", "se", "t", "p"]
    assert [r["coef"] for r in rows] == ["a", "b"]


def test_analyze_all_outputs(tmp_path, sim_dir):
    out = tmp_path / "an"
    code = main(["analyze", str(sim_dir / "trace.csv"), "--strength", "volume", "--min-n", "5",
                 "--out", str(out)])
    assert code == 0
    names = set(json.loads((out / "manifest.json").read_text())["outputs"])
    assert {"powerlaw.csv", "attachment.csv", "regression.csv", "vol_by_d.csv", "summaries.csv"} <= names
    assert {"vol_by_density_f1.csv", "vol_by_density_f0.9.csv", "vol_by_density_f0.8.csv"} <= names


def test_analyze_active_percentile(tmp_path):
    # simulated groomers act on every step, so use a log with varied activity
    events = random_log(random.Random(5), 600, 12, 40)
    path = tmp_path / "log.csv"
    with open(path, "w", newline="") as fh:
        write_event_log(events, fh)
    out = tmp_path / "an"
    assert main(["analyze", str(path), "--analyses", "summaries", "--active-percentile", "75",
                 "--out", str(out)]) == 0
    kept = {r["user"] for r in read_csv(out / "summaries.csv")}

    summaries = user_summaries(build_ledger(events))
    us = sorted(s.u for s in summaries)
    threshold = us[math.ceil(0.75 * len(us)) - 1]
    assert kept == {s.user for s in summaries if s.u > threshold}
    assert 0 < len(kept) < len(summaries)


def test_analyze_filter_removing_everyone(tmp_path, sim_dir):
    assert main(["analyze", str(sim_dir / "trace.csv"), "--analyses", "summaries", "--strength",
                 "volume", "--active-percentile", "75", "--out", str(tmp_path)]) == 3


def test_analyze_empty_file(tmp_path):
    path = write(tmp_path / "empty.csv", "")
    assert main(["analyze", path, "--out", str(tmp_path / "o")]) == 2
    path = write(tmp_path / "header.csv", "day,groomer,groomee,volume\n")
    assert main(["analyze", path, "--out", str(tmp_path / "o")]) == 2


def test_analyze_lists_first_ten_bad_rows(tmp_path, capsys):
    rows = "".join(f"{d},A,A,1\n" for d in range(1, 16))
    path = write(tmp_path / "bad.csv", "day,groomer,groomee,volume\n" + rows)
    assert main(["analyze", path, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "15 bad row" in err
    assert err.count("line ") == 10 and "line 11:" in err and "line 12:" not in err


def test_analyze_unknown_analysis(tmp_path, sim_dir):
    assert main(["analyze", str(sim_dir / "trace.csv"), "--analyses", "fourier",
                 "--out", str(tmp_path)]) == 2


def test_analyze_estimation_failure(tmp_path):
    # a single pair cannot support the regression
    path = write(tmp_path / "one.csv", "day,groomer,groomee,volume\n1,A,B,1\n2,A,B,1\n")
    assert main(["analyze", path, "--analyses", "regression", "--out", str(tmp_path / "o")]) == 3


def test_calibrate_budget_one(tmp_path):
    spec = write(tmp_path / "t.txt", "preset = 755_group_chat\ngroomers = 50\nreplicates = 1\n")
    assert main(["calibrate", spec, "--budget", "1", "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "calibration.csv")
    assert rows[-1]["phase"] == "final-unconverged"
    grid = [r for r in rows if r["phase"] == "grid"]
    assert len(grid) == 64
    assert float(rows[-1]["mse"]) == min(float(r["mse"]) for r in grid)
    assert main(["calibrate", spec, "--budget", "1", "--strict", "--out", str(tmp_path / "s")]) == 3
    assert (tmp_path / "s" / "calibration.csv").exists()


def test_calibrate_null_target(tmp_path):
    sim = write(tmp_path / "sim.txt", "alpha = 0\nbeta = 0.3\nr0 = 0.258\nsteps = 120\ngroomers = 100\n")
    assert main(["simulate", sim, "--out", str(tmp_path / "sim")]) == 0
    assert main(["analyze", str(tmp_path / "sim" / "trace.csv"), "--strength", "volume",
                 "--analyses", "summaries", "--t-obs", "120", "--out", str(tmp_path / "an")]) == 0
    spec = write(tmp_path / "t.txt", f"summaries = {tmp_path / 'an' / 'summaries.csv'}\n"
                 "steps = 120\nr0 = 0.258\ngroomers = 100\n")
    assert main(["calibrate", spec, "--out", str(tmp_path / "cal")]) == 0
    final = read_csv(tmp_path / "cal" / "calibration.csv")[-1]
    assert float(final["alpha"]) < 0.1


@pytest.mark.parametrize("text", [
    "a = 1.2\nb = 1.3\nu_fixed = 100\nsteps = 50\n",            # r0 missing
    "a = 1.2\nb = x\nu_fixed = 100\nsteps = 50\nr0 = 0.1\n",
    "preset = orkut\n",
    "a = 1.2\nb = 1.3\nu_fixed = 100\nsteps = 50\nr0 = 0.1\ncolour = red\n",
    "a 1.2\n",
])
def test_calibrate_malformed_target(tmp_path, text):
    spec = write(tmp_path / "t.txt", text)
    assert main(["calibrate", spec, "--out", str(tmp_path / "o")]) == 2


SWEEP = "alphas = {}\nbeta = 0.24\nr0 = 0.126\nsteps = 200\ngroomers = 50\nreplicates = 3\nplexp_xmin = 3\n"


def test_sweep_empty_alphas(tmp_path):
    spec = write(tmp_path / "s.txt", SWEEP.format(""))
    assert main(["sweep", spec, "--out", str(tmp_path / "o")]) == 2


def test_sweep_single_row(tmp_path):
    spec = write(tmp_path / "s.txt", SWEEP.format("1.0"))
    assert main(["sweep", spec, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert len(rows) == 1 and float(rows[0]["alpha"]) == 1.0


def test_sweep_threads_do_not_change_output(tmp_path):
    spec = write(tmp_path / "s.txt", SWEEP.format("0, 2"))
    assert main(["sweep", spec, "--out", str(tmp_path / "a")]) == 0
    assert main(["sweep", spec, "--threads", "4", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def _rerun_identical(src, dst):
    assert main(["rerun", str(src / "manifest.json"), "--out", str(dst)]) == 0
    manifest = json.loads((src / "manifest.json").read_text())
    assert json.loads((dst / "manifest.json").read_text())["outputs"] == manifest["outputs"]
    for name in manifest["outputs"]:
        assert (dst / name).read_bytes() == (src / name).read_bytes(), name


def test_rerun_simulate(tmp_path, sim_dir):
    _rerun_identical(sim_dir, tmp_path / "re")


def test_rerun_analyze(tmp_path, sim_dir):
    out = tmp_path / "an"
    assert main(["analyze", str(sim_dir / "trace.csv"), "--strength", "volume", "--min-n", "5",
                 "--out", str(out)]) == 0
    _rerun_identical(out, tmp_path / "re")


def test_rerun_sweep_and_calibrate(tmp_path):
    spec = write(tmp_path / "s.txt", SWEEP.format("0.5"))
    assert main(["sweep", spec, "--out", str(tmp_path / "sw")]) == 0
    _rerun_identical(tmp_path / "sw", tmp_path / "sw2")
    target = write(tmp_path / "t.txt", "preset = 755_group_chat\ngroomers = 30\nreplicates = 1\n")
    assert main(["calibrate", target, "--budget", "4", "--out", str(tmp_path / "cal")]) == 0
    _rerun_identical(tmp_path / "cal", tmp_path / "cal2")


def test_rerun_bad_manifest(tmp_path):
    path = write(tmp_path / "m.json", "{not json")
    assert main(["rerun", path, "--out", str(tmp_path / "o")]) == 2


def test_summaries_csv_roundtrip(tmp_path):
    from groomsim.cli import read_summaries_csv
    events = parse_event_log("day,groomer,groomee,volume\n1,A,B,1\n2,A,C,1\n2,B,A,3\n")
    summaries = user_summaries(build_ledger(events))
    with open(tmp_path / "s.csv", "w", newline="") as fh:
        write_summaries_csv(summaries, fh)
    assert read_summaries_csv(tmp_path / "s.csv") == summaries
