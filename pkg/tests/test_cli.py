import json
import os
import subprocess
import sys

import pytest

from madsse.cli import main
from madsse.grid import sample_feeder_37, save_feeder

SMALL = ["--generate", "layout=37", "--meters", "list=6,12,34"]


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def outputs(d, skip=("timing.csv",)):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name not in skip}


def test_generate_and_partition(tmp_path):
    assert run(tmp_path, "generate", "--generate", "size=36,seed=7") == 0
    doc = json.loads((tmp_path / "feeder.json").read_text())
    assert len(doc["nodes"]) == 37
    assert json.loads((tmp_path / "config.json").read_text())["generate"] == "size=36,seed=7"
    assert run(tmp_path, "partition", "--generate", "layout=37", "--roots", "3,13,20") == 0
    part = json.loads((tmp_path / "partition.json").read_text())
    assert len(part["areas"]) == 3 and not part["nested"]


@pytest.mark.parametrize("solver", ["gradient", "multiarea", "gauss-newton"])
def test_estimate_solvers(tmp_path, solver):
    assert run(tmp_path, "estimate", *SMALL, "--roots", "3,13,20", "--solver", solver,
               "--trials", "2") == 0
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    row = dict(zip(lines[1].split(","), lines[2].split(",")))
    assert row["solver"] == solver and float(row["avg_error_pct"]) < 5.0


def test_estimate_deterministic_except_timing(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["estimate", *SMALL, "--trials", "3", "--seed", "4", "--out", str(d)]) == 0
    assert outputs(a) == outputs(b)
    assert (a / "timing.csv").exists()


def test_multiarea_matches_gradient_output(tmp_path):
    for solver in ("gradient", "multiarea"):
        assert main(["estimate", *SMALL, "--roots", "3,13,20", "--solver", solver,
                     "--out", str(tmp_path / solver)]) == 0
    g = (tmp_path / "gradient" / "trials.csv").read_text()
    m = (tmp_path / "multiarea" / "trials.csv").read_text()
    assert g.splitlines()[2].split(",")[3] == m.splitlines()[2].split(",")[3]


def test_compare(tmp_path):
    assert run(tmp_path, "compare", *SMALL, "--trials", "3") == 0
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert len(rows) == 2 + 3
    assert (tmp_path / "histogram.csv").exists()


def test_realtime_synthetic_and_file(tmp_path):
    assert run(tmp_path, "realtime", *SMALL, "--ticks", "30") == 0
    rows = (tmp_path / "realtime.csv").read_text().splitlines()
    assert len(rows) == 2 + 30 and rows[1].startswith("tick,avg_error_pct")
    from madsse.measurements import diurnal_profile, save_timeseries
    m = sample_feeder_37()
    save_timeseries(m, diurnal_profile(m, 10, seed=2), tmp_path / "ts.csv")
    assert run(tmp_path, "realtime", *SMALL, "--timeseries", str(tmp_path / "ts.csv")) == 0
    assert len((tmp_path / "realtime.csv").read_text().splitlines()) == 2 + 10


def test_observability(tmp_path):
    assert run(tmp_path, "observability", "--generate", "size=20,seed=2,load_fraction=1.0",
               "--meters", "none", "--pseudo", "p-only") == 0
    rep = json.loads((tmp_path / "observability.json").read_text())
    assert rep["index_percent"] == 50.0
    assert run(tmp_path, "observability", "--generate", "size=20,seed=2,load_fraction=1.0",
               "--meters", "none", "--drop", "5") == 0
    rep = json.loads((tmp_path / "observability.json").read_text())
    assert rep["unobservable_dims"] == 1


def test_generate_flags(tmp_path):
    assert run(tmp_path, "generate", "--generate", "size=6,multiphase=false") == 0
    assert json.loads((tmp_path / "feeder.json").read_text())["nodes"][1]["phases"] == "a"
    assert run(tmp_path, "generate", "--generate", "size=6,multiphase=true") == 0
    assert json.loads((tmp_path / "feeder.json").read_text())["nodes"][1]["phases"] == "abc"
    assert run(tmp_path, "generate", "--generate", "size=6,colour=red") == 2
    assert run(tmp_path, "generate", "--generate", "size=6,multiphase=maybe") == 2


def test_feeder_file(tmp_path):
    save_feeder(sample_feeder_37(), tmp_path / "f.json")
    assert run(tmp_path, "estimate", "--feeder", str(tmp_path / "f.json"),
               "--meters", "list=6,12,34") == 0


def test_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "estimate", "--feeder", str(tmp_path / "missing.json")) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert run(tmp_path, "partition", "--generate", "layout=37", "--roots", "999") == 2
    assert run(tmp_path, "estimate", *SMALL[:2], "--meters", "list=999") == 2
    assert run(tmp_path, "realtime", *SMALL, "--timeseries", str(tmp_path / "nope.csv")) == 2


def test_env_output_dir_and_entry_point(tmp_path):
    env = dict(os.environ, MADSSE_OUT=str(tmp_path / "envout"))
    r = subprocess.run([sys.executable, "-m", "madsse.cli", "generate", "--generate", "size=5"],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "envout" / "feeder.json").exists()
