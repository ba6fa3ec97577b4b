import csv
import io
import math

import numpy as np
import pytest

from vmbc import cli, experiments
from vmbc.config import ConfigError, list_presets, load, parse_floats, parse_text

SMALL = ["--set", "graph.L=60", "--set", "stop.max_events=2000", "--replicas", "3"]


def invoke(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_range_syntax():
    assert parse_floats("0.0:0.1:1.0") == [round(0.1 * i, 12) for i in range(11)]
    assert parse_floats("1, 2.5, 0:0.5:1") == [1.0, 2.5, 0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        parse_floats("0:0:1")


def test_parse_text_defaults_and_types():
    cfg = parse_text("model.alpha = 0.25\nobserve.patterns = 10, 01  # comment\nstop.max_events = 1e5")
    assert cfg["model.alpha"] == 0.25
    assert cfg["observe.patterns"] == ["10", "01"]
    assert cfg["stop.max_events"] == 100000
    assert cfg["run.replicas"] == 1


@pytest.mark.parametrize("text", ["model.alpah = 1", "run.replicas = 0", "graph.kind = tree",
                                  "sweep.param = graph.L\nsweep.values = 1", "model.alpha = x"])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_unknown_key_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("model.alpah = 1\n")
    code, out, err = invoke(capsys, "simulate", "--config", str(path))
    assert code == 1 and out == "" and "model.alpah" in err
    code, _, _ = invoke(capsys, "simulate", "--preset", "nope")
    assert code == 1


def test_presets_present():
    names = list_presets()
    for name in ("fig1_d1", "fig1_d2", "fig1_d3", "clustering", "meanfield", "jump",
                 "extinction", "couple", "validate"):
        assert name in names
    d2, d3 = load(preset="fig1_d2"), load(preset="fig1_d3")
    assert (d2["graph.d"], d2["graph.L"]) == (2, 40)
    assert (d3["graph.d"], d3["graph.L"]) == (3, 12)
    d1 = load(preset="fig1_d1")
    assert (d1["graph.L"], d1["model.alpha"], d1["stop.max_events"], d1["init.p"]) == (1000, 0.5, 100000, 0.5)


def test_list_presets(capsys):
    code, out, _ = invoke(capsys, "--list-presets")
    assert code == 0 and "fig1_d1" in out.split()


def test_reproducible_output(capsys):
    argv = ["sweep", "--preset", "fig1_d1", *SMALL, "--set", "sweep.values=0.2,0.8", "--seed", "9"]
    _, a, _ = invoke(capsys, *argv, "--no-timestamp")
    _, b, _ = invoke(capsys, *argv, "--no-timestamp")
    assert a == b and not a.startswith("#")
    _, c, _ = invoke(capsys, *argv)
    assert c.startswith("# generated") and c.split("\n", 1)[1] == a


def test_parallel_independent_of_workers(capsys):
    argv = ["sweep", "--preset", "fig1_d1", *SMALL, "--set", "sweep.values=0.3,0.6", "--no-timestamp"]
    _, a, _ = invoke(capsys, *argv, "--parallel", "1")
    _, b, _ = invoke(capsys, *argv, "--parallel", "2")
    assert a == b


def test_sweep_rows_sorted(capsys):
    _, out, _ = invoke(capsys, "sweep", "--preset", "fig1_d1", *SMALL, "--set", "sweep.values=0.9,0.1,0.5",
                       "--no-timestamp")
    r = rows(out)
    assert r[0] == ["gamma", "mean_final_frequency", "std_error", "replicas"]
    assert [float(x[0]) for x in r[1:]] == [0.1, 0.5, 0.9]


def test_single_point_sweep_matches_simulate(capsys):
    common = ["--preset", "fig1_d1", *SMALL, "--set", "model.gamma=0.4", "--no-timestamp"]
    _, sw, _ = invoke(capsys, "sweep", *common, "--set", "sweep.values=0.4")
    _, sim, _ = invoke(capsys, "simulate", *common)
    sim_rows = rows(sim)
    head = sim_rows[0]
    finals = {}
    for r in sim_rows[1:]:
        finals[r[0]] = float(r[head.index("cooperator_frequency")])
    (point,) = rows(sw)[1:]
    assert float(point[1]) == pytest.approx(np.mean(list(finals.values())), abs=1e-15)
    assert int(point[3]) == len(finals) == 3


def test_simulate_columns(capsys, tmp_path):
    out = tmp_path / "o.csv"
    code, _, _ = invoke(capsys, "simulate", "--preset", "clustering", "--set", "graph.L=50",
                        "--set", "stop.max_events=300", "--set", "observe.snapshot_every=100",
                        "--replicas", "2", "--out", str(out), "--no-timestamp")
    assert code == 0
    r = rows(out.read_text())
    assert r[0] == ["replica", "event_count", "sim_time", "cooperator_frequency", "interface_density",
                    "p10", "p01", "p101", "p010", "absorption"]
    assert len(r) - 1 <= 2 * 4


def test_jump_and_validate_commands(capsys):
    code, out, _ = invoke(capsys, "jump", "--preset", "jump", "--set", "jump.runs=2000", "--no-timestamp")
    assert code == 0
    head, row = rows(out)
    rec = dict(zip(head, row))
    assert float(rec["a_c"]) == pytest.approx(math.log(2), abs=1e-10)
    assert float(rec["escape_oracle"]) == pytest.approx(0.5, abs=1e-9)
    code, out, _ = invoke(capsys, "validate", "--set", "validate.graphs=torus:1:6,complete:5", "--no-timestamp")
    assert code == 0 and len(rows(out)) == 1 + 2 * 2


def test_couple_command(capsys):
    code, out, _ = invoke(capsys, "couple", "--preset", "couple", "--replicas", "2",
                          "--set", "stop.max_events=5000", "--no-timestamp")
    assert code == 0
    r = rows(out)
    assert all(x[r[0].index("order_violations")] == "0" for x in r[1:])


def test_failed_check_exit_code(capsys, monkeypatch):
    monkeypatch.setitem(cli.COMMANDS, "validate",
                        lambda cfg, par: experiments.Table(["x"], [[1]], failed=True))
    code, out, err = invoke(capsys, "validate", "--no-timestamp")
    assert code == 2 and "failed" in err and out == "x\n1\n"


def test_crossing():
    assert experiments.crossing([0, 1, 2], [0.1, 0.3, 0.7]) == pytest.approx(1.5)
    assert experiments.crossing([0, 1], [0.1, 0.2]) == math.inf
