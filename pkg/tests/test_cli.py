import numpy as np
import pytest

from skybeam.cli import main
from skybeam.scenario import dumps_scenario

from conftest import make_scenario


@pytest.fixture()
def tiny_path(tmp_path):
    s = make_scenario(K=2, N=2, M=2, seed=81,
                      users=[[110.0, 320.0], [70.0, 150.0]], name="tiny")
    path = tmp_path / "tiny.ini"
    path.write_text(dumps_scenario(s))
    return path


def read_rows(path):
    return [
        line for line in path.read_text().splitlines()
        if line and not line.startswith("#")
    ]


def strip_timestamp(path):
    return "\n".join(
        line for line in path.read_text().splitlines()
        if not line.startswith("# generated")
    )


def test_validate_ok_and_invalid(tmp_path, tiny_path, capsys):
    assert main(["validate", str(tiny_path)]) == 0
    assert "ok" in capsys.readouterr().out
    bad = tmp_path / "bad.ini"
    bad.write_text(tiny_path.read_text().replace("speed_min = 1.0", "speed_min = 0.0"))
    assert main(["validate", str(bad)]) == 1
    assert "V_min" in capsys.readouterr().err


def test_run_writes_all_outputs(tmp_path, tiny_path, capsys):
    out = tmp_path / "out"
    code = main(["run", str(tiny_path), "--out", str(out), "--i-max", "4"])
    assert code == 0
    assert "final objective" in capsys.readouterr().out
    for name in ("trace.txt", "trajectory.txt", "layout.txt", "solution.txt"):
        assert (out / name).exists(), name
    objs = [float(r.split()[1]) for r in read_rows(out / "trace.txt")]
    assert np.all(np.diff(objs) >= -1e-6)
    # every output declares its schema
    for name in ("trace.txt", "trajectory.txt", "layout.txt"):
        assert "# columns:" in (out / name).read_text()


def test_run_fpa_keeps_uniform_layout(tmp_path, tiny_path):
    out = tmp_path / "out"
    assert main(["run", str(tiny_path), "--fpa", "--out", str(out),
                 "--i-max", "3"]) == 0
    rows = read_rows(out / "layout.txt")
    for row in rows:
        coords = [float(v) for v in row.split()[1:]]
        assert coords == pytest.approx([0.0, 0.05], abs=1e-12)


def test_run_missing_and_invalid_scenarios(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[users]\nuser_1 = nonsense\n")
    assert main(["run", str(bad)]) == 1


def test_sweep_table_and_determinism(tmp_path, tiny_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    args = ["sweep", str(tiny_path), "--axis", "power_w", "--values", "1,3",
            "--i-max", "3", "--epsilon", "1e-2"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    table1 = out1 / "sweep_power_w.txt"
    rows = read_rows(table1)
    assert len(rows) == 2
    vals = [[float(v) for v in r.split()] for r in rows]
    assert vals[0][0] == 1.0 and vals[1][0] == 3.0
    assert all(len(v) == 3 for v in vals)
    assert strip_timestamp(table1) == strip_timestamp(out2 / "sweep_power_w.txt")


def test_sweep_parallel_matches_serial(tmp_path, tiny_path):
    out1, out2 = tmp_path / "p1", tmp_path / "p2"
    args = ["sweep", str(tiny_path), "--axis", "noise_dbm",
            "--values=-110,-100", "--i-max", "2", "--epsilon", "1e-2"]
    assert main(args + ["--out", str(out1), "--jobs", "1"]) == 0
    assert main(args + ["--out", str(out2), "--jobs", "2"]) == 0
    assert strip_timestamp(out1 / "sweep_noise_dbm.txt") == strip_timestamp(
        out2 / "sweep_noise_dbm.txt"
    )


def test_sweep_invalid_value_aborts_with_partial_results(tmp_path, tiny_path):
    out = tmp_path / "abort"
    code = main(["sweep", str(tiny_path), "--axis", "antennas",
                 "--values", "2,2.5", "--i-max", "2", "--epsilon", "1e-2",
                 "--out", str(out)])
    assert code == 1
    text = (out / "sweep_antennas.txt").read_text()
    assert "# aborted:" in text
    assert len(read_rows(out / "sweep_antennas.txt")) == 1  # first point flushed


def test_beampattern_from_bundle(tmp_path, tiny_path):
    out = tmp_path / "out"
    assert main(["run", str(tiny_path), "--out", str(out), "--i-max", "2"]) == 0
    code = main(["beampattern", str(tiny_path), "--bundle",
                 str(out / "solution.txt"), "--out", str(out), "--grid", "64"])
    assert code == 0
    for k in (1, 2):
        rows = read_rows(out / f"beampattern_slot2_user{k}.txt")
        assert len(rows) == 64
        theta = [float(r.split()[0]) for r in rows]
        assert theta[0] == 0.0 and theta[-1] == pytest.approx(np.pi / 2)
        assert all(float(r.split()[1]) >= 0.0 for r in rows)


def test_beampattern_slot_out_of_range(tmp_path, tiny_path, capsys):
    out = tmp_path / "out"
    main(["run", str(tiny_path), "--out", str(out), "--i-max", "1"])
    assert main(["beampattern", str(tiny_path), "--bundle",
                 str(out / "solution.txt"), "--slot", "9",
                 "--out", str(out)]) == 1
