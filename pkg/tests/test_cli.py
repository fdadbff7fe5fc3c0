import csv
import io
import json

import numpy as np
import pytest

from subperc import cli


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


TAIL = """\
experiment = tail
group = free:2
subgroup = all
R = 8
p = 0.2
n_max = 12
N = 3000
"""


# ---------------------------------------------------------------- validate


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, TAIL)]) == cli.EXIT_OK
    assert "ok (tail" in capsys.readouterr().out


def test_validate_missing_group(tmp_path, capsys):
    text = TAIL.replace("group = free:2\n", "")
    assert cli.main(["validate", write(tmp_path, text)]) == cli.EXIT_CONFIG
    assert "missing key 'group'" in capsys.readouterr().out


def test_validate_grid_range(tmp_path, capsys):
    text = "experiment = sweep\ngroup = free:2\nR = 4\np_grid = 0.2,1.3\nN = 10\n"
    assert cli.main(["validate", write(tmp_path, text)]) == cli.EXIT_CONFIG
    out = capsys.readouterr().out
    assert "p_grid" in out and "outside [0, 1]" in out


def test_validate_wreath_axis(tmp_path, capsys):
    text = TAIL.replace("free:2", "wreath:z2:free:2").replace("subgroup = all", "subgroup = axis:0")
    assert cli.main(["validate", write(tmp_path, text)]) == cli.EXIT_CONFIG
    assert "incompatible subgroup" in capsys.readouterr().out


def test_validate_unknown_and_duplicate_keys(tmp_path, capsys):
    text = TAIL + "colour = blue\nN = 4\n"
    assert cli.main(["validate", write(tmp_path, text)]) == cli.EXIT_CONFIG
    out = capsys.readouterr().out
    assert "unknown key 'colour'" in out and "duplicate key 'N'" in out


def test_validate_reports_every_problem(tmp_path, capsys):
    text = "experiment = sweep\ngroup = free:2\nR = -1\np_grid = 0.5\nN = 0\n"
    cli.main(["validate", write(tmp_path, text)])
    out = capsys.readouterr().out
    assert "3 problem(s)" in out


def test_override_flag(tmp_path):
    cfg = cli.load_config(write(tmp_path, TAIL), ["p=0.3", "N=10"])
    assert not cfg.errors
    assert cfg["p"] == 0.3 and cfg["N"] == 10


def test_grid_syntax():
    assert cli._grid("0.1:0.3:3") == [0.1, 0.2, 0.3]
    assert cli._grid("1/4, 1/2") == [0.25, 0.5]


def test_missing_file(capsys):
    assert cli.main(["validate", "/nonexistent/x.cfg"]) == cli.EXIT_CONFIG


# ---------------------------------------------------------------- run


def test_tail_csv_is_monotone(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", write(tmp_path, TAIL), "-o", str(out)]) == cli.EXIT_OK
    rows = read_csv(out / "tail_free-2_all_R8_seed0.csv")
    assert list(rows[0]) == list(cli.SERIES_COLUMNS)
    for series in ("max", "origin"):
        est = [float(r["estimate"]) for r in rows if r["series"] == series]
        assert len(est) == 12
        assert np.all(np.diff(est) <= 0)
    manifest = json.loads((out / "tail_free-2_all_R8_seed0.manifest.json").read_text())
    assert manifest["seeds"]["count"] == 3000 and manifest["seeds"]["first"] == 0
    assert len(manifest["config_hash"]) == 64
    assert manifest["versions"]["backend"] in ("numba", "numpy")
    assert "wall_time_s" in manifest
    # one two-column data file per series
    dat = (out / "tail_free-2_all_R8_seed0_max.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 13 and len(dat[1].split()) == 2


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SUBPERC_OUTPUT", str(tmp_path / "env"))
    text = "experiment = oracle:russo\nbuiltin = series-2\n"
    assert cli.main(["run", write(tmp_path, text)]) == cli.EXIT_OK
    assert (tmp_path / "env" / "oracle-russo_builtin_series-2_R0_seed0.csv").exists()


def test_oracle_russo_series(capsys):
    assert cli.main(["oracle", "russo", "--builtin", "series-2"]) == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows and all(float(r["gap"]) < 1e-12 for r in rows)
    assert all(r["verdict"] == "holds" for r in rows)
    # 2p at p = 2/5
    assert float(rows[0]["lhs"]) == pytest.approx(0.8, abs=1e-15)


def test_oracle_unknown_instance(capsys):
    assert cli.main(["oracle", "russo", "--builtin", "nope"]) == cli.EXIT_CONFIG


def test_oracle_violation_exit_code(tmp_path, monkeypatch, capsys):
    from subperc import oracles

    bad = oracles.OracleReport("russo", "fake", 1, 2, 1, False)
    monkeypatch.setitem(cli.ORACLE_BUILTINS, "russo", lambda: {"fake": lambda: [bad]})
    assert cli.main(["oracle", "russo"]) == cli.EXIT_ORACLE


@pytest.mark.parametrize("text", [
    "experiment = trichotomy\ngroup = free:3\nR = 40\np_grid = 0.1,0.2\nN = 2\n",
    "experiment = tail\ngroup = tree-oriented:3\nsubgroup = level:0\nR = 40\np = 0.5\nN = 2\n",
    "experiment = freq\ngroup = lattice:2\nR = 40\np = 0.5\nT = 10\nN = 2\n",
])
def test_resource_cap_exit(tmp_path, capsys, text):
    cfg = write(tmp_path, text + "max_vertices = 1000\n")
    assert cli.main(["run", cfg, "-o", str(tmp_path)]) == cli.EXIT_RESOURCE
    assert "resource cap" in capsys.readouterr().err


def test_sampling_error_exit(tmp_path, capsys):
    # too few nonzero tail points to fit
    text = TAIL.replace("p = 0.2", "p = 0.001").replace("N = 3000", "N = 5") + "sources = 0\n"
    assert cli.main(["run", write(tmp_path, text), "-o", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "raise N or lower n_max" in capsys.readouterr().err


def test_list_groups(capsys):
    assert cli.main(["list-groups"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    for name in ("free:k", "lattice:d", "wreath", "tree-oriented", "finite:S3"):
        assert name in out


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--help"])
    out = capsys.readouterr().out
    assert "time_in_start" in out and "p_grid" in out


# ---------------------------------------------------------------- determinism


CONFIGS = {
    "sweep": "experiment = sweep\ngroup = lattice:2\nR = 6\np_grid = 0.3:0.7:5\nN = 60\n",
    "tail": TAIL.replace("N = 3000", "N = 400"),
    "trichotomy": "experiment = trichotomy\ngroup = wreath:z2:free:2\nsubgroup = lamp\nR = 4\n"
                  "p_grid = 0.3,0.6,0.9\nm = 2\nN = 40\n",
    "freq": "experiment = freq\ngroup = lattice:2\nR = 6\np = 0.6\nT = 300\nN = 12\n",
    "visits": "experiment = visits\ngroup = free:2\nR = 0\np = 0.6\nT = 50,100\nN = 30\n",
}


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_byte_identical_across_workers(tmp_path, name, capsys):
    cfg = write(tmp_path, CONFIGS[name])
    texts = []
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        assert cli.main(["run", cfg, "-o", str(out), "-w", str(w)]) == cli.EXIT_OK
        texts.append(sorted((p.name, p.read_bytes()) for p in out.iterdir() if p.suffix in (".csv", ".dat")))
    assert texts[0] == texts[1] == texts[2]
    assert texts[0]
