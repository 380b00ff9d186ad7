import re
from pathlib import Path

import pytest

from ilpfspn.cli import main
from ilpfspn.report import CSV_COLUMNS, fmt6

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_prints_counters(capsys):
    code, out, _ = run_cli(capsys, "run", "--set", "W=1", "--set", "V=1000")
    assert code == 0
    assert out.splitlines()[0] == "cycles=1003"
    keys = [line.split("=")[0] for line in out.splitlines()]
    assert keys == ["cycles", "ipc", "branches_fired", "mispredictions", "stall_cycles", "consumers_fired",
                    "value_mispredictions", "reexecutions", "rejected_jumps", "seed"]


def test_run_invalid_parameter(capsys):
    code, _, err = run_cli(capsys, "run", "--set", "p_bmis=1.5")
    assert code == 2 and "p_bmis out of [0,1]" in err


def test_run_parse_error_names_position(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model]\nW = = 4\n")
    code, _, err = run_cli(capsys, "run", "--config", str(bad))
    assert code == 2 and "line 2, column 5" in err


def test_run_twice_is_byte_identical(capsys):
    args = ("run", "--set", "V=20000", "--set", "lambda_i=0.5", "--set", "p_bmis=0.2",
            "--set", "mu_i=1", "--set", "p_vmis=0.5", "--seed", "42")
    first = run_cli(capsys, *args)
    assert first == run_cli(capsys, *args)
    assert "seed=42" in first[1]


def test_run_writes_summary_and_trace(tmp_path, capsys):
    out, trace = tmp_path / "summary.txt", tmp_path / "t.tsv"
    code, stdout, _ = run_cli(capsys, "run", "--set", "W=2", "--set", "V=10", "--out", str(out), "--trace", str(trace))
    assert code == 0 and stdout == ""
    assert out.read_text().startswith("cycles=8\n")
    lines = trace.read_text().splitlines()
    assert lines[0].split("\t") == ["time", "kind", "name", "P_IC", "P_IB", "P_RS/LSQ", "P_ROB", "P_RR",
                                    "P_EX", "P_REG"]
    assert lines[-1].split("\t")[:3] == ["8.0", "clock", "T_CLOCK+T_END"]
    assert len(lines) == 1 + 8


def test_abort_exit_code(capsys):
    # one consumer per initiated instruction, each re-executed: the volume never drains
    code, _, err = run_cli(capsys, "run", "--set", "W=1", "--set", "V=5000", "--set", "mu_i=1", "--set", "p_vmis=1")
    assert code == 3 and "cycle cap" in err


def test_missing_config_file_is_io_error(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "run", "--config", str(tmp_path / "nope.toml"))
    assert code == 4


def test_bad_flag_is_config_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--seed", "-3"])
    assert info.value.code == 2


@pytest.mark.parametrize("W,mu,expected", [("4", "1", "1.33333"), ("8", "0", "1.00000"), ("2", "1.5", "4.00000")])
def test_oracle(capsys, W, mu, expected):
    assert run_cli(capsys, "oracle", W, mu)[:2] == (0, expected + "\n")


def test_oracle_undefined(capsys):
    assert run_cli(capsys, "oracle", "2", "2")[0] == 2


def test_sweep_golden_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run_cli(capsys, "sweep", "--config", str(GOLDEN / "sweep.toml"), "--out", str(out))
    assert code == 0
    data = out.read_bytes()
    assert data == (GOLDEN / "sweep.csv").read_bytes()
    assert b"\r" not in data
    lines = data.decode("utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 6


def test_sweep_reruns_are_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[model]\nV = 5000\nlambda_i = 0.6\nmu_i = 0.5\n[sweep]\nW = [1, 2]\np_bmis = [0.1]\n"
                   "p_vmis = [0, 1]\n[replications]\nn = 3\nbase_seed = 9\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(capsys, "sweep", "--config", str(cfg), "--out", str(a))[0] == 0
    assert run_cli(capsys, "sweep", "--config", str(cfg), "--out", str(b), "--jobs", "2")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = [line.split(",") for line in a.read_text().splitlines()[1:]]
    filled = [r[CSV_COLUMNS.index("additional_speedup")] for r in rows]
    assert [bool(x) for x in filled] == [True, False, True, False]


def test_sweep_svg(tmp_path, capsys):
    svg = tmp_path / "fig.svg"
    code, out, _ = run_cli(capsys, "sweep", "--config", str(GOLDEN / "sweep.toml"), "--svg", str(svg))
    assert code == 0 and out.startswith("W,lambda_i")
    text = (tmp_path / "fig_speedup.svg").read_text()
    assert text.count("<polyline") == 2
    assert 'viewBox="0 0 640 480"' in text
    assert "machine width W" in text and "p_bmis=0.1" in text and "p_bmis=0" in text
    assert not (tmp_path / "fig_additional_speedup.svg").exists()


def test_svg_axes_padded_five_percent():
    from ilpfspn.report import render_svg

    text = render_svg([("a", [(1.0, 1.0), (3.0, 2.0)])], "y")
    pts = re.search(r'points="([^"]+)"', text).group(1).split()
    (x0, y0), (x1, y1) = [tuple(map(float, p.split(","))) for p in pts]
    # plot area is 370 px wide and 380 px tall; data spans 1/1.1 of each
    assert x1 - x0 == pytest.approx(370 / 1.1, abs=0.02)
    assert y0 - y1 == pytest.approx(380 / 1.1, abs=0.02)


def test_sweep_without_axes_is_config_error(capsys):
    assert run_cli(capsys, "sweep", "--set", "V=10")[0] == 2


def test_sweep_unwritable_output(capsys):
    code = run_cli(capsys, "sweep", "--config", str(GOLDEN / "sweep.toml"), "--out", "/nonexistent/dir/x.csv")[0]
    assert code == 4


def test_fmt6():
    assert [fmt6(x) for x in (4 / 3, 1.0, 1000 / 1003, 1003.0, 0.0, 1e6, 123456789.0)] == [
        "1.33333", "1.00000", "0.997009", "1003.00", "0.00000", "1000000", "123457000"
    ]
