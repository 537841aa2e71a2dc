import csv
import math
from pathlib import Path

import pytest

from cellfree_ris.cli import main
from cellfree_ris.experiments import ROW_COLUMNS

DATA = Path(__file__).parent / "data"


def _data_rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def _run_tiny(out):
    return main([
        "run", "--config", str(DATA / "tiny.toml"), "--experiment", "convergence",
        "--schemes", "distributed,centralized", "--realizations", "2", "--out", str(out),
    ])


def test_golden_rows(tmp_path):
    assert _run_tiny(tmp_path) == 0
    got = _data_rows(tmp_path / "rows_convergence.csv")
    want = _data_rows(DATA / "golden_convergence_rows.csv")
    assert tuple(got[0]) == ROW_COLUMNS == tuple(want[0])
    assert len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        for col, a, b in zip(ROW_COLUMNS, g, w):
            if col in ("sum_rate", "weighted_sum_mse"):
                assert math.isclose(float(a), float(b), rel_tol=1e-9), (col, a, b)
            else:
                assert a == b


def test_repeat_invocation_is_byte_identical(tmp_path):
    _run_tiny(tmp_path / "a")
    _run_tiny(tmp_path / "b")
    for name in ("rows_convergence.csv", "series_convergence_distributed.csv", "series_convergence_centralized.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_header_records_provenance(tmp_path):
    _run_tiny(tmp_path)
    head = [l for l in (tmp_path / "rows_convergence.csv").read_text().splitlines() if l.startswith("#")]
    keys = [l[2:].split(":")[0] for l in head]
    assert keys[:4] == ["experiment", "config_sha256", "git_revision", "seed"]
    assert "# seed: 7" in head


def test_seed_flag_changes_results(tmp_path):
    args = ["run", "--config", str(DATA / "tiny.toml"), "--experiment", "power_sweep",
            "--sweep", "0", "--realizations", "1"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--seed", "99"])
    a = _data_rows(tmp_path / "a" / "rows_power_sweep.csv")[1]
    b = _data_rows(tmp_path / "b" / "rows_power_sweep.csv")[1]
    assert a[5] != b[5] and b[7] == "99"


def test_overhead_command(capsys, tmp_path):
    assert main(["overhead", "--paper-scale", "--iterations", "20", "--out", str(tmp_path / "o.csv")]) == 0
    out = capsys.readouterr().out
    assert "RM=200" in out
    assert "6440" in out and "6680" in out
    assert (tmp_path / "o.csv").exists()


def test_overhead_table_experiment(tmp_path):
    assert main(["run", "--experiment", "overhead_table", "--out", str(tmp_path)]) == 0
    rows = _data_rows(tmp_path / "overhead_table.csv")
    assert len(rows) == 1 + 2 * 5


def test_validate_command(capsys):
    assert main(["validate", "--instances", "10"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[dims]\nK = 0\n")
    assert main(["run", "--config", str(bad), "--experiment", "convergence", "--out", str(tmp_path)]) == 2
    assert "dims.K" in capsys.readouterr().err


def test_unknown_scheme_rejected():
    with pytest.raises(SystemExit):
        main(["run", "--experiment", "convergence", "--schemes", "magic"])
