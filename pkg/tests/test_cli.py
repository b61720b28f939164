import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from lmmtails.cli import RunSpec, main, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BENCH = str(CONFIGS / "benchmark.toml")


def run_main(args, capsys):
    code = main(args + ["-q"])
    out, err = capsys.readouterr()
    return code, out.strip(), err.strip().splitlines()


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


def test_simulate_writes_sample_and_manifest(tmp_path, capsys):
    code, out, _ = run_main(
        ["simulate", "--config", BENCH, "--out", str(tmp_path), "--paths", "500", "--horizon", "1"], capsys
    )
    assert code == 0
    run_dir = Path(out)
    assert run_dir.parent == tmp_path and run_dir.name.startswith("simulate-") and run_dir.name.endswith("-42")
    rows = list(csv.reader(open(run_dir / "terminal_sample.csv")))
    assert rows[0] == ["path", "F_1", "F_2"] and len(rows) == 501
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["paths"] == 500 and manifest["seed"] == 42 and manifest["horizon"] == 1.0


def test_validate_benchmark_passes_and_is_reproducible(tmp_path, capsys):
    args = ["validate", "--config", BENCH, "--horizon", "1", "--paths", "100000"]
    code1, out1, _ = run_main(args + ["--out", str(tmp_path)], capsys)
    code2, out2, _ = run_main(args + ["--out", str(tmp_path), "--workers", "2"], capsys)
    assert code1 == code2 == 0
    assert out1 != out2
    first, second = files(out1), files(out2)
    assert first == second
    rows = list(csv.DictReader(open(Path(out1) / "validate.csv")))
    assert rows and all(r["status"] == "PASS" for r in rows)
    names = {r["check"] for r in rows}
    assert {"martingale_terminal_F2", "rn_weight_mean_Q1", "martingale_own_F1", "product_bound_F1_v5"} <= names


def test_single_point_grid_is_bracket_error(tmp_path, capsys):
    code, _, err = run_main(
        ["moment-scan", "--config", BENCH, "--out", str(tmp_path), "--horizon", "1", "--paths", "2000", "--v-grid", "5:5:1"],
        capsys,
    )
    assert code == 5
    assert err[-1].startswith("E_BRACKET: ")


def test_frozen_scan_report(tmp_path, capsys):
    code, out, _ = run_main(
        ["moment-scan", "--config", BENCH, "--out", str(tmp_path), "--horizon", "1", "--paths", "200000",
         "--source", "frozen", "--v-grid", "2:25:24"],
        capsys,
    )
    assert code == 0
    report = (Path(out) / "report.txt").read_text()
    assert "verdict: CONTAINED" in report
    theory = next(line for line in report.splitlines() if line.startswith("theoretical"))
    assert float(theory.split(":")[1]) == pytest.approx(12.5, rel=1e-14)
    rows = list(csv.reader(open(Path(out) / "scan.csv")))
    assert rows[0] == ["v", "estimate", "std_error", "max_share", "n_eff", "verdict"] and len(rows) == 25


def test_tail_report_under_own_measure(tmp_path, capsys):
    code, out, _ = run_main(
        ["tail-report", "--config", BENCH, "--out", str(tmp_path), "--horizon", "1", "--paths", "200000",
         "--steps-per-year", "8", "--measure", "own"],
        capsys,
    )
    assert code == 0
    rows = list(csv.reader(open(Path(out) / "tail.csv")))
    assert rows[0] == ["slope", "intercept", "r2", "q_lo", "q_hi"]
    assert float(rows[1][0]) > 0 and rows[1][3:] == ["0.99", "0.9999"]


@pytest.mark.parametrize(
    "extra,code,prefix",
    [
        (["--rate", "3"], 4, "E_DOMAIN"),
        (["--horizon", "2.4"], 4, "E_DOMAIN"),
        (["--paths", "3", "--antithetic"], 4, "E_DOMAIN"),
    ],
)
def test_domain_errors_before_compute(tmp_path, capsys, extra, code, prefix):
    status, _, err = run_main(["moment-scan", "--config", BENCH, "--out", str(tmp_path)] + extra, capsys)
    assert status == code and err[-1].startswith(prefix + ": ")
    assert not any(tmp_path.iterdir())


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(Path(BENCH).read_text().replace("[2.0, 2.5, 3.0]", "[2.0, 1.5, 3.0]"))
    status, _, err = run_main(["validate", "--config", str(bad), "--out", str(tmp_path)], capsys)
    assert status == 3 and err[-1] == "E_CONFIG: tenor.dates[1]: 1.5 must exceed the previous date 2.0"


def test_failed_check_exit(tmp_path, monkeypatch):
    import lmmtails.cli as cli
    from lmmtails.errors import CheckFailed
    from lmmtails.reports import CheckRow

    monkeypatch.setattr(cli, "run_checks", lambda *a, **k: [CheckRow("x", False, 9.0, 3.0)])
    with pytest.raises(CheckFailed):
        run(RunSpec("validate", BENCH, str(tmp_path), horizon=1.0, paths=10))
    assert (next(tmp_path.iterdir()) / "validate.csv").read_text() == "check,status,statistic,threshold\nx,FAIL,9.0,3.0\n"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lmmtails.cli", "simulate", "--config", BENCH, "--out", str(tmp_path), "--paths", "10", "-q"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert Path(proc.stdout.strip()).is_dir()
