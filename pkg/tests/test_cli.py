import csv

import pytest

from mimres.cli import main
from mimres.experiment import (CSV_HEADER, CSVFormatError, emit_curves, read_metrics_csv,
                               table_configs, table_grid)
from mimres.network import ConfigurationError

RUN = ["run", "--problem", "poisson", "--method", "mim1", "--dim", "2", "--width", "5",
       "--depth", "2", "--activation", "square", "--iters", "100", "--seed", "7",
       "--cadence", "10", "--eval-points", "200", "--batch-interior", "64",
       "--batch-boundary", "32"]


def test_run_writes_expected_rows(tmp_path):
    out = tmp_path / "r"
    assert main(RUN + ["--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "metrics.csv")))
    assert rows[0] == CSV_HEADER
    assert len(rows) - 1 == 100 // 10 + 1
    assert rows[1][4:] == ["", "", "", ""]  # lap, grad_lap, diag_hess, wall_s not applicable
    meta = (out / "meta.json").read_text()
    assert '"total": 123' in meta and "PCG64" in meta


def test_rerun_is_byte_identical(tmp_path):
    main(RUN + ["--out", str(tmp_path / "a")])
    main(RUN + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--method", "mim1"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["run", "--problem", "poisson", "--bogus", "1"])
    assert e.value.code == 2
    assert main(["run", "--problem", "poisson", "--variant", "partial",
                 "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as e:
        main(["table", "nonexistent"])
    assert e.value.code == 2


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = poisson\nmethod = dgm\ndim = 1\nwidth = 3\ndepth = 1\n"
                   "iters = 4\ncadence = 2\neval_points = 50\nbatch_interior = 16\n"
                   "batch_boundary = 8\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--iters", "6", "--out", str(out)]) == 0
    assert len(read_metrics_csv(out / "metrics.csv")) == 4


def test_default_out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MIMRES_OUT", str(tmp_path))
    assert main(RUN[:-6] + ["--iters", "0"]) == 0
    assert (tmp_path / "poisson-mim1-d2-m2-n5-square-s7" / "metrics.csv").exists()


def test_curves(tmp_path):
    p = tmp_path / "metrics.csv"
    p.write_text(",".join(CSV_HEADER) + "\n0,1.0,0.01,0.0,,,,\n10,0.5,0.001,1e-3,,,,\n")
    written = emit_curves(p)
    rows = list(csv.reader(open(written["u"])))
    assert rows[1] == ["0", "-2.0"] and len(rows) == 3
    assert list(csv.reader(open(written["grad_u"])))[1][1] == "-16.0"
    assert set(written) == {"u", "grad_u"}


def test_curves_malformed(tmp_path, capsys):
    p = tmp_path / "metrics.csv"
    p.write_text(",".join(CSV_HEADER) + "\n0,1.0,0.01,0.0,,,,\n10,abc,0.1,0.1,,,,\n")
    with pytest.raises(CSVFormatError, match=":3:"):
        emit_curves(p)
    assert main(["curves", str(p)]) == 1
    assert ":3:" in capsys.readouterr().err


def test_csv_roundtrip(tmp_path):
    out = tmp_path / "r"
    main(RUN + ["--out", str(out), "--iters", "20"])
    recs = read_metrics_csv(out / "metrics.csv")
    from mimres.experiment import csv_row
    lines = (out / "metrics.csv").read_text().splitlines()[1:]
    assert [",".join(csv_row(r)) for r in recs] == lines


def test_table_grids():
    assert len(table_grid("poisson-neumann")) == 12
    cells = {(c["dim"], c["width"]) for c in table_grid("poisson-neumann")}
    assert cells == {(2, 5), (4, 10), (8, 15), (16, 20)}
    ma = table_grid("monge-ampere")
    assert {c["activation"] for c in ma} == {"requ"} and {c["depth"] for c in ma} == {2}
    assert sorted({(c["dim"], c["width"]) for c in ma}) == [
        (2, 10), (2, 20), (2, 30), (4, 20), (4, 30), (4, 40), (8, 30), (8, 40), (8, 50)]
    assert len(table_grid("biharmonic")) == 15
    assert len(table_grid("kdv")) == 18
    assert len(table_grid("poisson-depth-activation")) == 27
    with pytest.raises(ConfigurationError):
        table_grid("table-99")


def test_table_overrides_and_cap(tmp_path):
    cells = table_configs("poisson-neumann", {"iters": 500}, tmp_path)
    assert all(c.iters == 500 for c, _ in cells)
    capped = [extra for c, extra in table_configs("poisson-neumann", {}, tmp_path) if c.dim == 16]
    assert all("iteration_cap" in e for e in capped)


def test_run_table_small(tmp_path):
    assert main(["table", "biharmonic", "--out-root", str(tmp_path), "--iters", "2",
                 "--cadence", "1", "--eval-points", "20", "--batch-interior", "8",
                 "--batch-boundary", "8", "--width", "2", "--depth", "1"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "biharmonic" / "summary.csv")))
    assert len(rows) == 15 and all(r["status"] == "ok" for r in rows)
    assert all(r["err_grad_lap_u"] for r in rows)
