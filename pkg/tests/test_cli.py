import csv
import subprocess
import sys

import numpy as np
import pytest

from lattice_spectra import cli
from lattice_spectra.errors import NoConvergence


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# lattice-spectra ")
    assert lines[1].startswith("# config-sha256 ")
    rows = list(csv.reader(lines[2:]))
    return rows[0], rows[1:]


MONO = "[geometry]\nkind = monomer_chain\n[numerics]\nr_list = 10, 20, 40\nsizes = 40, 80\ndos_grid = 2048\n"


def test_converge_monomer(tmp_path):
    cfg = _write(tmp_path, MONO)
    out = tmp_path / "out"
    assert cli.main(["converge", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    header, rows = _read(out / "converge.csv")
    assert header == ["r", "M", "frobenius_gap", "dos_l1", "pointwise_gap"]
    assert len(rows) == 3
    gaps = [float(r[2]) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]
    assert [int(r[1]) for r in rows] == [19, 39, 79]
    assert (out / "effective_config.ini").exists()


def test_bands_honeycomb_meets_at_k(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = honeycomb\n[numerics]\ngrid = 16\nfinite_cells = 4\n")
    out = tmp_path / "out"
    assert cli.main(["bands", "--config", cfg, "--out", str(out), "--deterministic"]) == 0
    header, rows = _read(out / "bands.csv")
    assert header == ["arclength", "alpha_x", "alpha_y", "omega_1", "omega_2"]
    _, ticks = _read(out / "bands_ticks.csv")
    k = [t for t in ticks if t[0] == "K"][0]
    at_k = [r for r in rows if r[1] == k[2] and r[2] == k[3]]
    assert len(at_k) == 1
    w1, w2 = float(at_k[0][3]), float(at_k[0][4])
    assert abs(w1 - w2) / w1 < 1e-3
    header, rows = _read(out / "discrete_bands.csv")
    assert header == ["j", "omega", "alpha_x", "alpha_y", "peak_ratio", "ipr", "localized"]
    assert len(rows) == 32


def test_bands_chain_folded(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = ssh_dimer\n[numerics]\ngrid = 32\nfinite_cells = 10\n")
    out = tmp_path / "out"
    assert cli.main(["bands", "--config", cfg, "--out", str(out), "--workers", "2"]) == 0
    header, rows = _read(out / "bands.csv")
    assert header == ["alpha_x", "omega_1", "omega_2"] and len(rows) == 32
    _, rows = _read(out / "discrete_bands.csv")
    assert all(float(r[2]) >= 0 for r in rows if r[2])


def test_dos_outputs(tmp_path):
    cfg = _write(tmp_path, MONO)
    out = tmp_path / "out"
    assert cli.main(["dos", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    for m in (40, 80):
        header, rows = _read(out / f"dos_{m}.csv")
        assert header == ["bin_center", "density_finite", "density_reference"]
        assert len(rows) == 20
        width = float(rows[1][0]) - float(rows[0][0])
        assert sum(float(r[1]) for r in rows) * width == pytest.approx(1.0)
    _, rows = _read(out / "converge.csv")
    assert [r[1] for r in rows] == ["40", "80"] and all(r[3] for r in rows)


def test_defect_outputs(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = ssh_interface_chain\n")
    out = tmp_path / "out"
    assert cli.main(["defect", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    header, rows = _read(out / "defect_report.csv")
    assert header == ["j", "omega", "ipr", "localized", "location"]
    assert [(r[3], r[4]) for r in rows] == [("true", "gap_1")]
    _, rows = _read(out / "discrete_bands.csv")
    loc = [r for r in rows if r[-1] == "true"]
    assert len(loc) == 1 and loc[0][2] == ""


def test_floquet_outputs(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = monomer_chain\n[numerics]\nfinite_cells = 20\n[run]\nmodes = 1, 10\n")
    out = tmp_path / "out"
    assert cli.main(["floquet", "--config", cfg, "--out", str(out)]) == 0
    header, rows = _read(out / "floquet.csv")
    assert header == ["alpha_x", "norm_1", "norm_10"]
    assert len(rows) == 80
    a = np.array([float(r[0]) for r in rows])
    assert np.all(np.diff(a) > 0)


def test_invalid_geometry_exits_1_without_outputs(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = monomer_chain\nradius = 0.7\n")
    out = tmp_path / "out"
    assert cli.main(["bands", "--config", cfg, "--out", str(out)]) == 1
    assert not out.exists()


@pytest.mark.parametrize("text", ["[geometry]\nkind = nope\n", "kind = x\n", "[geometry]\nkind = monomer_chain\nkind = ssh_dimer\n"])
def test_bad_config_exits_1(tmp_path, text):
    cfg = _write(tmp_path, text)
    out = tmp_path / "out"
    assert cli.main(["bands", "--config", cfg, "--out", str(out)]) == 1
    assert not out.exists()


def test_defect_requires_defect_geometry(tmp_path):
    cfg = _write(tmp_path, MONO)
    assert cli.main(["defect", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_missing_config_and_bad_workers(tmp_path):
    assert cli.main(["bands", "--config", str(tmp_path / "missing.ini")]) == 1
    cfg = _write(tmp_path, MONO)
    assert cli.main(["bands", "--config", cfg, "--workers", "0", "--out", str(tmp_path / "o")]) == 1


def test_dense_limit_exits_1(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = honeycomb\n[numerics]\nr_list = 5, 60\n")
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_numerical_failure_exits_2(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NoConvergence("forced", where="spectra.eig_sym")

    monkeypatch.setattr(cli, "finite_frequencies", boom)
    cfg = _write(tmp_path, MONO)
    out = tmp_path / "out"
    assert cli.main(["converge", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_error_names_module_and_operation(tmp_path, caplog):
    cfg = _write(tmp_path, "[geometry]\nkind = monomer_chain\nradius = 0.7\n")
    cli.main(["bands", "--config", cfg, "--out", str(tmp_path / "o")])
    assert "geometry.make_cell" in caplog.text


def test_out_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = _write(tmp_path, "[geometry]\nkind = monomer_chain\n[numerics]\nfinite_cells = 8\n[run]\nout = here\nmodes = 1\n")
    assert cli.main(["floquet", "--config", cfg]) == 0
    assert (tmp_path / "here" / "floquet.csv").exists()


@pytest.mark.parametrize("sub", ["bands", "dos", "converge", "floquet"])
def test_determinism_across_workers(tmp_path, sub):
    cfg = _write(tmp_path, "[geometry]\nkind = square_dimer\n[numerics]\ngrid = 8\ndos_grid = 24\nbins = 8\n"
                           "sizes = 18, 32\nr_list = 2, 3\nfinite_cells = 3\nn_quad = 16\n[run]\nmodes = 1, 2\n")
    outs = []
    for w in ("1", "8"):
        out = tmp_path / f"w{w}"
        assert cli.main([sub, "--config", cfg, "--out", str(out), "--workers", w]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]


def test_console_script_runs(tmp_path):
    cfg = _write(tmp_path, "[geometry]\nkind = monomer_chain\n[numerics]\nfinite_cells = 6\n[run]\nmodes = 1\n")
    r = subprocess.run([sys.executable, "-m", "lattice_spectra.cli", "floquet", "--config", cfg, "--out",
                        str(tmp_path / "o")], capture_output=True, text=True, env={"LATTICE_SPECTRA_LOG": "info",
                                                                                   "PATH": ""})
    assert r.returncode == 0
    assert "wrote" in r.stderr
    r = subprocess.run([sys.executable, "-m", "lattice_spectra.cli", "nonsense", "--config", cfg],
                       capture_output=True, text=True)
    assert r.returncode == 2  # argparse usage error
