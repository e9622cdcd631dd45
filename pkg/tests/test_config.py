import pytest

from lattice_spectra.config import RunConfig, parse_config
from lattice_spectra.errors import ParseError, ValidationError


def test_minimal_monomer_defaults():
    cfg = parse_config("[geometry]\nkind = monomer_chain\n")
    assert cfg.kind == "monomer_chain"
    assert cfg.geometry == {"radius": 0.1, "lattice_constant": 1.0}
    assert cfg.numerics.tolerance == 1e-10
    assert cfg.numerics.bins == 20
    assert cfg.run.modes == (10, 20, 30)


def test_r_list_sorted_ascending():
    cfg = parse_config("[geometry]\nkind = monomer_chain\n[numerics]\nr_list = 40,10, 20\n")
    assert cfg.numerics.r_list == (10.0, 20.0, 40.0)


def test_comments_and_overrides():
    text = """
# leading comment
[geometry]
kind = ssh_dimer   # trailing comment
s1 = 0.35
[numerics]
grid = 64
alpha = 0.25, 0.1
finite_cells = auto
[run]
modes = 1, 2
workers = 3
out = results
"""
    cfg = parse_config(text)
    assert cfg.geometry["s1"] == 0.35 and cfg.geometry["s2"] == 0.6
    assert cfg.numerics.grid == 64
    assert cfg.numerics.alpha == (0.25, 0.1)
    assert cfg.numerics.finite_cells is None
    assert cfg.run.workers == 3 and cfg.run.out == "results"


def test_duplicate_key_reports_line():
    with pytest.raises(ParseError) as e:
        parse_config("[geometry]\nkind = monomer_chain\nradius = 0.1\nradius = 0.2\n")
    assert e.value.line == 4
    assert e.value.exit_code == 1


def test_duplicate_section():
    with pytest.raises(ParseError):
        parse_config("[geometry]\nkind = monomer_chain\n[geometry]\nradius = 0.1\n")


def test_missing_header_and_garbage_line():
    with pytest.raises(ParseError) as e:
        parse_config("kind = monomer_chain\n")
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        parse_config("[geometry]\nkind = monomer_chain\nthis line is not a pair\n")
    assert e.value.line == 3


@pytest.mark.parametrize(
    "text,key",
    [
        ("[geometry]\nkind = monomer_chain\ncolour = red\n", "colour"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nspeed = 2\n", "speed"),
        ("[geometry]\nkind = monomer_chain\n[run]\nplot = yes\n", "plot"),
        ("[geometry]\nkind = monomer_chain\n[extra]\nx = 1\n", "extra"),
        ("[geometry]\nkind = kagome\n", "kind"),
        ("[numerics]\nbins = 3\n", "geometry"),
        ("[geometry]\nradius = 0.1\n", "kind"),
        ("[geometry]\nkind = monomer_chain\nradius = -1\n", "radius"),
        ("[geometry]\nkind = monomer_chain\nradius = nan\n", "radius"),
        ("[geometry]\nkind = point_defect_chain\ncells = 2.5\n", "cells"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\ngrid = 33\n", "grid"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nbins = 0\n", "bins"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nr_list = 10, -2\n", "r_list"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nr_list =\n", "r_list"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\ntolerance = 1\n", "tolerance"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nalpha = 0.7\n", "alpha"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nalpha = 0.1,0.1,0.1\n", "alpha"),
        ("[geometry]\nkind = monomer_chain\n[numerics]\nipr_threshold = 0\n", "ipr_threshold"),
        ("[geometry]\nkind = monomer_chain\n[run]\nmodes = 0\n", "modes"),
        ("[geometry]\nkind = monomer_chain\n[run]\nworkers = 0\n", "workers"),
    ],
)
def test_validation_names_the_key(text, key):
    with pytest.raises(ValidationError) as e:
        parse_config(text)
    assert e.value.key == key
    assert key in str(e.value)


def test_hash_ignores_out_and_workers():
    a = parse_config("[geometry]\nkind = monomer_chain\n[run]\nout = a\nworkers = 1\n")
    b = parse_config("[geometry]\nkind = monomer_chain\n[run]\nout = b\nworkers = 8\n")
    c = parse_config("[geometry]\nkind = monomer_chain\nradius = 0.05\n")
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 64


def test_effective_text_round_trips():
    cfg = parse_config("[geometry]\nkind = honeycomb\n[numerics]\nr_list = 3, 5\nfinite_r = 4\n")
    again = parse_config(cfg.effective_text())
    assert isinstance(again, RunConfig)
    assert again.effective_text() == cfg.effective_text()
    assert again.digest() == cfg.digest()
