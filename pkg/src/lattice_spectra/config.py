"""Run configuration: ``[section]`` headers, ``key = value`` lines, ``#`` comments.

Example::

    [geometry]
    kind = ssh_dimer
    s1 = 0.4

    [numerics]
    r_list = 10, 20, 40
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields
from typing import Any

from .errors import ParseError, ValidationError

# geometry parameters accepted per kind, with defaults
GEOMETRY_KEYS: dict[str, dict[str, Any]] = {
    "monomer_chain": {"radius": 0.1, "lattice_constant": 1.0},
    "ssh_dimer": {"radius": 0.1, "s1": 0.4, "s2": 0.6},
    "square_dimer": {"radius": 0.1, "lattice_constant": 1.0, "separation": 0.4},
    "honeycomb": {"radius": 0.1, "lattice_constant": 1.0},
    "point_defect_chain": {"radius": 0.1, "lattice_constant": 1.0, "cells": 51, "defect_site": 26,
                           "defect_factor": 2.0},
    "ssh_interface_chain": {"radius": 0.1, "s1": 0.4, "s2": 0.6, "sites": 101},
}
DEFECT_KINDS = ("point_defect_chain", "ssh_interface_chain")


@dataclass(frozen=True)
class Numerics:
    tolerance: float = 1e-10
    grid: int | None = None        # band grid per dual direction
    dos_grid: int | None = None    # grid for the reference DOS
    n_quad: int | None = None      # quadrature for real-space coefficients
    bins: int = 20
    r_list: tuple[float, ...] = (10.0, 20.0, 40.0)
    sizes: tuple[int, ...] = (100, 200, 400, 800)
    finite_cells: int | None = None
    finite_r: float | None = None
    alpha: tuple[float, ...] = (0.25,)  # fractions of the dual basis
    band: int = 1
    eps: float = 0.05                   # window relative to omega_hat^2
    ipr_threshold: float = 0.1
    oversampling: int = 4


@dataclass(frozen=True)
class RunOptions:
    modes: tuple[int, ...] = (10, 20, 30)
    out: str = "out"
    workers: int | None = None


@dataclass(frozen=True)
class RunConfig:
    kind: str
    geometry: dict[str, Any]
    numerics: Numerics = field(default_factory=Numerics)
    run: RunOptions = field(default_factory=RunOptions)

    def effective_text(self) -> str:
        """Canonical rendering of everything that affects results (the output
        location and worker count are excluded)."""
        buf = io.StringIO()
        buf.write("[geometry]\n")
        buf.write(f"kind = {self.kind}\n")
        for k in sorted(self.geometry):
            buf.write(f"{k} = {_fmt(self.geometry[k])}\n")
        buf.write("\n[numerics]\n")
        for f in fields(Numerics):
            buf.write(f"{f.name} = {_fmt(getattr(self.numerics, f.name))}\n")
        buf.write("\n[run]\n")
        buf.write(f"modes = {_fmt(self.run.modes)}\n")
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.effective_text().encode("utf-8")).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _float(key: str, raw: str, lo: float | None = None, hi: float | None = None, strict_lo: bool = False) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ValidationError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ValidationError(key, "must be finite")
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        raise ValidationError(key, f"must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and v > hi:
        raise ValidationError(key, f"must be <= {hi}")
    return v


def _int(key: str, raw: str, lo: int | None = None, even: bool = False) -> int:
    try:
        v = int(raw)
    except ValueError:
        raise ValidationError(key, f"expected an integer, got {raw!r}") from None
    if lo is not None and v < lo:
        raise ValidationError(key, f"must be >= {lo}")
    if even and v % 2:
        raise ValidationError(key, "must be even")
    return v


def _list(key: str, raw: str, conv) -> tuple:
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValidationError(key, "empty list")
    return tuple(conv(key, s) for s in items)


def _auto(raw: str) -> bool:
    return raw.strip().lower() == "auto"


def _parse_numerics(sec: dict[str, str]) -> Numerics:
    kw: dict[str, Any] = {}
    for key, raw in sec.items():
        if key == "tolerance":
            kw[key] = _float(key, raw, 1e-14, 1e-2)
        elif key in ("grid", "dos_grid", "n_quad"):
            kw[key] = None if _auto(raw) else _int(key, raw, 2, even=True)
        elif key == "bins":
            kw[key] = _int(key, raw, 1)
        elif key == "r_list":
            vals = _list(key, raw, lambda k, s: _float(k, s, 0.0, strict_lo=True))
            kw[key] = tuple(sorted(set(vals)))
        elif key == "sizes":
            kw[key] = tuple(sorted(set(_list(key, raw, lambda k, s: _int(k, s, 1)))))
        elif key == "finite_cells":
            kw[key] = None if _auto(raw) else _int(key, raw, 1)
        elif key == "finite_r":
            kw[key] = None if _auto(raw) else _float(key, raw, 0.0, strict_lo=True)
        elif key == "alpha":
            kw[key] = _list(key, raw, lambda k, s: _float(k, s, -0.5, 0.5))
            if len(kw[key]) > 2:
                raise ValidationError(key, "at most two components")
        elif key == "band":
            kw[key] = _int(key, raw, 1)
        elif key == "eps":
            kw[key] = _float(key, raw, 0.0, strict_lo=True)
        elif key == "ipr_threshold":
            kw[key] = _float(key, raw, 0.0, 1.0, strict_lo=True)
        elif key == "oversampling":
            kw[key] = _int(key, raw, 1)
        else:
            raise ValidationError(key, "unknown key in [numerics]")
    return Numerics(**kw)


def _parse_run(sec: dict[str, str]) -> RunOptions:
    kw: dict[str, Any] = {}
    for key, raw in sec.items():
        if key == "modes":
            kw[key] = _list(key, raw, lambda k, s: _int(k, s, 1))
        elif key == "out":
            if not raw:
                raise ValidationError(key, "empty path")
            kw[key] = raw
        elif key == "workers":
            kw[key] = None if _auto(raw) else _int(key, raw, 1)
        else:
            raise ValidationError(key, "unknown key in [run]")
    return RunOptions(**kw)


def _parse_geometry(sec: dict[str, str]) -> tuple[str, dict[str, Any]]:
    if "kind" not in sec:
        raise ValidationError("kind", "missing from [geometry]")
    kind = sec["kind"]
    if kind not in GEOMETRY_KEYS:
        raise ValidationError("kind", f"unknown geometry kind {kind!r}")
    allowed = GEOMETRY_KEYS[kind]
    params = dict(allowed)
    for key, raw in sec.items():
        if key == "kind":
            continue
        if key not in allowed:
            raise ValidationError(key, f"not a parameter of {kind}")
        if isinstance(allowed[key], int):
            params[key] = _int(key, raw, 1)
        else:
            params[key] = _float(key, raw, 0.0, strict_lo=True)
    return kind, params


def parse_config(text: str) -> RunConfig:
    """Parse and validate; defaults are filled in for everything omitted."""
    cp = configparser.ConfigParser(
        strict=True,
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        empty_lines_in_values=False,
        default_section="__no_defaults__",
    )
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        what = f"option {exc.option!r}" if isinstance(exc, configparser.DuplicateOptionError) else "section"
        raise ParseError(f"duplicate {what} in [{exc.section}]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line=line) from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    for s in sections:
        if s not in ("geometry", "numerics", "run"):
            raise ValidationError(s, "unknown section")
    if "geometry" not in sections:
        raise ValidationError("geometry", "missing [geometry] section")
    kind, params = _parse_geometry(sections["geometry"])
    return RunConfig(
        kind=kind,
        geometry=params,
        numerics=_parse_numerics(sections.get("numerics", {})),
        run=_parse_run(sections.get("run", {})),
    )
