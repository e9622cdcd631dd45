"""Command-line driver: ``lattice-spectra <subcommand> --config PATH``.

All numerical work happens before any file is opened, so a failing run
leaves the output directory untouched.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capacitance import (
    MAX_DENSE,
    apply_defect,
    capacitance_of,
    finite_capacitance,
    realspace_coeffs,
    required_m_max,
    truncated_toeplitz,
)
from .config import DEFECT_KINDS, RunConfig, parse_config
from .errors import LatticeSpectraError, Unsupported
from .floquet import discrete_bands, fine_grid_size, fold_alpha, mode_profiles
from .geometry import (
    block_index,
    brillouin_grid,
    brillouin_path,
    default_path,
    generator,
    high_symmetry_points,
    index_set,
    periodic_structure,
)
from .spectra import (
    band_at,
    band_structure,
    common_edges,
    dos_histogram,
    dos_l1_error,
    dos_reference,
    finite_frequencies,
    frobenius_gap,
    pointwise_gap,
)

log = logging.getLogger("lattice_spectra")

SUBCOMMANDS = ("bands", "dos", "converge", "defect", "floquet")
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
AXES = ("x", "y")


class Table:
    """Header plus rows, rendered to CSV text on demand."""

    def __init__(self, header: list[str]):
        self.header = header
        self.rows: list[list] = []

    def add(self, row) -> None:
        self.rows.append(list(row))

    def render(self, cfg: RunConfig) -> str:
        buf = io.StringIO()
        buf.write(f"# lattice-spectra {__version__}\n")
        buf.write(f"# config-sha256 {cfg.digest()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def _alpha_cols(d: int) -> list[str]:
    return [f"alpha_{AXES[k]}" for k in range(d)]


def _band_grid_n(cfg: RunConfig, d: int) -> int:
    return cfg.numerics.grid or (256 if d == 1 else 48)


def _dos_grid_n(cfg: RunConfig, d: int) -> int:
    return cfg.numerics.dos_grid or (2 ** 14 if d == 1 else 96)


def _alpha_point(cfg: RunConfig, lattice) -> np.ndarray:
    f = np.array(cfg.numerics.alpha, dtype=float)
    if len(f) == 1:
        f = np.repeat(f, lattice.d)
    if len(f) != lattice.d:
        raise Unsupported(f"alpha has {len(f)} components for a {lattice.d}D lattice", where="cli.run")
    return f @ lattice.dual_vectors


def _finite_structure(cfg: RunConfig, lattice, cell, defect):
    """Finite system used by bands/defect/floquet, with its (possibly
    defected) capacitance and the map back to physical eigenvectors."""
    if defect is not None:
        s = defect.structure
        C = capacitance_of(s).matrix
        scale = np.ones(s.M)
        if defect.site is not None:
            C = apply_defect(C, defect.site, defect.factor)
            scale[defect.site] = math.sqrt(defect.factor)
        return s, C, scale
    if cfg.numerics.finite_r is not None:
        index = index_set(lattice, cfg.numerics.finite_r)
    else:
        index = block_index(lattice, cfg.numerics.finite_cells or (50 if lattice.d == 1 else 8))
    s = periodic_structure(lattice, cell, index)
    return s, capacitance_of(s).matrix, None


def _spectrum_and_modes(cfg, lattice, cell, defect, workers):
    s, C, scale = _finite_structure(cfg, lattice, cell, defect)
    spectrum = finite_frequencies(C)
    physical = None if scale is None else scale[:, None] * spectrum.vectors
    n = fine_grid_size(s.index, cfg.numerics.oversampling)
    assign = discrete_bands(spectrum, s, n, cfg.numerics.ipr_threshold, physical, workers)
    return s, spectrum, physical, assign


def _discrete_table(lattice, assign) -> Table:
    t = Table(["j", "omega"] + _alpha_cols(lattice.d) + ["peak_ratio", "ipr", "localized"])
    for a in assign:
        al = fold_alpha(lattice, a.alpha)
        comps = [None] * lattice.d if al is None else [float(v) for v in al[: lattice.d]]
        t.add([a.j + 1, a.omega] + comps + [a.peak_ratio, a.ipr, a.localized])
    return t


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_bands(cfg: RunConfig, workers: int) -> dict[str, Table]:
    lattice, cell, defect = generator(cfg.kind, **cfg.geometry)
    tol = cfg.numerics.tolerance
    d, N = lattice.d, cell.N
    omega_cols = [f"omega_{k + 1}" for k in range(N)]
    out = {}
    if d == 1:
        grid = brillouin_grid(lattice, _band_grid_n(cfg, d))
        bs = band_structure(lattice, cell, grid, tol, workers=workers)
        t = Table(_alpha_cols(d) + omega_cols)
        for a, w in zip(bs.alphas, bs.omegas):
            t.add([a[0]] + list(w))
        out["bands.csv"] = t
    else:
        # 2D: the figure data is the high-symmetry path, which hits K exactly
        n_leg = max(_band_grid_n(cfg, d) // 2, 2)
        labels = default_path(lattice)
        # Gamma itself is excluded: the quasi-periodic sums are singular there
        alphas, arc, ticks = brillouin_path(lattice, labels, n_leg)
        log.info("bands: %d path samples", len(alphas))
        bs = band_structure(lattice, cell, alphas, tol, workers=workers)
        t = Table(["arclength"] + _alpha_cols(d) + omega_cols)
        for s, a, w in zip(arc, bs.alphas, bs.omegas):
            t.add([s, a[0], a[1]] + list(w))
        out["bands.csv"] = t
        pts = high_symmetry_points(lattice)
        tk = Table(["label", "arclength"] + _alpha_cols(d))
        for s, lab in ticks:
            tk.add([lab, s, pts[lab][0], pts[lab][1]])
        out["bands_ticks.csv"] = tk
    _, _, _, assign = _spectrum_and_modes(cfg, lattice, cell, defect, workers)
    out["discrete_bands.csv"] = _discrete_table(lattice, assign)
    return out


def _dos_reference_bands(cfg, lattice, cell, workers):
    grid = brillouin_grid(lattice, _dos_grid_n(cfg, lattice.d))
    log.info("dos: reference on %d band samples", len(grid.alphas))
    return band_structure(lattice, cell, grid, cfg.numerics.tolerance, workers=workers)


def cmd_dos(cfg: RunConfig, workers: int) -> dict[str, Table]:
    lattice, cell, defect = generator(cfg.kind, **cfg.geometry)
    if defect is not None:
        raise Unsupported(f"dos needs a periodic geometry, got {cfg.kind}", where="cli.run")
    ref_bands = _dos_reference_bands(cfg, lattice, cell, workers)
    spectra = []
    for size in cfg.numerics.sizes:
        if lattice.d == 1:
            shape = max(size // cell.N, 1)
        else:
            shape = max(int(round(math.sqrt(size / cell.N))), 1)
        s = periodic_structure(lattice, cell, block_index(lattice, shape))
        spectra.append(finite_frequencies(capacitance_of(s).matrix))
    edges = common_edges(cfg.numerics.bins, ref_bands.omegas, *[sp.frequencies for sp in spectra])
    ref = dos_reference(ref_bands, edges=edges)
    out = {}
    conv = Table(["r", "M", "frobenius_gap", "dos_l1", "pointwise_gap"])
    for sp in spectra:
        h = dos_histogram(sp, edges=edges)
        t = Table(["bin_center", "density_finite", "density_reference"])
        for c, a, b in zip(h.centers, h.density, ref.density):
            t.add([c, a, b])
        out[f"dos_{sp.M}.csv"] = t
        conv.add([None, sp.M, None, dos_l1_error(h, ref), None])
    out["converge.csv"] = conv
    return out


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 1).bit_length()


def cmd_converge(cfg: RunConfig, workers: int) -> dict[str, Table]:
    lattice, cell, defect = generator(cfg.kind, **cfg.geometry)
    if defect is not None:
        raise Unsupported(f"converge needs a periodic geometry, got {cfg.kind}", where="cli.run")
    num = cfg.numerics
    tol = num.tolerance
    if num.band > cell.N:
        raise Unsupported(f"band {num.band} but only {cell.N} bands", where="cli.run")
    indices = [index_set(lattice, r) for r in num.r_list]
    biggest = indices[-1].count * cell.N
    if biggest > MAX_DENSE:
        raise Unsupported(f"r = {num.r_list[-1]} gives {biggest} resonators, above the dense limit {MAX_DENSE}",
                          where="cli.run")
    m_max = max(required_m_max(ix) for ix in indices)
    n_quad = num.n_quad or (256 if lattice.d == 1 else 64)
    n_quad = max(n_quad, _next_pow2(2 * m_max + 2))
    log.info("converge: m_max = %d, n_quad = %d", m_max, n_quad)
    coeffs = realspace_coeffs(lattice, cell, max(m_max, 1), n_quad, tol, workers)
    ref_bands = _dos_reference_bands(cfg, lattice, cell, workers)
    alpha = _alpha_point(cfg, lattice)
    w_hat, vecs = band_at(lattice, cell, alpha, tol)
    k = num.band - 1
    rows = []
    for r, ix in zip(num.r_list, indices):
        Cf = finite_capacitance(lattice, cell, ix)
        Ct = truncated_toeplitz(coeffs, ix)
        spectrum = finite_frequencies(Cf.matrix)
        edges = common_edges(num.bins, ref_bands.omegas, spectrum.frequencies)
        l1 = dos_l1_error(dos_histogram(spectrum, edges=edges), dos_reference(ref_bands, edges=edges))
        gap, _ = pointwise_gap(w_hat[k], vecs[:, k], alpha, ix, spectrum, num.eps * w_hat[k] ** 2)
        rows.append([r, spectrum.M, frobenius_gap(Cf.matrix, Ct.matrix), l1, gap])
    t = Table(["r", "M", "frobenius_gap", "dos_l1", "pointwise_gap"])
    for row in rows:
        t.add(row)
    return {"converge.csv": t}


def cmd_defect(cfg: RunConfig, workers: int) -> dict[str, Table]:
    if cfg.kind not in DEFECT_KINDS:
        raise Unsupported(f"defect needs one of {', '.join(DEFECT_KINDS)}, got {cfg.kind}", where="cli.run")
    lattice, cell, defect = generator(cfg.kind, **cfg.geometry)
    grid = brillouin_grid(lattice, _band_grid_n(cfg, lattice.d))
    bs = band_structure(lattice, cell, grid, cfg.numerics.tolerance, workers=workers)
    lo, hi = bs.omegas.min(axis=0), bs.omegas.max(axis=0)
    _, spectrum, _, assign = _spectrum_and_modes(cfg, lattice, cell, defect, workers)
    report = Table(["j", "omega", "ipr", "localized", "location"])
    for a in assign:
        loc = _location(a.omega, lo, hi)
        if a.localized or loc != "band":
            report.add([a.j + 1, a.omega, a.ipr, a.localized, loc])
    return {"discrete_bands.csv": _discrete_table(lattice, assign), "defect_report.csv": report}


def _location(w: float, lo: np.ndarray, hi: np.ndarray) -> str:
    if w < lo[0]:
        return "below"
    if w > hi[-1]:
        return "above"
    for k in range(len(lo)):
        if lo[k] <= w <= hi[k]:
            return "band"
        if k + 1 < len(lo) and hi[k] < w < lo[k + 1]:
            return f"gap_{k + 1}"
    return "band"


def cmd_floquet(cfg: RunConfig, workers: int) -> dict[str, Table]:
    lattice, cell, defect = generator(cfg.kind, **cfg.geometry)
    s, C, scale = _finite_structure(cfg, lattice, cell, defect)
    spectrum = finite_frequencies(C)
    modes = [j - 1 for j in cfg.run.modes]
    bad = [j + 1 for j in modes if j >= spectrum.M]
    if bad:
        raise Unsupported(f"modes {bad} exceed the {spectrum.M} available", where="cli.run")
    physical = None if scale is None else scale[:, None] * spectrum.vectors
    grid, norms = mode_profiles(spectrum, s, modes, fine_grid_size(s.index, cfg.numerics.oversampling), physical)
    t = Table(_alpha_cols(lattice.d) + [f"norm_{j + 1}" for j in modes])
    for k in range(len(grid.alphas)):
        t.add([float(v) for v in grid.alphas[k, : lattice.d]] + list(norms[:, k]))
    return {"floquet.csv": t}


COMMANDS = {
    "bands": cmd_bands,
    "dos": cmd_dos,
    "converge": cmd_converge,
    "defect": cmd_defect,
    "floquet": cmd_floquet,
}


# --------------------------------------------------------------------------
# entry points
# --------------------------------------------------------------------------

def run(subcommand: str, cfg: RunConfig, out_dir: str | Path | None = None, workers: int = 1) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        tables = COMMANDS[subcommand](cfg, max(int(workers), 1))
    except LatticeSpectraError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        log.error("cli.run: %s", exc)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        log.error("cli.run: %s", exc)
        return 2
    texts = {name: t.render(cfg) for name, t in tables.items()}
    texts["effective_config.ini"] = (f"# lattice-spectra {__version__}\n# config-sha256 {cfg.digest()}\n"
                                     + cfg.effective_text())
    out = Path(out_dir if out_dir is not None else cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in texts.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", out / name)
    return 0


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("LATTICE_SPECTRA_LOG", "warn").strip().lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lattice-spectra",
                                description="Band structures and finite-lattice spectra of resonator arrays.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="path to the run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides [run] out)")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: available CPUs)")
    p.add_argument("--deterministic", action="store_true", help="force a single worker")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        log.error("cli.parse_config: cannot read %s: %s", args.config, exc)
        return 1
    try:
        cfg = parse_config(text)
    except LatticeSpectraError as exc:
        log.error("%s", exc)
        return exc.exit_code
    if args.deterministic:
        workers = 1
    elif args.workers is not None:
        if args.workers < 1:
            log.error("cli.main: --workers must be >= 1")
            return 1
        workers = args.workers
    else:
        workers = cfg.run.workers or os.cpu_count() or 1
    return run(args.subcommand, cfg, args.out, workers)


if __name__ == "__main__":
    sys.exit(main())
