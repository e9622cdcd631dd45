"""Truncated Floquet transform of finite eigenmodes and the discrete band
structure built from it."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SizeMismatch
from .geometry import BrillouinGrid, FiniteLatticeIndex, FiniteStructure, LatticeSpec, ResonatorCell, brillouin_grid
from .lattice_sums import DEFAULT_TOL
from .spectra import FiniteSpectrum, band_structure

IPR_THRESHOLD = 0.1
OVERSAMPLING = 4


@dataclass(frozen=True)
class ModeAssignment:
    j: int
    omega: float
    alpha: np.ndarray | None  # None when the mode is localized
    peak_alpha: np.ndarray    # argmax, kept even for localized modes
    peak_ratio: float
    ipr: float
    localized: bool


def _blocks(u, index: FiniteLatticeIndex, N: int | None) -> np.ndarray:
    u = np.asarray(u)
    if u.ndim == 2:
        if u.shape[0] != index.count:
            raise SizeMismatch(f"{u.shape[0]} blocks for {index.count} cells", where="floquet.truncated_floquet")
        return u
    if N is None:
        N = u.size // index.count
    if u.size != N * index.count:
        raise SizeMismatch(f"vector of length {u.size} for {index.count} cells x {N}", where="floquet.truncated_floquet")
    return u.reshape(index.count, N)


def truncated_floquet(u, index: FiniteLatticeIndex, alpha, N: int | None = None) -> np.ndarray:
    """sum_m u_m exp(i alpha.m) over the cells of ``index``.

    ``u`` is either flat (cell-major, length N * count) or already shaped
    (count, N).  ``alpha`` may be one point or an array of points; the result
    has shape (N,) or (K, N) accordingly.
    """
    b = _blocks(u, index, N)
    alpha = np.asarray(alpha, dtype=float)
    single = alpha.ndim == 1
    a = np.atleast_2d(alpha)
    if a.shape[1] < 3:
        a = np.hstack([a, np.zeros((len(a), 3 - a.shape[1]))])
    phase = np.exp(1j * (a @ index.points.T))
    out = phase @ b
    return out[0] if single else out


def floquet_norms(blocks: np.ndarray, index: FiniteLatticeIndex, n: int) -> np.ndarray:
    """||u_hat_alpha||_2^2 on the midpoint grid ``brillouin_grid(lattice, n)``,
    flattened in the grid's order.  Uses an FFT over the cell coordinates."""
    c = index.coords - index.coords.min(axis=0)
    d = c.shape[1]
    if np.any(c.max(axis=0) >= n):
        raise ValueError(f"grid of {n} points cannot resolve extent {c.max(axis=0) + 1}")
    N = blocks.shape[1]
    x = np.zeros((n,) * d + (N,), dtype=complex)
    # (k + 1/2)/n - 1/2 = k/n + (1/(2n) - 1/2)
    shift = np.exp(1j * math.pi * (c @ np.full(d, 1.0 / n - 1.0)))
    x[tuple(c.T)] = blocks * shift[:, None]
    F = np.fft.ifftn(x, axes=tuple(range(d))) * n ** d
    return np.sum(np.abs(F) ** 2, axis=-1).reshape(-1)


def ipr(blocks: np.ndarray) -> float:
    """Inverse participation ratio over cells."""
    w = np.sum(np.abs(blocks) ** 2, axis=1)
    return float(np.sum(w ** 2) / np.sum(w) ** 2)


def fine_grid_size(index: FiniteLatticeIndex, oversampling: int = OVERSAMPLING) -> int:
    n = int(oversampling * index.extent().max())
    return n + (n % 2)


def _pick_peak(norms: np.ndarray, grid: BrillouinGrid) -> int:
    top = norms.max()
    cand = np.flatnonzero(norms >= top * (1 - 1e-9))
    mag = np.linalg.norm(grid.alphas[cand], axis=1)
    cand = cand[mag <= mag.min() * (1 + 1e-12)]
    # remaining ties are +-alpha pairs: prefer the lexicographically largest fraction
    keys = [tuple(grid.fractions[k]) for k in cand]
    return int(cand[max(range(len(cand)), key=lambda t: keys[t])])


def assign_quasiperiodicity(u, structure: FiniteStructure, grid: BrillouinGrid | None = None, j: int = 0,
                            omega: float = float("nan"), threshold: float = IPR_THRESHOLD) -> ModeAssignment:
    """Quasi-periodicity of one finite mode: argmax of ||u_hat_alpha|| on a
    fine grid, ties broken toward small |alpha|."""
    if grid is None:
        grid = brillouin_grid(structure.lattice, fine_grid_size(structure.index))
    b = structure.blocks(np.asarray(u))
    norms = floquet_norms(b, structure.index, grid.n)
    k = _pick_peak(norms, grid)
    mode_ipr = ipr(b)
    localized = mode_ipr > threshold
    peak = grid.alphas[k]
    return ModeAssignment(
        j=j,
        omega=float(omega),
        alpha=None if localized else peak,
        peak_alpha=peak,
        peak_ratio=float(norms[k] / norms.mean()),
        ipr=mode_ipr,
        localized=bool(localized),
    )


def mode_profiles(spectrum: FiniteSpectrum, structure: FiniteStructure, modes, n: int | None = None,
                  physical=None) -> tuple[BrillouinGrid, np.ndarray]:
    """||u_hat_alpha||_2 on a grid for the requested mode numbers (0-based)."""
    if n is None:
        n = fine_grid_size(structure.index)
    grid = brillouin_grid(structure.lattice, n)
    V = spectrum.vectors if physical is None else physical
    out = np.array([np.sqrt(floquet_norms(structure.blocks(V[:, j]), structure.index, n)) for j in modes])
    return grid, out


def discrete_bands(spectrum: FiniteSpectrum, structure: FiniteStructure, n: int | None = None,
                   threshold: float = IPR_THRESHOLD, physical=None, workers: int = 1) -> list[ModeAssignment]:
    """One assignment per finite mode, ordered by frequency.

    ``physical`` optionally replaces the eigenvector columns (e.g. defect
    modes mapped back from a symmetrised problem).
    """
    if n is None:
        n = fine_grid_size(structure.index)
    grid = brillouin_grid(structure.lattice, n)
    V = spectrum.vectors if physical is None else physical

    def one(j):
        return assign_quasiperiodicity(V[:, j], structure, grid, j, spectrum.frequencies[j], threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, range(spectrum.M)))
    return [one(j) for j in range(spectrum.M)]


def compare_to_bands(assignments, lattice: LatticeSpec, cell: ResonatorCell, tol: float = DEFAULT_TOL):
    """For each non-localized mode: nearest band index, band value at the
    assigned alpha and relative deviation.  Localized modes get ``-1`` and NaN."""
    bulk = [a for a in assignments if a.alpha is not None]
    band_idx = np.full(len(assignments), -1)
    hat = np.full(len(assignments), np.nan)
    rel = np.full(len(assignments), np.nan)
    if not bulk:
        return band_idx, hat, rel
    bs = band_structure(lattice, cell, np.array([a.alpha for a in bulk]), tol)
    pos = {id(a): k for k, a in enumerate(bulk)}
    for t, a in enumerate(assignments):
        if a.alpha is None:
            continue
        row = bs.omegas[pos[id(a)]]
        k = int(np.argmin(np.abs(row - a.omega)))
        band_idx[t] = k
        hat[t] = row[k]
        rel[t] = abs(a.omega - row[k]) / row[k]
    return band_idx, hat, rel


def fold_alpha(lattice: LatticeSpec, alpha: np.ndarray) -> np.ndarray:
    """Chains are plotted on [0, pi/L] using the +-alpha symmetry."""
    if alpha is None or lattice.d != 1:
        return alpha
    out = np.array(alpha, dtype=float)
    out[0] = abs(out[0])
    return out
