"""Eigensolvers, band structures, densities of states and the convergence
diagnostics that compare finite and infinite lattices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .capacitance import quasi_capacitance_many
from .errors import (
    BandEdge,
    BinMismatch,
    EmptySpectrum,
    NoConvergence,
    NotSymmetric,
    NumericalError,
    ResolutionError,
    SizeMismatch,
    Unsupported,
)
from .geometry import BrillouinGrid, FiniteLatticeIndex, LatticeSpec, ResonatorCell
from .lattice_sums import DEFAULT_TOL

CLIP = 1e-12


# --------------------------------------------------------------------------
# eigensolvers
# --------------------------------------------------------------------------

def eig_sym(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric or
    Hermitian matrix."""
    A = np.asarray(matrix)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric("matrix is not square", where="spectra.eig_sym")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.conj().T).max() > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric/Hermitian", where="spectra.eig_sym")
    try:
        return np.linalg.eigh(0.5 * (A + A.conj().T))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc), where="spectra.eig_sym") from exc


def _sqrt_clipped(lam: np.ndarray, norm: float, where: str) -> np.ndarray:
    floor = -CLIP * norm
    if np.any(lam < floor):
        raise NumericalError(f"negative eigenvalue {lam.min():.3e}", where=where)
    return np.sqrt(np.clip(lam, 0.0, None))


@dataclass(frozen=True)
class FiniteSpectrum:
    eigenvalues: np.ndarray   # ascending
    frequencies: np.ndarray   # sqrt(eigenvalues)
    vectors: np.ndarray       # columns are eigenvectors

    @property
    def M(self) -> int:
        return len(self.eigenvalues)


def finite_frequencies(matrix) -> FiniteSpectrum:
    lam, V = eig_sym(matrix)
    norm = max(abs(lam[0]), abs(lam[-1]))
    return FiniteSpectrum(eigenvalues=lam, frequencies=_sqrt_clipped(lam, norm, "spectra.finite_frequencies"), vectors=V)


# --------------------------------------------------------------------------
# band structures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BandStructure:
    lattice: LatticeSpec
    cell: ResonatorCell
    alphas: np.ndarray             # (K, 3)
    omegas: np.ndarray             # (K, N) ascending per row
    weights: np.ndarray | None = None
    vectors: np.ndarray | None = None  # (K, N, N), columns per band
    grid: BrillouinGrid | None = None
    tol: float = DEFAULT_TOL

    @property
    def N(self) -> int:
        return self.omegas.shape[1]


def band_structure(lattice: LatticeSpec, cell: ResonatorCell, grid, tol: float = DEFAULT_TOL,
                   with_vectors: bool = False, workers: int = 1) -> BandStructure:
    """Band functions sqrt(eig C^alpha) on a grid (or any array of alphas)."""
    if isinstance(grid, BrillouinGrid):
        alphas, weights, g = grid.alphas, grid.weights, grid
    else:
        alphas, weights, g = np.atleast_2d(np.asarray(grid, dtype=float)), None, None
    Ch = quasi_capacitance_many(lattice, cell, alphas, tol, workers)
    lam, V = np.linalg.eigh(Ch)
    norm = float(np.abs(lam).max())
    omegas = _sqrt_clipped(lam, norm, "spectra.band_structure")
    return BandStructure(lattice, cell, np.asarray(alphas), omegas, weights,
                         V if with_vectors else None, g, tol)


def band_at(lattice: LatticeSpec, cell: ResonatorCell, alpha, tol: float = DEFAULT_TOL):
    """``(omegas, vectors)`` at a single alpha."""
    b = band_structure(lattice, cell, np.atleast_2d(alpha), tol, with_vectors=True)
    return b.omegas[0], b.vectors[0]


# --------------------------------------------------------------------------
# densities of states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DOSHistogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def area(self) -> float:
        return float(np.sum(self.density * self.widths))


def common_edges(bins: int, *frequency_sets) -> np.ndarray:
    """Equal-width edges on [0, omega_max] covering every given frequency."""
    top = max(float(np.max(f)) for f in frequency_sets)
    return np.linspace(0.0, top * (1 + 1e-9) if top > 0 else 1.0, int(bins) + 1)


def _histogram(values, edges, weights=None) -> DOSHistogram:
    counts, _ = np.histogram(values, bins=edges, weights=weights)
    total = counts.sum()
    if total <= 0:
        raise EmptySpectrum("no mass inside the bin edges", where="spectra.dos_histogram")
    return DOSHistogram(edges=np.asarray(edges, dtype=float), density=counts / (total * np.diff(edges)))


def dos_histogram(spectrum, bins: int | None = None, edges=None) -> DOSHistogram:
    """Unit-area histogram of finite frequencies (default ceil(sqrt(M)) bins)."""
    freqs = spectrum.frequencies if isinstance(spectrum, FiniteSpectrum) else np.asarray(spectrum, dtype=float)
    if freqs.size == 0:
        raise EmptySpectrum("spectrum is empty", where="spectra.dos_histogram")
    if edges is None:
        if bins is None:
            bins = int(math.ceil(math.sqrt(freqs.size)))
        if bins < 1:
            raise ValueError("bins must be >= 1")
        edges = common_edges(bins, freqs)
    return _histogram(freqs, edges)


def dos_reference(bands: BandStructure, bins: int | None = None, edges=None) -> DOSHistogram:
    """Push-forward of the uniform measure on the grid through the band functions."""
    if edges is None:
        if bins is None:
            raise ValueError("give bins or edges")
        edges = common_edges(bins, bands.omegas)
    nbins = len(edges) - 1
    if len(bands.alphas) < 8 * nbins:
        raise ResolutionError(f"{len(bands.alphas)} samples for {nbins} bins; need >= 8 per bin",
                              where="spectra.dos_reference")
    w = np.ones(len(bands.alphas)) if bands.weights is None else bands.weights
    weights = np.repeat(w, bands.N)
    return _histogram(bands.omegas.ravel(), edges, weights)


def _band_fn(bands: BandStructure):
    lat, cell, tol = bands.lattice, bands.cell, bands.tol

    def omega(a: float) -> float:
        Ch = quasi_capacitance_many(lat, cell, np.array([[a, 0.0, 0.0]]), tol)
        return math.sqrt(max(float(np.linalg.eigvalsh(Ch[0])[0]), 0.0))

    return omega


def dos_1d_analytic(bands: BandStructure, omegas, h: float = 1e-5) -> np.ndarray:
    """D(omega) = (1/|Y*|) sum over preimages of 1/|band'(alpha)| for a chain
    with one resonator per cell.  Raises BandEdge when a preimage sits where
    the band is flat."""
    where = "spectra.dos_1d_analytic"
    if bands.lattice.d != 1 or bands.N != 1:
        raise Unsupported("dos_1d_analytic needs d = 1 and N = 1", where=where)
    omega = _band_fn(bands)
    order = np.argsort(bands.alphas[:, 0])
    a = bands.alphas[order, 0]
    w = bands.omegas[order, 0]
    zone = bands.lattice.zone_measure
    out = []
    for target in np.atleast_1d(omegas):
        total = 0.0
        found = False
        for k in range(len(a) - 1):
            f0, f1 = w[k] - target, w[k + 1] - target
            if f0 == 0.0 or f0 * f1 < 0:
                root = a[k] if f0 == 0.0 else brentq(lambda x: omega(x) - target, a[k], a[k + 1], xtol=1e-14)
                slope = (omega(root + h) - omega(root - h)) / (2 * h)
                if abs(slope) < 1e-8:
                    raise BandEdge(f"flat band at alpha = {root:.6g}", where=where)
                total += 1.0 / abs(slope)
                found = True
        if not found:
            raise BandEdge(f"omega = {target:.6g} is outside the sampled band", where=where)
        out.append(total / zone)
    return np.array(out)


def dos_1d_bin_average(bands: BandStructure, edges, nodes: int = 8) -> np.ndarray:
    """Bin averages of ``dos_1d_analytic`` by Gauss-Legendre quadrature."""
    x, wq = np.polynomial.legendre.leggauss(nodes)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        pts = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        out.append(0.5 * np.sum(wq * dos_1d_analytic(bands, pts)))
    return np.array(out)


def dos_l1_error(hist: DOSHistogram, ref: DOSHistogram) -> float:
    if hist.edges.shape != ref.edges.shape or not np.array_equal(hist.edges, ref.edges):
        raise BinMismatch("histograms have different bin edges", where="spectra.dos_l1_error")
    return float(np.sum(np.abs(hist.density - ref.density) * hist.widths))


# --------------------------------------------------------------------------
# finite vs infinite diagnostics
# --------------------------------------------------------------------------

def frobenius_gap(A, B) -> float:
    """Normalised Frobenius norm |A - B| with |X|^2 = (1/n) sum |x_ij|^2."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise SizeMismatch(f"{A.shape} vs {B.shape}", where="spectra.frobenius_gap")
    D = A - B
    return float(np.sqrt(np.sum(np.abs(D) ** 2) / A.shape[0]))


def bloch_extension(u, alpha, index: FiniteLatticeIndex) -> np.ndarray:
    """Normalised vector with blocks exp(-i alpha.m) u on the cells of ``index``.

    The sign matches the convention in which C^alpha = sum_m C^m exp(i alpha.m).
    """
    u = np.asarray(u, dtype=complex)
    a = np.zeros(3)
    v = np.atleast_1d(np.asarray(alpha, dtype=float)).ravel()
    a[: v.size] = v
    phase = np.exp(-1j * (index.points @ a))
    v = (phase[:, None] * u[None, :]).ravel()
    return v / np.linalg.norm(v)


def pointwise_gap(omega_hat: float, u, alpha, index: FiniteLatticeIndex, spectrum: FiniteSpectrum,
                  eps: float) -> tuple[float, float]:
    """``(min_i |omega_hat^2 - omega_i^2|, projection residual)``.

    The residual is the distance from the normalised Bloch extension of ``u``
    to the span of eigenvectors with ``|omega_i^2 - omega_hat^2| < eps``.
    """
    target = omega_hat ** 2
    gaps = np.abs(spectrum.eigenvalues - target)
    ut = bloch_extension(u, alpha, index)
    if ut.size != spectrum.M:
        raise SizeMismatch("Bloch extension and spectrum differ in size", where="spectra.pointwise_gap")
    sel = spectrum.vectors[:, gaps < eps]
    resid = ut - sel @ (sel.conj().T @ ut)
    return float(gaps.min()), float(min(np.linalg.norm(resid), 1.0))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])
