"""Capacitance matrices in the point-potential (well separated spheres) model.

For spheres of radius R_i at centres x_i the potential-coefficient matrix is

    P_ii = 1 / (4 pi R_i),    P_ij = 1 / (4 pi |x_i - x_j|),

and the capacitance matrix is its inverse.  The same kernel summed over the
lattice with Bloch phases gives the quasi-periodic matrix, whose Fourier
coefficients over the Brillouin zone are the real-space blocks C^m.
"""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AlphaZero,
    CoverageError,
    IndexOutOfRange,
    NumericalError,
    QuadratureResidue,
    SingularPotential,
    Unsupported,
)
from .geometry import (
    TWO_PI,
    FiniteLatticeIndex,
    FiniteStructure,
    LatticeSpec,
    ResonatorCell,
    brillouin_grid,
    index_set,
    periodic_structure,
    require_sum_dimension,
)
from .lattice_sums import DEFAULT_TOL, FOUR_PI, direct_sum_1d_many, ewald_sum_2d

COND_LIMIT = 1e14
RESIDUE_LIMIT = 1e-8
MAX_DENSE = 6000  # dense eigensolves only


@dataclass(frozen=True)
class CapacitanceMatrix:
    """Dense real symmetric matrix with rows ordered (cell, slot)."""

    matrix: np.ndarray
    N: int
    index: FiniteLatticeIndex
    structure: FiniteStructure | None = None

    @property
    def M(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class QuasiCapacitance:
    alpha: np.ndarray
    matrix: np.ndarray  # (N, N) Hermitian


@dataclass(frozen=True)
class RealSpaceCoeffs:
    """Blocks C^m for integer coordinates |m_i| <= m_max, from an n_quad grid."""

    lattice: LatticeSpec
    m_max: int
    n_quad: int
    blocks: np.ndarray  # shape (2 m_max + 1,) * d + (N, N)

    @property
    def N(self) -> int:
        return self.blocks.shape[-1]

    def block(self, m: Sequence[int]) -> np.ndarray:
        m = tuple(int(v) for v in np.atleast_1d(m))
        if any(abs(v) > self.m_max for v in m):
            raise CoverageError(f"C^{m} outside |m_i| <= {self.m_max}", where="capacitance.RealSpaceCoeffs")
        return self.blocks[tuple(v + self.m_max for v in m)]

    def resum(self, alpha) -> np.ndarray:
        """sum_m C^m exp(i alpha . m) over the stored blocks."""
        alpha = np.asarray(alpha, dtype=float)
        d = self.lattice.d
        rng = np.arange(-self.m_max, self.m_max + 1)
        coords = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
        phase = np.exp(1j * (self.lattice.point(coords) @ alpha))
        flat = self.blocks.reshape(-1, self.N, self.N)
        return np.tensordot(phase, flat, axes=(0, 0))


@dataclass(frozen=True)
class GeneralizedScaling:
    """Per-resonator contrast, wave speed and volume."""

    contrast: np.ndarray
    speed: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        for name in ("contrast", "speed", "volume"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ValueError(f"{name} must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.contrast) * np.asarray(self.speed) ** 2 / np.asarray(self.volume)

    @classmethod
    def for_spheres(cls, radii, contrast=1.0, speed=1.0) -> "GeneralizedScaling":
        radii = np.asarray(radii, dtype=float)
        shape = radii.shape
        return cls(
            contrast=np.broadcast_to(np.asarray(contrast, dtype=float), shape).copy(),
            speed=np.broadcast_to(np.asarray(speed, dtype=float), shape).copy(),
            volume=4.0 / 3.0 * math.pi * radii ** 3,
        )

    @classmethod
    def unit(cls, M: int) -> "GeneralizedScaling":
        one = np.ones(M)
        return cls(one, one.copy(), one.copy())


# --------------------------------------------------------------------------
# finite structures
# --------------------------------------------------------------------------

def potential_matrix(centers, radii) -> np.ndarray:
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, radii)
    return 1.0 / (FOUR_PI * dist)


def _spd_inverse(P: np.ndarray, where: str) -> np.ndarray:
    """Inverse of a Hermitian positive definite potential matrix."""
    lam, V = np.linalg.eigh(P)
    if lam[0] <= 0 or lam[-1] / lam[0] > COND_LIMIT:
        raise SingularPotential(
            f"potential matrix not positive definite or ill-conditioned (eigenvalues {lam[0]:.3e}..{lam[-1]:.3e})",
            where=where,
        )
    C = (V / lam) @ V.conj().T
    return 0.5 * (C + C.conj().T)


def capacitance_of(structure: FiniteStructure) -> CapacitanceMatrix:
    """Capacitance matrix of an arbitrary finite structure (rows in structure order)."""
    if structure.M > MAX_DENSE:
        raise Unsupported(f"{structure.M} resonators exceeds the dense limit {MAX_DENSE}",
                          where="capacitance.finite_capacitance")
    structure.check_disjoint()
    P = potential_matrix(structure.centers, structure.radii)
    C = _spd_inverse(P, "capacitance.finite_capacitance")
    return CapacitanceMatrix(matrix=C, N=structure.N, index=structure.index, structure=structure)


def finite_capacitance(lattice: LatticeSpec, cell: ResonatorCell, index: FiniteLatticeIndex) -> CapacitanceMatrix:
    return capacitance_of(periodic_structure(lattice, cell, index))


def check_capacitance(C: np.ndarray) -> dict[str, bool]:
    """Report which structural invariants hold for a finite capacitance matrix."""
    C = np.asarray(C)
    scale = np.abs(C).max()
    off = C - np.diag(np.diag(C))
    return {
        "symmetric": bool(np.abs(C - C.T).max() <= 1e-12 * scale),
        "positive_definite": bool(np.linalg.eigvalsh(0.5 * (C + C.T))[0] > 0),
        "nonpositive_offdiagonal": bool(off.max() <= 1e-12 * scale),
        "positive_diagonal": bool(np.all(np.diag(C) > 0)),
    }


# --------------------------------------------------------------------------
# quasi-periodic matrices
# --------------------------------------------------------------------------

def _alpha3(alpha) -> np.ndarray:
    a = np.zeros(3)
    v = np.atleast_1d(np.asarray(alpha, dtype=float)).ravel()
    a[: v.size] = v
    return a


def quasi_potential_many(lattice: LatticeSpec, cell: ResonatorCell, alphas, tol: float = DEFAULT_TOL,
                         workers: int = 1) -> np.ndarray:
    """Potential symbols P^alpha for each row of ``alphas``; shape (K, N, N)."""
    where = "capacitance.quasi_capacitance"
    require_sum_dimension(lattice, where)
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    if alphas.shape[1] < 3:
        alphas = np.hstack([alphas, np.zeros((len(alphas), 3 - alphas.shape[1]))])
    frac = alphas @ lattice.vectors.T / TWO_PI
    if np.any(np.all(np.abs(frac - np.round(frac)) < 1e-14, axis=1)):
        raise AlphaZero("alpha is zero modulo the dual lattice", where=where)
    N = cell.N
    K = len(alphas)
    P = np.zeros((K, N, N), dtype=complex)
    pairs = [(i, j) for i in range(N) for j in range(i, N)]
    if lattice.d == 1:
        e = lattice.vectors[0] / np.linalg.norm(lattice.vectors[0])
        th = alphas @ e
        for i, j in pairs:
            P[:, i, j] = direct_sum_1d_many(cell.centers[i] - cell.centers[j], th, lattice, tol)
    else:
        def one(a):
            return [ewald_sum_2d(cell.centers[i] - cell.centers[j], a, lattice, tol).value for i, j in pairs]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                rows = list(ex.map(one, alphas))
        else:
            rows = [one(a) for a in alphas]
        rows = np.array(rows)
        for k, (i, j) in enumerate(pairs):
            P[:, i, j] = rows[:, k]
    for i, j in pairs:
        if i != j:
            P[:, j, i] = P[:, i, j].conj()
        else:
            P[:, i, i] = P[:, i, i].real
    P[:, np.arange(N), np.arange(N)] += 1.0 / (FOUR_PI * cell.radii)
    return P


def quasi_capacitance_many(lattice: LatticeSpec, cell: ResonatorCell, alphas, tol: float = DEFAULT_TOL,
                           workers: int = 1) -> np.ndarray:
    P = quasi_potential_many(lattice, cell, alphas, tol, workers)
    lam, V = np.linalg.eigh(P)
    if np.any(lam[:, 0] <= 0) or np.any(lam[:, -1] / lam[:, 0] > COND_LIMIT):
        raise SingularPotential("quasi-periodic potential matrix is singular", where="capacitance.quasi_capacitance")
    C = np.einsum("kij,kj,klj->kil", V, 1.0 / lam, V.conj())
    return 0.5 * (C + np.conj(np.swapaxes(C, 1, 2)))


def quasi_capacitance(lattice: LatticeSpec, cell: ResonatorCell, alpha, tol: float = DEFAULT_TOL) -> QuasiCapacitance:
    a = _alpha3(alpha)
    return QuasiCapacitance(alpha=a, matrix=quasi_capacitance_many(lattice, cell, a[None, :], tol)[0])


# --------------------------------------------------------------------------
# real-space coefficients and truncated Toeplitz matrices
# --------------------------------------------------------------------------

def realspace_coeffs(lattice: LatticeSpec, cell: ResonatorCell, m_max: int, n_quad: int | None = None,
                     tol: float = DEFAULT_TOL, workers: int = 1) -> RealSpaceCoeffs:
    """Midpoint-rule Fourier coefficients of the quasi-periodic capacitance."""
    where = "capacitance.realspace_coeffs"
    if n_quad is None:
        n_quad = 256 if lattice.d == 1 else 64
    if n_quad < 2 * m_max:
        raise ValueError(f"n_quad = {n_quad} cannot resolve m_max = {m_max}")
    if n_quad % 2:
        n_quad += 1
    grid = brillouin_grid(lattice, n_quad)
    Ch = quasi_capacitance_many(lattice, cell, grid.alphas, tol, workers)
    d, N = lattice.d, cell.N
    Ch = Ch.reshape((n_quad,) * d + (N, N))
    F = np.fft.fftn(Ch, axes=tuple(range(d))) / n_quad ** d
    rng = np.arange(-m_max, m_max + 1)
    # grid fraction (k + 1/2)/n - 1/2 contributes exp(-i pi m (1/n - 1)) per axis
    shift = np.exp(-1j * math.pi * rng * (1.0 / n_quad - 1.0))
    idx = np.ix_(*([rng % n_quad] * d))
    blocks = F[idx]
    for ax in range(d):
        shape = [1] * (d + 2)
        shape[ax] = len(rng)
        blocks = blocks * shift.reshape(shape)
    scale = np.abs(blocks.real).max()
    if np.abs(blocks.imag).max() > RESIDUE_LIMIT * scale:
        raise QuadratureResidue(f"imaginary residue {np.abs(blocks.imag).max():.2e}", where=where)
    return RealSpaceCoeffs(lattice=lattice, m_max=int(m_max), n_quad=int(n_quad), blocks=np.ascontiguousarray(blocks.real))


def required_m_max(index: FiniteLatticeIndex) -> int:
    c = index.coords
    return int((c.max(axis=0) - c.min(axis=0)).max())


def truncated_toeplitz(coeffs: RealSpaceCoeffs, index: FiniteLatticeIndex) -> CapacitanceMatrix:
    """Block (m, n) = C^{m - n}, same row order as the finite matrix."""
    need = required_m_max(index)
    if need > coeffs.m_max:
        raise CoverageError(f"need |m - n| up to {need}, have {coeffs.m_max}", where="capacitance.truncated_toeplitz")
    c = index.coords
    diff = c[:, None, :] - c[None, :, :] + coeffs.m_max
    B = coeffs.blocks[tuple(diff[..., k] for k in range(diff.shape[-1]))]  # (K, K, N, N)
    K, N = index.count, coeffs.N
    T = B.transpose(0, 2, 1, 3).reshape(K * N, K * N)
    return CapacitanceMatrix(matrix=T, N=N, index=index)


def theorem21_check(lattice: LatticeSpec, cell: ResonatorCell, m, n, r_list: Iterable[float],
                    n_quad: int | None = None, tol: float = DEFAULT_TOL) -> list[tuple[float, float]]:
    """Frobenius gaps ||C_f^{mn}(r) - C^{m-n}|| for each radius in ``r_list``."""
    m = np.atleast_1d(np.asarray(m, dtype=int))
    n = np.atleast_1d(np.asarray(n, dtype=int))
    k = int(np.abs(m - n).max())
    if n_quad is None:
        n_quad = 4096 if lattice.d == 1 else 64
    coeffs = realspace_coeffs(lattice, cell, max(k, 1), max(n_quad, 2 * k + 2), tol)
    target = coeffs.block(m - n)
    out = []
    for r in r_list:
        idx = index_set(lattice, r)
        pos = idx.position()
        try:
            a, b = pos[tuple(int(v) for v in m)], pos[tuple(int(v) for v in n)]
        except KeyError:
            raise CoverageError(f"m or n outside I_r for r = {r}", where="capacitance.theorem21_check") from None
        C = finite_capacitance(lattice, cell, idx).matrix
        N = cell.N
        blk = C[a * N:(a + 1) * N, b * N:(b + 1) * N]
        out.append((float(r), float(np.linalg.norm(blk - target))))
    return out


# --------------------------------------------------------------------------
# generalised scaling and defects
# --------------------------------------------------------------------------

def generalize(C: np.ndarray, scaling: GeneralizedScaling) -> np.ndarray:
    """Row scaling by contrast * speed^2 / volume (not symmetric in general)."""
    w = scaling.weights
    C = np.asarray(C)
    if len(w) != C.shape[0]:
        raise ValueError("scaling has the wrong length")
    return w[:, None] * C


def symmetrize_scaled(C: np.ndarray, weights) -> np.ndarray:
    """W^(1/2) C W^(1/2): symmetric and similar to W C."""
    s = np.sqrt(np.asarray(weights, dtype=float))
    return s[:, None] * np.asarray(C) * s[None, :]


def apply_defect(C: np.ndarray, site_index: int, factor: float) -> np.ndarray:
    """B^(1/2) C B^(1/2) with B = I except ``factor`` at ``site_index``."""
    C = np.asarray(C)
    if not 0 <= site_index < C.shape[0]:
        raise IndexOutOfRange(f"site {site_index} outside 0..{C.shape[0] - 1}", where="capacitance.apply_defect")
    if factor <= 0:
        raise ValueError("defect factor must be positive")
    w = np.ones(C.shape[0])
    w[site_index] = factor
    return symmetrize_scaled(C, w)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

MAGIC = b"CAPM"
FORMAT_VERSION = 1


def write_matrix_csv(C: np.ndarray, path: str | Path) -> None:
    C = np.asarray(C, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for i, j in np.ndindex(C.shape):
            w.writerow([i, j, repr(float(C[i, j]))])


def write_matrix_binary(C: np.ndarray, path: str | Path) -> None:
    """16-byte header (magic, version u32, M u32, reserved u32) then row-major
    little-endian float64."""
    C = np.asarray(C, dtype="<f8")
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("expected a square matrix")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", FORMAT_VERSION, C.shape[0], 0))
        fh.write(np.ascontiguousarray(C).tobytes())


def read_matrix_binary(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise NumericalError("not a CAPM file", where="capacitance.read_matrix_binary")
    version, M, _ = struct.unpack("<III", raw[4:16])
    if version != FORMAT_VERSION:
        raise NumericalError(f"unsupported CAPM version {version}", where="capacitance.read_matrix_binary")
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != M * M:
        raise NumericalError("truncated CAPM payload", where="capacitance.read_matrix_binary")
    return data.reshape(M, M).copy()
