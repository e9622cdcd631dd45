"""Lattices, resonator cells, finite index sets and Brillouin-zone grids.

Lengths are in units of the lattice constant unless a generator says
otherwise.  Lattice points are stored both as integer coordinates (in the
basis of lattice vectors) and as Cartesian points in R^3.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateLattice, IndexOutOfRange, OverlapError, Unsupported

TWO_PI = 2.0 * math.pi
DILUTE_RATIO = 0.2


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LatticeSpec:
    d: int
    vectors: np.ndarray       # (d, 3)
    dual_vectors: np.ndarray  # (d, 3), alpha_i . l_j = 2 pi delta_ij
    cell_measure: float

    @property
    def zone_measure(self) -> float:
        """Measure |Y*| of the Brillouin zone."""
        return TWO_PI ** self.d / self.cell_measure

    def point(self, coords) -> np.ndarray:
        """Cartesian point(s) for integer coordinate array(s) of shape (..., d)."""
        return np.asarray(coords, dtype=float) @ self.vectors

    def reduce(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Split ``z = z_red + l`` with ``l`` in the lattice and the in-plane
        part of ``z_red`` in the centred unit cell.  Returns ``(z_red, l)``."""
        z = np.asarray(z, dtype=float)
        frac = self.dual_vectors @ z / TWO_PI
        shift = np.round(frac)
        l = shift @ self.vectors
        return z - l, l

    def is_hexagonal(self) -> bool:
        if self.d != 2:
            return False
        a, b = self.vectors
        cos = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
        return abs(np.linalg.norm(a) - np.linalg.norm(b)) < 1e-12 * np.linalg.norm(a) and abs(cos - 0.5) < 1e-12


def make_lattice(d: int, vectors: Sequence[Sequence[float]]) -> LatticeSpec:
    """Build a lattice of dimension ``d`` from ``d`` vectors in R^3.

    The vectors must lie in the span of the first ``d`` coordinate axes.  The
    dual basis is the unique basis of that span with ``a_i . l_j = 2 pi delta_ij``.
    """
    where = "geometry.make_lattice"
    if d not in (1, 2, 3):
        raise Unsupported(f"lattice dimension must be 1, 2 or 3, got {d}", where=where)
    vecs = np.zeros((d, 3))
    raw = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if len(raw) != d:
        raise DegenerateLattice(f"expected {d} lattice vectors, got {len(raw)}", where=where)
    for i, v in enumerate(raw):
        if v.size > 3:
            raise DegenerateLattice("lattice vectors live in R^3", where=where)
        vecs[i, : v.size] = v
    if np.any(np.abs(vecs[:, d:]) > 0.0):
        raise Unsupported("lattice vectors must lie in the span of the first d axes", where=where)
    gram = vecs @ vecs.T
    scale = float(np.prod(np.diag(gram)))
    det = float(np.linalg.det(gram))
    if scale <= 0.0 or det <= 1e-12 * scale:
        raise DegenerateLattice("lattice vectors are linearly dependent", where=where)
    dual = TWO_PI * np.linalg.solve(gram, vecs)
    return LatticeSpec(d=d, vectors=_frozen(vecs), dual_vectors=_frozen(dual), cell_measure=math.sqrt(det))


def require_sum_dimension(lattice: LatticeSpec, where: str) -> None:
    if lattice.d not in (1, 2):
        raise Unsupported(f"numerics are implemented for d = 1, 2 only (got d = {lattice.d})", where=where)


# --------------------------------------------------------------------------
# resonators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonatorCell:
    centers: np.ndarray  # (N, 3)
    radii: np.ndarray    # (N,)
    dilute_warning: bool = False

    @property
    def N(self) -> int:
        return len(self.radii)


def _shell_coords(d: int, shells: int = 2) -> np.ndarray:
    rng = range(-shells, shells + 1)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=int)


def make_cell(lattice: LatticeSpec, centers, radii) -> ResonatorCell:
    """Validate sphere centres/radii against every translate in two shells."""
    where = "geometry.make_cell"
    c = np.zeros((len(centers), 3))
    for i, z in enumerate(centers):
        z = np.asarray(z, dtype=float).ravel()
        c[i, : z.size] = z
    r = np.asarray(radii, dtype=float).ravel()
    if r.size == 1 and len(c) > 1:
        r = np.full(len(c), r[0])
    if len(r) != len(c) or len(c) == 0:
        raise OverlapError("need one radius per resonator", where=where)
    if np.any(r <= 0):
        raise OverlapError("radii must be positive", where=where)
    shifts = lattice.point(_shell_coords(lattice.d))
    min_sep = math.inf
    for i, j in itertools.product(range(len(c)), repeat=2):
        for m, l in zip(_shell_coords(lattice.d), shifts):
            if i == j and not np.any(m):
                continue
            dist = float(np.linalg.norm(c[i] + l - c[j]))
            if dist <= r[i] + r[j]:
                raise OverlapError(f"spheres {i} and {j} (shift {tuple(int(v) for v in m)}) intersect", where=where)
            min_sep = min(min_sep, dist)
    dilute = bool(r.max() / min_sep > DILUTE_RATIO)
    return ResonatorCell(centers=_frozen(c), radii=_frozen(r), dilute_warning=dilute)


# --------------------------------------------------------------------------
# finite index sets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteLatticeIndex:
    """Ordered finite set of lattice points (lexicographic in integer coords).

    ``r`` is the truncation radius when the set is ``{m : |m| < r}`` and
    ``None`` for rectangular blocks of cells.
    """

    r: float | None
    coords: np.ndarray  # (K, d) int
    points: np.ndarray  # (K, 3)

    @property
    def count(self) -> int:
        return len(self.coords)

    def extent(self) -> np.ndarray:
        """Number of distinct integer coordinates along each lattice direction."""
        return self.coords.max(axis=0) - self.coords.min(axis=0) + 1

    def position(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in m): k for k, m in enumerate(self.coords)}


def _lex(coords: np.ndarray) -> np.ndarray:
    order = np.lexsort(coords.T[::-1])
    return coords[order]


def index_set(lattice: LatticeSpec, r: float) -> FiniteLatticeIndex:
    """All lattice points with ``|m| < r`` (strict)."""
    if r <= 0:
        raise ValueError("truncation radius must be positive")
    bounds = [int(math.floor(r * np.linalg.norm(a) / TWO_PI)) + 1 for a in lattice.dual_vectors]
    box = np.array(list(itertools.product(*[range(-b, b + 1) for b in bounds])), dtype=int)
    pts = lattice.point(box)
    keep = np.linalg.norm(pts, axis=1) < r
    coords = _lex(box[keep])
    return FiniteLatticeIndex(r=float(r), coords=_frozen(coords), points=_frozen(lattice.point(coords)))


def block_index(lattice: LatticeSpec, shape: Sequence[int] | int) -> FiniteLatticeIndex:
    """Rectangular block of cells ``0 <= m_i < shape[i]`` in lattice coordinates."""
    if isinstance(shape, (int, np.integer)):
        shape = [int(shape)] * lattice.d
    if len(shape) != lattice.d or min(shape) < 1:
        raise ValueError(f"block shape must have {lattice.d} positive entries")
    coords = np.array(list(itertools.product(*[range(n) for n in shape])), dtype=int).reshape(-1, lattice.d)
    return FiniteLatticeIndex(r=None, coords=_frozen(coords), points=_frozen(lattice.point(coords)))


# --------------------------------------------------------------------------
# Brillouin zone
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BrillouinGrid:
    n: int
    fractions: np.ndarray  # (K, d) coordinates in the dual basis, in (-1/2, 1/2)
    alphas: np.ndarray     # (K, 3)
    weights: np.ndarray    # (K,), sum = |Y*|

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.fractions.shape[1]

    def __len__(self) -> int:
        return len(self.alphas)


def _midpoints(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n - 0.5


def brillouin_grid(lattice: LatticeSpec, n: int) -> BrillouinGrid:
    """Midpoint grid with ``n`` samples per dual direction; never contains 0.

    ``n`` must be even: an odd midpoint grid would sample ``alpha = 0``.
    """
    if n < 2 or n % 2:
        raise ValueError(f"Brillouin grid needs an even n >= 2, got {n}")
    axis = _midpoints(n)
    fr = np.array(list(itertools.product(axis, repeat=lattice.d))).reshape(-1, lattice.d)
    alphas = fr @ lattice.dual_vectors
    w = np.full(len(fr), lattice.zone_measure / n ** lattice.d)
    return BrillouinGrid(n=n, fractions=_frozen(fr), alphas=_frozen(alphas), weights=_frozen(w))


def high_symmetry_points(lattice: LatticeSpec) -> dict[str, np.ndarray]:
    """Named zone points (Cartesian).  Hexagonal lattices get K; others X, M."""
    b = lattice.dual_vectors
    if lattice.d == 1:
        return {"G": np.zeros(3), "X": 0.5 * b[0]}
    if lattice.is_hexagonal():
        return {"G": np.zeros(3), "K": (2 * b[0] + b[1]) / 3, "M": 0.5 * b[0]}
    return {"G": np.zeros(3), "X": 0.5 * b[0], "M": 0.5 * (b[0] + b[1])}


def brillouin_path(lattice: LatticeSpec, labels: Sequence[str], n_per_leg: int) -> tuple[np.ndarray, np.ndarray, list[tuple[float, str]]]:
    """Piecewise-linear path through named points, leg end points included.

    The zone centre is skipped wherever it falls on the path since the
    quasi-periodic problem is not posed there.  Returns
    ``(alphas, arclength, ticks)``.
    """
    pts = high_symmetry_points(lattice)
    alphas, s, ticks = [], [], []
    offset = 0.0
    t = np.arange(1, n_per_leg + 1) / n_per_leg
    for a, b in zip(labels[:-1], labels[1:]):
        pa, pb = pts[a], pts[b]
        length = float(np.linalg.norm(pb - pa))
        ticks.append((offset, a))
        leg = pa + t[:, None] * (pb - pa)
        keep = np.linalg.norm(leg, axis=1) > 1e-12
        alphas.append(leg[keep])
        s.append((offset + t * length)[keep])
        offset += length
    ticks.append((offset, labels[-1]))
    return np.vstack(alphas), np.concatenate(s), ticks


def default_path(lattice: LatticeSpec) -> list[str]:
    if lattice.d == 1:
        return ["G", "X"]
    return ["G", "K", "M", "G"] if lattice.is_hexagonal() else ["G", "X", "M", "G"]


# --------------------------------------------------------------------------
# finite structures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteStructure:
    """A finite collection of spheres, each tagged with a lattice cell and a
    local slot.  Periodic truncations and defected chains share this type so
    the Floquet machinery does not care which one it is handed."""

    lattice: LatticeSpec
    N: int
    centers: np.ndarray  # (M, 3)
    radii: np.ndarray    # (M,)
    coords: np.ndarray   # (M, d) cell of each resonator
    local: np.ndarray    # (M,) slot in 0..N-1
    index: FiniteLatticeIndex = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.radii)

    def blocks(self, u) -> np.ndarray:
        """Rearrange a length-M vector into per-cell blocks of shape (count, N)."""
        u = np.asarray(u)
        if u.shape[0] != self.M:
            raise ValueError(f"vector has length {u.shape[0]}, structure has {self.M} resonators")
        pos = self.index.position()
        rows = np.array([pos[tuple(int(v) for v in m)] for m in self.coords])
        out = np.zeros((self.index.count, self.N) + u.shape[1:], dtype=u.dtype)
        out[rows, self.local] = u
        return out

    def check_disjoint(self) -> None:
        if self.M < 2:
            return
        dist = pdist(self.centers)
        i, j = np.triu_indices(self.M, k=1)
        bad = dist <= self.radii[i] + self.radii[j]
        if np.any(bad):
            k = int(np.argmax(bad))
            raise OverlapError(f"resonators {i[k]} and {j[k]} intersect", where="geometry.FiniteStructure")


def periodic_structure(lattice: LatticeSpec, cell: ResonatorCell, index: FiniteLatticeIndex) -> FiniteStructure:
    """Truncation of the periodic system to ``index``; rows ordered by cell then slot."""
    K, N = index.count, cell.N
    centers = (index.points[:, None, :] + cell.centers[None, :, :]).reshape(K * N, 3)
    radii = np.tile(cell.radii, K)
    coords = np.repeat(index.coords, N, axis=0)
    local = np.tile(np.arange(N), K)
    return FiniteStructure(lattice, N, _frozen(centers), _frozen(radii), _frozen(coords), _frozen(local), index)


def assign_cells(lattice: LatticeSpec, cell: ResonatorCell, centers, radii) -> FiniteStructure:
    """Tag arbitrary sphere positions with the nearest periodic site (cell, slot)."""
    centers = np.asarray(centers, dtype=float)
    coords, local = [], []
    seen = set()
    for x in centers:
        best = None
        for i, z in enumerate(cell.centers):
            frac = lattice.dual_vectors @ (x - z) / TWO_PI
            m = np.round(frac).astype(int)
            dist = float(np.linalg.norm(x - z - lattice.point(m)))
            if best is None or dist < best[0] - 1e-12:
                best = (dist, tuple(int(v) for v in m), i)
        key = (best[1], best[2])
        if key in seen:
            raise OverlapError(f"two resonators map to cell {best[1]} slot {best[2]}", where="geometry.assign_cells")
        seen.add(key)
        coords.append(best[1])
        local.append(best[2])
    coords = np.array(coords, dtype=int).reshape(-1, lattice.d)
    uniq = _lex(np.unique(coords, axis=0))
    index = FiniteLatticeIndex(r=None, coords=_frozen(uniq), points=_frozen(lattice.point(uniq)))
    s = FiniteStructure(lattice, cell.N, _frozen(centers), _frozen(np.asarray(radii, dtype=float)),
                        _frozen(coords), _frozen(np.array(local)), index)
    s.check_disjoint()
    return s


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Defect:
    """Aperiodic finite structure plus an optional material defect
    (``site`` is a 0-based resonator row, ``factor`` multiplies its row and
    column symmetrically)."""

    structure: FiniteStructure
    site: int | None = None
    factor: float = 1.0


def monomer_chain(radius: float = 0.1, lattice_constant: float = 1.0):
    lat = make_lattice(1, [[lattice_constant, 0, 0]])
    return lat, make_cell(lat, [[0, 0, 0]], [radius]), None


def ssh_dimer(radius: float = 0.1, s1: float = 0.4, s2: float = 0.6):
    lat = make_lattice(1, [[s1 + s2, 0, 0]])
    return lat, make_cell(lat, [[0, 0, 0], [s1, 0, 0]], [radius, radius]), None


def square_dimer(radius: float = 0.1, lattice_constant: float = 1.0, separation: float = 0.4):
    lat = make_lattice(2, [[lattice_constant, 0, 0], [0, lattice_constant, 0]])
    h = separation / 2
    return lat, make_cell(lat, [[-h, 0, 0], [h, 0, 0]], [radius, radius]), None


def honeycomb(radius: float = 0.1, lattice_constant: float = 1.0):
    a = lattice_constant
    lat = make_lattice(2, [[a, 0, 0], [a / 2, a * math.sqrt(3) / 2, 0]])
    z2 = (lat.vectors[0] + lat.vectors[1]) / 3  # nearest-neighbour distance a / sqrt(3)
    return lat, make_cell(lat, [[0, 0, 0], z2], [radius, radius]), None


def point_defect_chain(radius: float = 0.1, lattice_constant: float = 1.0, cells: int = 51,
                       defect_site: int = 26, defect_factor: float = 2.0):
    """Monomer chain of ``cells`` resonators; ``defect_site`` is 1-based."""
    lat, cell, _ = monomer_chain(radius, lattice_constant)
    if not 1 <= defect_site <= cells:
        raise IndexOutOfRange(f"defect_site {defect_site} outside 1..{cells}", where="geometry.generator")
    if defect_factor <= 0:
        raise ValueError("defect_factor must be positive")
    s = periodic_structure(lat, cell, block_index(lat, cells))
    return lat, cell, Defect(structure=s, site=defect_site - 1, factor=float(defect_factor))


def interface_spacings(sites: int, s1: float, s2: float) -> list[float]:
    """Spacings of an SSH chain with a mirror interface at the central site.

    Each half starts from its outer end with ``s1``, so for 101 sites the two
    ``s2`` spacings meet at the 51st resonator.
    """
    if sites < 3 or sites % 2 == 0:
        raise ValueError("interface chain needs an odd number of sites >= 3")
    half = [s1 if k % 2 == 0 else s2 for k in range((sites - 1) // 2)]
    return half + half[::-1]


def ssh_interface_chain(radius: float = 0.1, s1: float = 0.4, s2: float = 0.6, sites: int = 101):
    lat, cell, _ = ssh_dimer(radius, s1, s2)
    x = np.concatenate([[0.0], np.cumsum(interface_spacings(sites, s1, s2))])
    centers = np.zeros((sites, 3))
    centers[:, 0] = x
    s = assign_cells(lat, cell, centers, np.full(sites, radius))
    return lat, cell, Defect(structure=s, site=None, factor=1.0)


GENERATORS = {
    "monomer_chain": monomer_chain,
    "ssh_dimer": ssh_dimer,
    "square_dimer": square_dimer,
    "honeycomb": honeycomb,
    "point_defect_chain": point_defect_chain,
    "ssh_interface_chain": ssh_interface_chain,
}


def generator(kind: str, **params):
    """Canonical structures: returns ``(lattice, cell, defect_or_None)``."""
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise Unsupported(f"unknown geometry kind {kind!r}", where="geometry.generator") from None
    return fn(**params)


def write_geometry_csv(structure: FiniteStructure, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "R", "cell_m1", "cell_m2", "local_index"])
        for c, rad, m, i in zip(structure.centers, structure.radii, structure.coords, structure.local):
            m1 = int(m[0])
            m2 = int(m[1]) if len(m) > 1 else 0
            w.writerow([repr(float(c[0])), repr(float(c[1])), repr(float(c[2])), repr(float(rad)), m1, m2, int(i)])
