"""Quasi-periodic potential kernel

    Q(z; alpha) = sum_{m in Lattice} exp(i alpha.m) / (4 pi |z + m|),

with the singular term ``z + m = 0`` left out.  The kernel is the positive
Coulomb kernel; callers that need the negative Laplace Green's function flip
the sign themselves.

Chains (d = 1) use direct summation with the large-|m| expansion of
``1/|z + m|`` subtracted term by term and resummed in closed form through
polylogarithms on the unit circle.  Screens (d = 2) use Ewald splitting.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import erfc, erfcx, eval_legendre, factorial, zeta

from .errors import AlphaZero, NoConvergence, Unsupported
from .geometry import TWO_PI, LatticeSpec

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
HARD_CUTOFF_1D = 10_000_000
HARD_CUTOFF_2D = 2_000_000  # lattice points per part
EXPANSION_ORDER = 10
FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SumResult:
    value: complex
    terms_used: int
    cutoffs: tuple[float, ...]
    estimated_error: float


# --------------------------------------------------------------------------
# polylogarithm on the unit circle
# --------------------------------------------------------------------------

_SERIES_TERMS = 64


@lru_cache(maxsize=None)
def _polylog_coeffs(s: int) -> np.ndarray:
    k = np.arange(_SERIES_TERMS)
    c = np.zeros(_SERIES_TERMS)
    mask = k != s - 1
    c[mask] = zeta((s - k[mask]).astype(float)) / factorial(k[mask])
    return c


def polylog_unit(s: int, theta) -> np.ndarray:
    """``Li_s(exp(i theta))`` for integer ``s >= 1`` and real ``theta`` not a
    multiple of 2 pi.  Vectorised over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    # reduce to (-pi, pi] only where needed so tiny angles keep full precision
    t = np.where(np.abs(theta) <= math.pi, theta, np.remainder(theta + math.pi, TWO_PI) - math.pi)
    t = np.where(t == -math.pi, math.pi, t)
    if s == 1:
        # 1 - e^{it} = -2i sin(t/2) e^{it/2}, free of cancellation near t = 0
        return -np.log(np.abs(2.0 * np.sin(0.5 * t))) - 1j * (0.5 * t - 0.5 * math.pi * np.sign(t))
    mu = 1j * t
    # expansion about mu = 0; converges for |mu| < 2 pi with ratio |t| / 2 pi <= 1/2
    c = _polylog_coeffs(s)
    series = np.polynomial.polynomial.polyval(mu, c)
    harmonic = sum(1.0 / j for j in range(1, s))
    at = np.where(t == 0, 1.0, np.abs(t))
    log_term = np.log(at) - 0.5j * math.pi * np.sign(t)  # principal log(-i t)
    out = series + mu ** (s - 1) / math.factorial(s - 1) * (harmonic - log_term)
    return np.where(t == 0, zeta(float(s)), out)


# --------------------------------------------------------------------------
# d = 1
# --------------------------------------------------------------------------

def _as_alpha_vector(alpha) -> np.ndarray:
    a = np.zeros(3)
    v = np.atleast_1d(np.asarray(alpha, dtype=float)).ravel()
    a[: v.size] = v
    return a


def _check_alpha(lattice: LatticeSpec, alpha: np.ndarray, where: str) -> None:
    frac = lattice.vectors @ alpha / TWO_PI
    if np.all(np.abs(frac - np.round(frac)) < 1e-14):
        raise AlphaZero("alpha is zero modulo the dual lattice", where=where)


def _direct_1d_values(z: np.ndarray, thetas: np.ndarray, L: float, tol: float, where: str):
    """Vectorised core.  Returns ``(values, M, error_bound)`` for the reduced
    offset ``z`` (|z . e| <= L/2) and phases ``theta = alpha L``."""
    x = float(z[0])
    r = float(np.linalg.norm(z))
    li = {}

    def Li(n):
        if n not in li:
            li[n] = (polylog_unit(n, thetas), polylog_unit(n, -thetas))
        return li[n]

    if r == 0.0:
        plus, minus = Li(1)
        return (plus + minus) / (FOUR_PI * L), 0, 0.0

    c = x / r
    p = EXPANSION_ORDER
    coef = np.array([r ** n * eval_legendre(n, c) / L ** (n + 1) for n in range(p + 1)])
    asym = np.zeros_like(thetas, dtype=complex)
    for n in range(p + 1):
        plus, minus = Li(n + 1)
        asym += coef[n] * ((-1) ** n * plus + minus)

    # remainder: per-term bound (r/s)^(p+1)/(s-r) for s = |m| L > r
    def tail(M):
        s = M * L
        if s <= r:
            return math.inf
        return 2.0 * r ** (p + 1) / ((s - r) * L ** (p + 1)) * M ** (-p) / p / FOUR_PI

    M = max(2, int(math.ceil(2 * r / L)) + 1)
    while tail(M) > 0.5 * tol:
        M *= 2
        if M > HARD_CUTOFF_1D:
            raise NoConvergence(f"remainder above tolerance at {HARD_CUTOFF_1D} terms", where=where)
    lo, hi = M // 2, M
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail(mid) <= 0.5 * tol:
            hi = mid
        else:
            lo = mid
    M = hi
    m = np.arange(-M, M + 1)
    s = np.abs(m) * L
    pts = np.zeros((len(m), 3))
    pts[:] = z
    pts[:, 0] += m * L
    f = 1.0 / np.linalg.norm(pts, axis=1)
    A = np.zeros(len(m))
    nz = m != 0
    for n in range(p + 1):
        sign = np.where(m > 0, (-1.0) ** n, 1.0)
        A[nz] += sign[nz] * r ** n * eval_legendre(n, c) / s[nz] ** (n + 1)
    rem = f - A
    values = asym + np.exp(1j * np.outer(thetas, m)) @ rem
    err = tail(M) + 1e-16 * (len(m) + np.abs(rem).sum())
    return values / FOUR_PI, M, err


def direct_sum_1d(z, alpha, lattice: LatticeSpec, tol: float = DEFAULT_TOL, dump: str | Path | None = None) -> SumResult:
    """Q(z; alpha) on a chain.

    ``dump`` names a CSV file receiving the partial sums of the remainder
    series (debugging aid).
    """
    where = "lattice_sums.direct_sum_1d"
    if lattice.d != 1:
        raise Unsupported("direct_sum_1d needs a d = 1 lattice", where=where)
    if tol < 1e-14:
        raise ValueError("tolerance must be >= 1e-14")
    a = _as_alpha_vector(alpha)
    _check_alpha(lattice, a, where)
    z = np.asarray(z, dtype=float).reshape(3)
    z_red, l = lattice.reduce(z)
    L = float(lattice.vectors[0, 0])
    theta = float(a[0] * L)
    vals, M, err = _direct_1d_values(z_red, np.array([theta]), L, tol, where)
    value = complex(vals[0] * np.exp(-1j * (a @ l)))
    if dump is not None:
        _dump_partial_sums(dump, z_red, theta, L, M)
    return SumResult(value=value, terms_used=2 * M + 1, cutoffs=(float(M),), estimated_error=float(err))


def _dump_partial_sums(path, z, theta, L, M) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cutoff", "re", "im"])
        total = 0j
        for k in range(0, M + 1):
            for m in ([0] if k == 0 else [-k, k]):
                d = np.linalg.norm(z + np.array([m * L, 0, 0]))
                if d > 0:
                    total += np.exp(1j * theta * m) / (FOUR_PI * d)
            w.writerow([k, repr(total.real), repr(total.imag)])


def direct_sum_1d_many(z, thetas, lattice: LatticeSpec, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Q(z; alpha) for many ``alpha`` along the chain axis (``thetas = alpha``,
    scalar components along ``l_1 / |l_1|``)."""
    where = "lattice_sums.direct_sum_1d"
    L = float(lattice.vectors[0, 0])
    th = np.asarray(thetas, dtype=float) * L
    red = np.remainder(th + math.pi, TWO_PI) - math.pi
    if np.any(np.abs(red) < 1e-14):
        raise AlphaZero("alpha is zero modulo the dual lattice", where=where)
    z_red, l = lattice.reduce(np.asarray(z, dtype=float).reshape(3))
    vals, _, _ = _direct_1d_values(z_red, th, L, tol, where)
    return vals * np.exp(-1j * np.asarray(thetas) * l[0])


# --------------------------------------------------------------------------
# d = 2
# --------------------------------------------------------------------------

def default_eta(lattice: LatticeSpec) -> float:
    return math.sqrt(math.pi) / math.sqrt(lattice.cell_measure)


def _erfc_int(x: float) -> float:
    """int_x^inf erfc(t) dt."""
    return math.exp(-x * x) / math.sqrt(math.pi) - x * math.erfc(x)


def _exp_erfc(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """exp(b) * erfc(a) without overflow."""
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = erfcx(a[pos]) * np.exp(b[pos] - a[pos] ** 2)
    out[~pos] = np.exp(b[~pos]) * erfc(a[~pos])
    return out


def _enumerate(basis: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Integer combinations n @ basis with |n @ basis - center| < radius."""
    gram = basis @ basis.T
    dual = np.linalg.solve(gram, basis)  # rows: dual directions, dual_i . basis_j = delta_ij
    c = dual @ center
    half = [radius * np.linalg.norm(v) for v in dual]
    rng = [np.arange(int(math.floor(ci - h)) - 1, int(math.ceil(ci + h)) + 2) for ci, h in zip(c, half)]
    n = np.stack(np.meshgrid(*rng, indexing="ij"), axis=-1).reshape(-1, len(rng))
    pts = n @ basis
    keep = np.linalg.norm(pts - center, axis=1) < radius
    return pts[keep]


def ewald_sum_2d(z, alpha, lattice: LatticeSpec, tol: float = DEFAULT_TOL, eta: float | None = None) -> SumResult:
    """Q(z; alpha) on a screen by Ewald splitting with parameter ``eta``."""
    where = "lattice_sums.ewald_sum_2d"
    if lattice.d != 2:
        raise Unsupported("ewald_sum_2d needs a d = 2 lattice", where=where)
    if tol < 1e-14:
        raise ValueError("tolerance must be >= 1e-14")
    a = _as_alpha_vector(alpha)
    a[2] = 0.0
    _check_alpha(lattice, a, where)
    eta = default_eta(lattice) if eta is None else float(eta)
    z = np.asarray(z, dtype=float).reshape(3)
    z_red, l = lattice.reduce(z)
    phase = np.exp(-1j * (a @ l))
    A = lattice.cell_measure
    zp = z_red.copy()
    zp[2] = 0.0
    z3 = float(z_red[2])
    budget = 0.5 * tol * FOUR_PI  # per part, for the unnormalised sum

    # real space
    def real_tail(R):
        return 2.0 * (TWO_PI / A) / eta * _erfc_int(eta * R)

    Rc = 1.0 / eta
    while real_tail(Rc) > budget:
        Rc *= 1.1
    pts = _enumerate(lattice.vectors[:, :2], -zp[:2], Rc)
    if len(pts) > HARD_CUTOFF_2D:
        raise NoConvergence("real-space cutoff exceeds the hard limit", where=where)
    m = np.zeros((len(pts), 3))
    m[:, :2] = pts
    rho = np.linalg.norm(z_red + m, axis=1)
    self_term = rho == 0.0
    ph = np.exp(1j * (m @ a))
    real = np.sum(ph[~self_term] * erfc(eta * rho[~self_term]) / rho[~self_term])
    if np.any(self_term):
        real -= ph[self_term][0] * 2.0 * eta / math.sqrt(math.pi)

    # reciprocal space
    def recip_tail(qc):
        x = qc / (2 * eta) - eta * abs(z3)
        return math.inf if x <= 0 else 2.0 * 2.0 * eta * _erfc_int(x)

    qc = 2 * eta * (1.0 + eta * abs(z3))
    while recip_tail(qc) > budget:
        qc *= 1.1
    G = _enumerate(lattice.dual_vectors[:, :2], a[:2], qc)
    if len(G) > HARD_CUTOFF_2D:
        raise NoConvergence("reciprocal cutoff exceeds the hard limit", where=where)
    q = G - a[:2]
    qn = np.linalg.norm(q, axis=1)
    h = qn / (2 * eta)
    bracket = _exp_erfc(qn * z3, h + eta * z3) + _exp_erfc(-qn * z3, h - eta * z3)
    recip = math.pi / A * np.sum(np.exp(1j * (q @ zp[:2])) / qn * bracket)

    value = complex(phase * (real + recip) / FOUR_PI)
    err = (real_tail(Rc) + recip_tail(qc)) / FOUR_PI + 1e-16 * (len(pts) + len(G))
    return SumResult(value=value, terms_used=len(pts) + len(G), cutoffs=(Rc, qc), estimated_error=float(err))


def lattice_sum(z, alpha, lattice: LatticeSpec, tol: float = DEFAULT_TOL) -> complex:
    if lattice.d == 1:
        return direct_sum_1d(z, alpha, lattice, tol).value
    if lattice.d == 2:
        return ewald_sum_2d(z, alpha, lattice, tol).value
    raise Unsupported("lattice sums are implemented for d = 1, 2", where="lattice_sums.lattice_sum")
