import math

import numpy as np
import pytest

from lattice_spectra.geometry import generator, make_cell, make_lattice

FOUR_PI = 4.0 * math.pi


@pytest.fixture(scope="session")
def chain():
    lat, cell, _ = generator("monomer_chain")
    return lat, cell


@pytest.fixture(scope="session")
def dimer():
    lat, cell, _ = generator("ssh_dimer")
    return lat, cell


@pytest.fixture(scope="session")
def square():
    lat = make_lattice(2, [[1, 0, 0], [0, 1, 0]])
    return lat, make_cell(lat, [[0, 0, 0]], [0.1])


@pytest.fixture(scope="session")
def honey():
    lat, cell, _ = generator("honeycomb")
    return lat, cell


def chain_closed_form(alpha, R=0.1, L=1.0):
    """Quasi-periodic capacitance of a monomer chain from the log-sine series
    sum_{m != 0} e^{i a m}/|m| = -2 ln|2 sin(a/2)|."""
    return FOUR_PI / (1.0 / R - (2.0 / L) * np.log(2.0 * np.abs(np.sin(alpha * L / 2.0))))


def smooth_step(t):
    """C-infinity window: 1 on [0, 1/2], 0 on [1, inf)."""
    t = np.asarray(t, dtype=float)
    u = np.clip((t - 0.5) / 0.5, 0.0, 1.0)
    f = lambda s: np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    a, b = f(1.0 - u), f(u)
    return a / (a + b)


def brute_force_2d(z, alpha, lattice, cutoff=3000):
    """Windowed brute-force quasi-periodic sum on a 2D lattice.

    Plain partial sums oscillate with amplitude O(1/cutoff).  Weighting by a
    window that equals 1 near the origin and vanishes smoothly at |m| = cutoff
    leaves an error that decays faster than any power of 1/cutoff (Poisson
    summation at the nonzero frequencies G - alpha).
    """
    z = np.asarray(z, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    rng = np.arange(-cutoff, cutoff + 1)
    out = 0j
    for m1 in rng:
        pts = m1 * lattice.vectors[0] + np.outer(rng, lattice.vectors[1])
        w = smooth_step(np.sqrt(m1 * m1 + rng * rng) / cutoff)
        rho = np.linalg.norm(z + pts, axis=1)
        ok = (rho > 0) & (w > 0)
        out += np.sum(w[ok] * np.exp(1j * (pts[ok] @ alpha)) / (FOUR_PI * rho[ok]))
    return out
